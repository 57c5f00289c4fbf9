//! Pathwise time stepping.
//!
//! [`HeatStepper`] and [`WaveStepper`] advance the full stochastic equations
//! `u_t = Delta u + f(u) + sigma W_t` and `nu u_tt + u_t = Delta u + f(u) + sigma W_t`
//! with an exponential Euler step: the linear part and the Gaussian
//! convolution are exact, the nonlinearity is frozen over the step. Coupled
//! runs feed both steppers the same normals, so they see the same Wiener
//! increments.
//!
//! [`RandomHeatFlow`] integrates the random equation
//! `v_t = Delta v + f(v + z(t))` with implicit two-step exponential
//! quadrature panels. It shares its quadrature with the Lyapunov-Perron
//! solver, so forward runs and backward fixed points live on the same
//! discrete dynamics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{phi1, phi2, Panel};
use crate::noise::{NoisePath, NORMALS_PER_MODE};
use crate::ou::{NodeForcing, StepKernels};
use crate::par::Execution;
use crate::spectral::{Nonlinearity, QSpectrum, SineTransform, SpectralField};

/// Any mode beyond this magnitude counts as blow-up.
pub const BLOW_UP: f64 = 1e8;

fn guard(u: &[f64], time: f64) -> Result<()> {
    for (i, x) in u.iter().enumerate() {
        if !x.is_finite() || x.abs() > BLOW_UP {
            return Err(Error::BlowUp { time, mode: i + 1 });
        }
    }
    Ok(())
}

/// Exponential Euler for the stochastic heat equation.
#[derive(Debug, Clone)]
pub struct HeatStepper {
    kernels: StepKernels,
    transform: SineTransform,
    f: Nonlinearity,
    scale: Vec<f64>,
}

impl HeatStepper {
    pub fn new(q: &QSpectrum, f: Nonlinearity, dt: f64, phys_points: usize) -> Result<Self> {
        let m = q.modes();
        Ok(Self {
            kernels: StepKernels::new(m, dt, None)?,
            transform: SineTransform::new(m, phys_points),
            f,
            scale: (1..=m).map(|k| q.rate(k).sqrt()).collect(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.kernels.dt
    }

    /// One step from `u` using the step's `4 M` normals. `time` is only used
    /// to label a blow-up.
    pub fn step(&self, u: &SpectralField, normals: &[f64], time: f64) -> Result<SpectralField> {
        let m = u.modes();
        let mut fk = vec![0.0; m];
        let mut scratch = vec![0.0; self.transform.points()];
        self.transform.nemytskii_into(&self.f, u.coeffs(), None, &mut fk, &mut scratch);
        let mut out = vec![0.0; m];
        for (i, ks) in self.kernels.modes.iter().enumerate() {
            let w = ks.noise(&normals[i * NORMALS_PER_MODE..(i + 1) * NORMALS_PER_MODE], self.scale[i]);
            out[i] = ks.heat_decay * u[i] + ks.heat_forcing * fk[i] + w[1];
        }
        guard(&out, time)?;
        SpectralField::from_coeffs(out)
    }
}

/// Exponential Euler for the stochastic damped wave equation in the
/// variables `(u, u_t)`.
#[derive(Debug, Clone)]
pub struct WaveStepper {
    kernels: StepKernels,
    transform: SineTransform,
    f: Nonlinearity,
    scale: Vec<f64>,
}

impl WaveStepper {
    pub fn new(q: &QSpectrum, f: Nonlinearity, nu: f64, dt: f64, phys_points: usize) -> Result<Self> {
        let m = q.modes();
        Ok(Self {
            kernels: StepKernels::new(m, dt, Some(nu))?,
            transform: SineTransform::new(m, phys_points),
            f,
            scale: (1..=m).map(|k| q.rate(k).sqrt()).collect(),
        })
    }

    pub fn step(
        &self,
        u: &SpectralField,
        ut: &SpectralField,
        normals: &[f64],
        time: f64,
    ) -> Result<(SpectralField, SpectralField)> {
        let m = u.modes();
        let mut fk = vec![0.0; m];
        let mut scratch = vec![0.0; self.transform.points()];
        self.transform.nemytskii_into(&self.f, u.coeffs(), None, &mut fk, &mut scratch);
        let mut nu_ = vec![0.0; m];
        let mut nv = vec![0.0; m];
        for (i, ks) in self.kernels.modes.iter().enumerate() {
            let ws = ks.wave.as_ref().expect("wave kernels");
            let w = ks.noise(&normals[i * NORMALS_PER_MODE..(i + 1) * NORMALS_PER_MODE], self.scale[i]);
            let p = &ws.propagator;
            nu_[i] = p[(0, 0)] * u[i] + p[(0, 1)] * ut[i] + ws.forcing[0] * fk[i] + w[2];
            nv[i] = p[(1, 0)] * u[i] + p[(1, 1)] * ut[i] + ws.forcing[1] * fk[i] + w[3];
        }
        guard(&nu_, time)?;
        guard(&nv, time)?;
        Ok((SpectralField::from_coeffs(nu_)?, SpectralField::from_coeffs(nv)?))
    }
}

/// Parameters of a coupled wave/heat run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpdeParams {
    pub nu: f64,
    pub q: QSpectrum,
    pub f: Nonlinearity,
    pub phys_points: usize,
}

/// A stored trajectory with its `L^2` norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub u: Vec<SpectralField>,
    /// `u_t` for the wave system.
    pub ut: Option<Vec<SpectralField>>,
    pub norms: Vec<f64>,
    pub seed: u64,
    pub dt: f64,
}

/// Both systems on `[0, T]` under one noise path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledRun {
    pub wave: TrajectoryRecord,
    pub heat: TrajectoryRecord,
    /// `sup_t ||u^nu(t) - u(t)||` over the grid.
    pub sup_diff: f64,
}

/// Runs the wave system from `(u0, u1)` and the heat system from `u0` on
/// `[0, t_end]`, driving both with the steps `0, 1, ...` of `noise`.
pub fn run_coupled(
    u0: &SpectralField,
    u1: &SpectralField,
    params: &SpdeParams,
    noise: &NoisePath,
    t_end: f64,
) -> Result<CoupledRun> {
    let m = u0.modes();
    if u1.modes() != m || params.q.modes() != m || noise.modes() != m {
        return Err(Error::ShapeMismatch { expected: m, found: u1.modes().min(params.q.modes()).min(noise.modes()) });
    }
    let dt = noise.dt();
    let steps = (t_end / dt).round() as usize;
    if noise.first_step() > 0 || noise.first_step() + (noise.steps() as i64) < steps as i64 {
        return Err(Error::OutsideGrid(t_end));
    }
    let heat = HeatStepper::new(&params.q, params.f.clone(), dt, params.phys_points)?;
    let wave = WaveStepper::new(&params.q, params.f.clone(), params.nu, dt, params.phys_points)?;

    let mut times = Vec::with_capacity(steps + 1);
    let mut hu = Vec::with_capacity(steps + 1);
    let mut wu = Vec::with_capacity(steps + 1);
    let mut wv = Vec::with_capacity(steps + 1);
    let (mut h, mut u, mut ut) = (u0.clone(), u0.clone(), u1.clone());
    times.push(0.0);
    hu.push(h.clone());
    wu.push(u.clone());
    wv.push(ut.clone());
    for n in 0..steps {
        let xi = noise.normals(n as i64)?;
        let t = (n + 1) as f64 * dt;
        h = heat.step(&h, xi, t)?;
        (u, ut) = wave.step(&u, &ut, xi, t)?;
        times.push(t);
        hu.push(h.clone());
        wu.push(u.clone());
        wv.push(ut.clone());
    }
    let sup_diff = hu
        .iter()
        .zip(&wu)
        .map(|(a, b)| (a - b).l2_norm())
        .fold(0.0, f64::max);
    let record = |u: Vec<SpectralField>, ut: Option<Vec<SpectralField>>| TrajectoryRecord {
        norms: u.iter().map(|x| x.l2_norm()).collect(),
        times: times.clone(),
        u,
        ut,
        seed: noise.seed(),
        dt,
    };
    Ok(CoupledRun {
        wave: record(wu, Some(wv)),
        heat: record(hu, None),
        sup_diff,
    })
}

/// Implicit exponential quadrature for `v_t = Delta v + g(v, t)` on the
/// refined node grid of a [`NodeForcing`]. Nodes are advanced two at a time
/// with a [`Panel`]; a single trailing step uses the trapezoid rule
///
/// ```text
/// v_new = e^{-k^2 h} v_old + h [(phi1 - phi2)(-k^2 h) g_old + phi2(-k^2 h) g_new]
/// ```
#[derive(Debug, Clone)]
pub struct RandomHeatFlow {
    transform: SineTransform,
    f: Nonlinearity,
    h: f64,
    decay: Vec<f64>,
    w_old: Vec<f64>,
    w_new: Vec<f64>,
    panels: Vec<Panel>,
}

/// Tolerance of the per-step fixed point.
const IMPLICIT_TOL: f64 = 1e-15;
const IMPLICIT_MAX_ITERS: usize = 100;

impl RandomHeatFlow {
    pub fn new(modes: usize, phys_points: usize, f: Nonlinearity, h: f64) -> Self {
        let mut decay = Vec::with_capacity(modes);
        let mut w_old = Vec::with_capacity(modes);
        let mut w_new = Vec::with_capacity(modes);
        let mut panels = Vec::with_capacity(modes);
        for k in 1..=modes {
            let mu = -((k * k) as f64);
            let z = mu * h;
            decay.push(z.exp());
            w_old.push(h * (phi1(z) - phi2(z)));
            w_new.push(h * phi2(z));
            panels.push(Panel::new(mu, h));
        }
        Self { transform: SineTransform::new(modes, phys_points), f, h, decay, w_old, w_new, panels }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn transform(&self) -> &SineTransform {
        &self.transform
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.f
    }

    /// `f(v + z)` in modal form.
    pub fn rhs(&self, v: &[f64], z: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.transform.nemytskii_into(&self.f, v, Some(z), out, scratch);
    }

    /// One trapezoid step; `g_old = f(v_old + z_old)` is passed in and
    /// `g_new` is returned through `g_out`.
    pub fn step(
        &self,
        v_old: &[f64],
        g_old: &[f64],
        z_new: &[f64],
        v_out: &mut [f64],
        g_out: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<()> {
        let m = v_old.len();
        let mut base = vec![0.0; m];
        for i in 0..m {
            base[i] = self.decay[i] * v_old[i] + self.w_old[i] * g_old[i];
            v_out[i] = base[i] + self.w_new[i] * g_old[i];
        }
        if self.f.is_zero() {
            g_out.iter_mut().for_each(|g| *g = 0.0);
            return Ok(());
        }
        let mut last = f64::INFINITY;
        for _ in 0..IMPLICIT_MAX_ITERS {
            self.rhs(v_out, z_new, g_out, scratch);
            let mut change = 0.0f64;
            let mut size = 0.0f64;
            for i in 0..m {
                let next = base[i] + self.w_new[i] * g_out[i];
                change = change.max((next - v_out[i]).abs());
                size = size.max(next.abs());
                v_out[i] = next;
            }
            last = change;
            if change <= IMPLICIT_TOL * (1.0 + size) {
                self.rhs(v_out, z_new, g_out, scratch);
                return Ok(());
            }
        }
        Err(Error::NoConvergence { iterations: IMPLICIT_MAX_ITERS, residual: last })
    }

    /// One panel of two steps. `z` holds the forcing at the two new nodes;
    /// the new states and right-hand sides are written to `v` and `g`.
    pub fn panel_step(
        &self,
        v_old: &[f64],
        g_old: &[f64],
        z: [&[f64]; 2],
        v: [&mut [f64]; 2],
        g: [&mut [f64]; 2],
        scratch: &mut [f64],
    ) -> Result<()> {
        let m = v_old.len();
        let [v1, v2] = v;
        let [g1, g2] = g;
        let mut base1 = vec![0.0; m];
        let mut base2 = vec![0.0; m];
        for i in 0..m {
            let p = &self.panels[i];
            base1[i] = p.e1 * v_old[i] + p.w1[0] * g_old[i];
            base2[i] = p.e2 * v_old[i] + p.w2[0] * g_old[i];
            g1[i] = g_old[i];
            g2[i] = g_old[i];
        }
        let update = |v1: &mut [f64], v2: &mut [f64], g1: &[f64], g2: &[f64]| {
            let mut change = 0.0f64;
            let mut size = 0.0f64;
            for i in 0..m {
                let p = &self.panels[i];
                let a = base1[i] + p.w1[1] * g1[i] + p.w1[2] * g2[i];
                let b = base2[i] + p.w2[1] * g1[i] + p.w2[2] * g2[i];
                change = change.max((a - v1[i]).abs()).max((b - v2[i]).abs());
                size = size.max(a.abs()).max(b.abs());
                v1[i] = a;
                v2[i] = b;
            }
            (change, size)
        };
        update(v1, v2, g1, g2);
        if self.f.is_zero() {
            g1.iter_mut().chain(g2.iter_mut()).for_each(|x| *x = 0.0);
            return Ok(());
        }
        let mut last = f64::INFINITY;
        for _ in 0..IMPLICIT_MAX_ITERS {
            self.rhs(v1, z[0], g1, scratch);
            self.rhs(v2, z[1], g2, scratch);
            let (change, size) = update(v1, v2, g1, g2);
            last = change;
            if change <= IMPLICIT_TOL * (1.0 + size) {
                self.rhs(v1, z[0], g1, scratch);
                self.rhs(v2, z[1], g2, scratch);
                return Ok(());
            }
        }
        Err(Error::NoConvergence { iterations: IMPLICIT_MAX_ITERS, residual: last })
    }

    /// States at nodes `n0..=n1` starting from `v0` at node `n0`.
    pub fn integrate(&self, v0: &[f64], forcing: &NodeForcing, n0: i64, n1: i64) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity((n1 - n0 + 1).max(1) as usize);
        self.integrate_with(v0, forcing, n0, n1, |_, v| out.push(v.to_vec()))?;
        Ok(out)
    }

    /// Like [`integrate`](Self::integrate) but hands each state to `visit`
    /// instead of storing it.
    pub fn integrate_with<F: FnMut(i64, &[f64])>(
        &self,
        v0: &[f64],
        forcing: &NodeForcing,
        n0: i64,
        n1: i64,
        mut visit: F,
    ) -> Result<()> {
        if n1 < n0 {
            return Err(Error::InvalidParameter("integration runs forward only".into()));
        }
        if !forcing.covers(n0, n1) {
            return Err(Error::OutsideGrid(n0 as f64 * forcing.step()));
        }
        let m = v0.len();
        let mut scratch = vec![0.0; self.transform.points()];
        let mut z = vec![0.0; m];
        let mut v = v0.to_vec();
        let mut g = vec![0.0; m];
        let mut v_next = vec![0.0; m];
        let mut g_next = vec![0.0; m];
        forcing.at(n0, &mut z);
        self.rhs(&v, &z, &mut g, &mut scratch);
        visit(n0, &v);
        let mut z2 = vec![0.0; m];
        let mut v_mid = vec![0.0; m];
        let mut g_mid = vec![0.0; m];
        let mut n = n0;
        while n + 2 <= n1 {
            forcing.at(n + 1, &mut z);
            forcing.at(n + 2, &mut z2);
            self.panel_step(&v, &g, [&z, &z2], [&mut v_mid, &mut v_next], [&mut g_mid, &mut g_next], &mut scratch)?;
            guard(&v_mid, (n + 1) as f64 * self.h)?;
            guard(&v_next, (n + 2) as f64 * self.h)?;
            visit(n + 1, &v_mid);
            visit(n + 2, &v_next);
            std::mem::swap(&mut v, &mut v_next);
            std::mem::swap(&mut g, &mut g_next);
            n += 2;
        }
        if n < n1 {
            forcing.at(n1, &mut z);
            self.step(&v, &g, &z, &mut v_next, &mut g_next, &mut scratch)?;
            guard(&v_next, n1 as f64 * self.h)?;
            visit(n1, &v_next);
        }
        Ok(())
    }

    /// Pullback approximation of the stationary solution `V*` of the random
    /// equation: start from 0 at node `lo - horizon_nodes` and return the
    /// states at nodes `lo..=hi`. Panels start at the first node, so an even
    /// `horizon_nodes` keeps them aligned with panels starting at `lo`.
    pub fn pullback(&self, forcing: &NodeForcing, lo: i64, hi: i64, horizon_nodes: i64) -> Result<Vec<Vec<f64>>> {
        let start = lo - horizon_nodes;
        let mut out = Vec::with_capacity((hi - lo + 1) as usize);
        let zero = vec![0.0; forcing.modes()];
        self.integrate_with(&zero, forcing, start, hi, |n, v| {
            if n >= lo {
                out.push(v.to_vec());
            }
        })?;
        Ok(out)
    }
}

/// Replica statistics of `sup_t ||u^nu - u||` over seeds `seed0..seed0+replicas`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkRow {
    pub nu: f64,
    pub replicas: usize,
    pub exceedance: f64,
    pub exceedance_se: f64,
    pub mean_sup_diff: f64,
    pub mean_se: f64,
    pub blow_ups: usize,
}

/// Monte Carlo of the coupled runs for one `nu`.
#[allow(clippy::too_many_arguments)]
pub fn sk_row(
    params: &SpdeParams,
    u0: &SpectralField,
    u1: &SpectralField,
    dt: f64,
    t_end: f64,
    delta: f64,
    seed0: u64,
    replicas: usize,
    exec: Execution,
) -> Result<SkRow> {
    let m = u0.modes();
    let steps = (t_end / dt).round() as usize;
    let results: Vec<Result<Option<f64>>> = exec.map_range(replicas, |r| {
        let noise = NoisePath::with_execution(seed0 + r as u64, dt, m, 0, steps, Execution::Sequential)?;
        match run_coupled(u0, u1, params, &noise, t_end) {
            Ok(run) => Ok(Some(run.sup_diff)),
            Err(Error::BlowUp { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut diffs = Vec::with_capacity(replicas);
    let mut blow_ups = 0;
    for r in results {
        match r? {
            Some(d) => diffs.push(d),
            None => blow_ups += 1,
        }
    }
    let n = diffs.len().max(1) as f64;
    // a blown-up replica certainly exceeds delta
    let hits = diffs.iter().filter(|d| **d >= delta).count() + blow_ups;
    let p = hits as f64 / replicas.max(1) as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(SkRow {
        nu: params.nu,
        replicas,
        exceedance: p,
        exceedance_se: (p * (1.0 - p) / replicas.max(1) as f64).sqrt(),
        mean_sup_diff: mean,
        mean_se: (var / n).sqrt(),
        blow_ups,
    })
}
