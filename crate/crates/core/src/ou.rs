//! Stationary Ornstein-Uhlenbeck processes of the linear heat and damped
//! wave equations, simulated mode by mode with exact Gaussian transitions.
//!
//! For mode `k` with unit variance rate the heat process solves
//! `dz = -k^2 z dt + d beta` and the wave process solves
//! `nu z'' + z' + k^2 z = beta'`. Both are driven by the same `beta`, so a
//! single step is described by the joint Gaussian vector
//! `(d beta, heat convolution, wave position, wave velocity)`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_psd, expm2, phi1, phi_vectors2};
use crate::noise::{stationary_normals, NoisePath, NORMALS_PER_MODE};
use crate::par::Execution;
use crate::spectral::{QSpectrum, SpectralField};

/// Generator `[[0, 1], [-k^2/nu, -1/nu]]` of the wave mode `(z, z')`.
pub fn wave_generator(k: usize, nu: f64) -> Matrix2<f64> {
    let k2 = (k * k) as f64;
    Matrix2::new(0.0, 1.0, -k2 / nu, -1.0 / nu)
}

/// Stationary unit-rate covariance of the joint vector
/// `(heat, wave position, wave velocity)` of mode `k`.
pub fn stationary_covariance(k: usize, nu: f64) -> [[f64; 3]; 3] {
    let k2 = (k * k) as f64;
    let cu = 1.0 / (k2 * (2.0 + nu * k2));
    let cv = 1.0 / (2.0 + nu * k2);
    [
        [0.5 / k2, cu, cv],
        [cu, 0.5 / k2, 0.0],
        [cv, 0.0, 0.5 / nu],
    ]
}

/// Wave part of a mode's one-step kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveStep {
    /// `exp(B dt)`.
    pub propagator: Matrix2<f64>,
    /// `int_0^dt exp(B r) g dr` with `g = (0, 1/nu)`: response to a forcing
    /// held constant over the step.
    pub forcing: Vector2<f64>,
}

/// Exact one-step transition of mode `k` at unit variance rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeStep {
    pub k: usize,
    /// `e^{-k^2 dt}`.
    pub heat_decay: f64,
    /// `(1 - e^{-k^2 dt}) / k^2`.
    pub heat_forcing: f64,
    pub wave: Option<WaveStep>,
    /// Cholesky factor of the joint step covariance in the order
    /// `(d beta, heat, wave position, wave velocity)`.
    pub factor: Matrix4<f64>,
}

impl ModeStep {
    pub fn new(k: usize, dt: f64, nu: Option<f64>) -> Self {
        let cov = step_covariance(k, dt, nu);
        let k2 = (k * k) as f64;
        let wave = nu.map(|nu| {
            let b = wave_generator(k, nu);
            let g = Vector2::new(0.0, 1.0 / nu);
            let (p1, _) = phi_vectors2(&(b * dt), &g);
            WaveStep { propagator: expm2(&b, dt), forcing: p1 * dt }
        });
        Self {
            k,
            heat_decay: (-k2 * dt).exp(),
            heat_forcing: dt * phi1(-k2 * dt),
            wave,
            factor: cholesky_psd(&cov),
        }
    }

    /// Correlated unit-rate step noise from four standard normals, scaled
    /// by `scale = sigma sqrt(q_k)`.
    #[inline]
    pub fn noise(&self, normals: &[f64], scale: f64) -> [f64; 4] {
        let l = &self.factor;
        let mut w = [0.0; 4];
        for (i, wi) in w.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..=i {
                s += l[(i, j)] * normals[j];
            }
            *wi = scale * s;
        }
        w
    }
}

/// Unit-rate covariance of `(d beta, heat, wave u, wave v)` over one step.
/// Without `nu` the wave block is zero.
pub fn step_covariance(k: usize, dt: f64, nu: Option<f64>) -> Matrix4<f64> {
    let k2 = (k * k) as f64;
    let mut p = Matrix4::zeros();
    p[(0, 0)] = dt;
    p[(0, 1)] = -(-k2 * dt).exp_m1() / k2;
    p[(1, 1)] = -(-2.0 * k2 * dt).exp_m1() / (2.0 * k2);
    if let Some(nu) = nu {
        let b = wave_generator(k, nu);
        let g = Vector2::new(0.0, 1.0 / nu);
        let (bw, _) = phi_vectors2(&(b * dt), &g);
        let shifted = b - Matrix2::identity() * k2;
        let (hw, _) = phi_vectors2(&(shifted * dt), &g);
        let phi = expm2(&b, dt);
        let sinf = Matrix2::new(0.5 / k2, 0.0, 0.0, 0.5 / nu);
        let ww = sinf - phi * sinf * phi.transpose();
        for i in 0..2 {
            p[(0, 2 + i)] = dt * bw[i];
            p[(1, 2 + i)] = dt * hw[i];
            for j in 0..2 {
                p[(2 + i, 2 + j)] = 0.5 * (ww[(i, j)] + ww[(j, i)]);
            }
        }
    }
    for i in 0..4 {
        for j in 0..i {
            p[(i, j)] = p[(j, i)];
        }
    }
    p
}

/// One [`ModeStep`] per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct StepKernels {
    pub dt: f64,
    pub nu: Option<f64>,
    pub modes: Vec<ModeStep>,
}

impl StepKernels {
    pub fn new(modes: usize, dt: f64, nu: Option<f64>) -> Result<Self> {
        if let Some(nu) = nu {
            check_nu(nu)?;
        }
        Ok(Self {
            dt,
            nu,
            modes: (1..=modes).map(|k| ModeStep::new(k, dt, nu)).collect(),
        })
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    Ok(())
}

/// Joint stationary draw of `(heat, wave position, wave velocity)` using
/// the stationary-law stream `(seed, index)`. The heat component does not
/// depend on `nu`.
pub fn sample_stationary_joint(
    q: &QSpectrum,
    nu: f64,
    seed: u64,
    index: i64,
) -> Result<(SpectralField, SpectralField, SpectralField)> {
    check_nu(nu)?;
    let m = q.modes();
    let xi = stationary_normals(seed, index, m * NORMALS_PER_MODE);
    let mut h = vec![0.0; m];
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; m];
    for k in 1..=m {
        let c = stationary_covariance(k, nu);
        let mut a = Matrix4::identity();
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = c[i][j];
            }
        }
        let l = cholesky_psd(&a);
        let s = q.rate(k).sqrt();
        let x = &xi[(k - 1) * NORMALS_PER_MODE..];
        h[k - 1] = s * l[(0, 0)] * x[0];
        u[k - 1] = s * (l[(1, 0)] * x[0] + l[(1, 1)] * x[1]);
        v[k - 1] = s * (l[(2, 0)] * x[0] + l[(2, 1)] * x[1] + l[(2, 2)] * x[2]);
    }
    Ok((
        SpectralField::from_coeffs(h)?,
        SpectralField::from_coeffs(u)?,
        SpectralField::from_coeffs(v)?,
    ))
}

/// Mode `k` drawn from `N(0, sigma^2 q_k / (2 k^2))`.
pub fn sample_stationary_heat(q: &QSpectrum, seed: u64) -> SpectralField {
    let m = q.modes();
    let xi = stationary_normals(seed, 0, m * NORMALS_PER_MODE);
    let c = (1..=m)
        .map(|k| (q.rate(k) / (2.0 * (k * k) as f64)).sqrt() * xi[(k - 1) * NORMALS_PER_MODE])
        .collect();
    SpectralField::from_coeffs(c).expect("finite by construction")
}

/// Position mode `k` from `N(0, sigma^2 q_k / (2 k^2))` and velocity mode
/// `k` from `N(0, sigma^2 q_k / (2 nu))`, independent.
pub fn sample_stationary_wave(
    q: &QSpectrum,
    nu: f64,
    seed: u64,
) -> Result<(SpectralField, SpectralField)> {
    let (_, u, v) = sample_stationary_joint(q, nu, seed, 0)?;
    Ok((u, v))
}

/// Initial state handed to [`evolve_ou`].
#[derive(Debug, Clone, PartialEq)]
pub struct OuState {
    pub heat: SpectralField,
    pub wave: Option<(SpectralField, SpectralField)>,
}

/// Which realised process forces a random equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forcing {
    Heat,
    WavePosition,
}

/// Realised OU paths on a uniform grid. Sample `i` sits at time
/// `(origin + i) dt`; shifting only moves `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct OUPath {
    dt: f64,
    origin: i64,
    samples: usize,
    modes: usize,
    nu: Option<f64>,
    heat: Arc<[f64]>,
    wave_u: Option<Arc<[f64]>>,
    wave_v: Option<Arc<[f64]>>,
}

/// Exact evolution of `init` along `noise`. The first sample is the state at
/// the noise grid's left end.
pub fn evolve_ou(noise: &NoisePath, q: &QSpectrum, nu: Option<f64>, init: &OuState) -> Result<OUPath> {
    evolve_ou_with(noise, q, nu, init, Execution::default())
}

pub fn evolve_ou_with(
    noise: &NoisePath,
    q: &QSpectrum,
    nu: Option<f64>,
    init: &OuState,
    exec: Execution,
) -> Result<OUPath> {
    let m = noise.modes();
    for found in [q.modes(), init.heat.modes()] {
        if found != m {
            return Err(Error::ShapeMismatch { expected: m, found });
        }
    }
    if nu.is_some() != init.wave.is_some() {
        return Err(Error::InvalidParameter(
            "wave initial data must be given exactly when nu is".into(),
        ));
    }
    if let Some((u, v)) = &init.wave {
        for found in [u.modes(), v.modes()] {
            if found != m {
                return Err(Error::ShapeMismatch { expected: m, found });
            }
        }
    }
    let kernels = StepKernels::new(m, noise.dt(), nu)?;
    let steps = noise.steps();
    let samples = steps + 1;
    let first = noise.first_step();

    // one column (time series) per mode, then transpose
    let columns: Vec<[Vec<f64>; 3]> = exec.map_range(m, |i| {
        let ks = &kernels.modes[i];
        let scale = q.rate(i + 1).sqrt();
        let mut h = Vec::with_capacity(samples);
        let mut u = Vec::new();
        let mut v = Vec::new();
        let mut zh = init.heat[i];
        let (mut zu, mut zv) = init.wave.as_ref().map_or((0.0, 0.0), |(a, b)| (a[i], b[i]));
        h.push(zh);
        if nu.is_some() {
            u.reserve(samples);
            v.reserve(samples);
            u.push(zu);
            v.push(zv);
        }
        for n in 0..steps {
            let xi = noise.normals(first + n as i64).expect("within grid");
            let w = ks.noise(&xi[i * NORMALS_PER_MODE..(i + 1) * NORMALS_PER_MODE], scale);
            zh = ks.heat_decay * zh + w[1];
            h.push(zh);
            if let Some(ws) = &ks.wave {
                let p = &ws.propagator;
                let nu_ = p[(0, 0)] * zu + p[(0, 1)] * zv + w[2];
                let nv = p[(1, 0)] * zu + p[(1, 1)] * zv + w[3];
                zu = nu_;
                zv = nv;
                u.push(zu);
                v.push(zv);
            }
        }
        [h, u, v]
    });

    let transpose = |c: usize| -> Arc<[f64]> {
        let mut out = vec![0.0; samples * m];
        for (i, col) in columns.iter().enumerate() {
            for (n, x) in col[c].iter().enumerate() {
                out[n * m + i] = *x;
            }
        }
        out.into()
    };
    Ok(OUPath {
        dt: noise.dt(),
        origin: first,
        samples,
        modes: m,
        nu,
        heat: transpose(0),
        wave_u: nu.map(|_| transpose(1)),
        wave_v: nu.map(|_| transpose(2)),
    })
}

impl OUPath {
    /// Stationary path: the initial state is a joint stationary draw from
    /// the noise seed, so the whole path is stationary in law.
    pub fn stationary(noise: &NoisePath, q: &QSpectrum, nu: Option<f64>) -> Result<Self> {
        let (h, u, v) = sample_stationary_joint(q, nu.unwrap_or(1.0), noise.seed(), 0)?;
        let init = OuState { heat: h, wave: nu.map(|_| (u, v)) };
        evolve_ou(noise, q, nu, &init)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    pub fn len(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn has_wave(&self) -> bool {
        self.wave_u.is_some()
    }

    pub fn time(&self, i: usize) -> f64 {
        (self.origin + i as i64) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples).map(|i| self.time(i)).collect()
    }

    pub fn t_first(&self) -> f64 {
        self.time(0)
    }

    pub fn t_last(&self) -> f64 {
        self.time(self.samples - 1)
    }

    /// Sample index of grid time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let n = (t / self.dt).round();
        if (n * self.dt - t).abs() > 1e-9 * self.dt.max(t.abs()) {
            return Err(Error::OutsideGrid(t));
        }
        let i = n as i64 - self.origin;
        if i < 0 || i >= self.samples as i64 {
            return Err(Error::OutsideGrid(t));
        }
        Ok(i as usize)
    }

    pub fn heat(&self, i: usize) -> &[f64] {
        &self.heat[i * self.modes..(i + 1) * self.modes]
    }

    pub fn wave(&self, i: usize) -> Option<&[f64]> {
        self.wave_u.as_ref().map(|w| &w[i * self.modes..(i + 1) * self.modes])
    }

    pub fn wave_velocity(&self, i: usize) -> Option<&[f64]> {
        self.wave_v.as_ref().map(|w| &w[i * self.modes..(i + 1) * self.modes])
    }

    /// The forcing process at sample `i`.
    pub fn forcing(&self, which: Forcing, i: usize) -> Result<&[f64]> {
        match which {
            Forcing::Heat => Ok(self.heat(i)),
            Forcing::WavePosition => self
                .wave(i)
                .ok_or_else(|| Error::InvalidParameter("path carries no wave component".into())),
        }
    }

    /// Heat process at grid time `t`.
    pub fn z_heat(&self, t: f64) -> Result<SpectralField> {
        SpectralField::from_coeffs(self.heat(self.index_of(t)?).to_vec())
    }

    pub fn z_wave(&self, t: f64) -> Result<(SpectralField, SpectralField)> {
        let i = self.index_of(t)?;
        let (u, v) = self
            .wave(i)
            .zip(self.wave_velocity(i))
            .ok_or_else(|| Error::InvalidParameter("path carries no wave component".into()))?;
        Ok((
            SpectralField::from_coeffs(u.to_vec())?,
            SpectralField::from_coeffs(v.to_vec())?,
        ))
    }

    /// The path seen from the shifted noise `theta_s omega`: the returned
    /// path at time `t` equals this path at `t + s`.
    pub fn shift(&self, s: f64) -> Result<Self> {
        let m = (s / self.dt).round();
        if (m * self.dt - s).abs() > 1e-9 * self.dt.max(s.abs()) {
            return Err(Error::OutsideGrid(s));
        }
        if s < self.t_first() - 1e-12 || s > self.t_last() + 1e-12 {
            return Err(Error::OutsideGrid(s));
        }
        let mut out = self.clone();
        out.origin -= m as i64;
        Ok(out)
    }

    /// Rows `t, mode, z_heat, z_wave, zdot_wave`; wave columns are empty
    /// for a heat-only path.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mode,z_heat,z_wave,zdot_wave")?;
        for i in 0..self.samples {
            let t = self.time(i);
            for k in 0..self.modes {
                let h = self.heat(i)[k];
                match (self.wave(i), self.wave_velocity(i)) {
                    (Some(u), Some(v)) => writeln!(w, "{t},{},{h:e},{:e},{:e}", k + 1, u[k], v[k])?,
                    _ => writeln!(w, "{t},{},{h:e},,", k + 1)?,
                }
            }
        }
        Ok(())
    }
}

/// A forcing process sampled on a refined grid of width `dt / substeps`,
/// linear between the OU samples. Node `n` sits at time `n dt / substeps`
/// relative to the path's time 0, so negative nodes lie in the past.
#[derive(Debug, Clone)]
pub struct NodeForcing<'a> {
    path: &'a OUPath,
    which: Forcing,
    substeps: usize,
    zero: usize,
}

impl<'a> NodeForcing<'a> {
    pub fn new(path: &'a OUPath, which: Forcing, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be >= 1".into()));
        }
        if which == Forcing::WavePosition && !path.has_wave() {
            return Err(Error::InvalidParameter("path carries no wave component".into()));
        }
        Ok(Self { path, which, substeps, zero: path.index_of(0.0)? })
    }

    pub fn step(&self) -> f64 {
        self.path.dt() / self.substeps as f64
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn modes(&self) -> usize {
        self.path.modes()
    }

    /// Nodes `lo..=hi` are all covered by the path.
    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        let r = self.substeps as i64;
        let first = -(self.zero as i64) * r;
        let last = (self.path.len() as i64 - 1 - self.zero as i64) * r;
        lo >= first && hi <= last
    }

    /// Writes the forcing at node `n` into `out`.
    pub fn at(&self, n: i64, out: &mut [f64]) {
        let r = self.substeps as i64;
        let j = n.div_euclid(r);
        let s = n.rem_euclid(r);
        let i = (self.zero as i64 + j) as usize;
        let a = self.path.forcing(self.which, i).expect("checked at construction");
        if s == 0 {
            out.copy_from_slice(a);
            return;
        }
        let b = self.path.forcing(self.which, i + 1).expect("checked at construction");
        let w = s as f64 / r as f64;
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            *o = (1.0 - w) * x + w * y;
        }
    }
}

/// Empirical second moment of one mode against its stationary value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeMoment {
    pub k: usize,
    pub variance: f64,
    pub se: f64,
    pub expected: f64,
    pub pass: bool,
}

/// Per-mode variances of `z*`, `z*_nu` and its velocity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryMoments {
    pub nu: f64,
    pub replicas: usize,
    pub steps: usize,
    pub heat: Vec<ModeMoment>,
    pub position: Vec<ModeMoment>,
    pub velocity: Vec<ModeMoment>,
    /// `nu^2 E ||d/dt z*_nu||^2` with its standard error.
    pub nu2_velocity_energy: f64,
    pub nu2_velocity_energy_se: f64,
    pub pass: bool,
}

fn moment(k: usize, xs: impl Iterator<Item = f64>, n: usize, expected: f64) -> ModeMoment {
    let (mut s2, mut s4) = (0.0, 0.0);
    for x in xs {
        s2 += x * x;
        s4 += x * x * x * x;
    }
    let variance = s2 / n as f64;
    let se = ((s4 / n as f64 - variance * variance).max(0.0) / n as f64).sqrt();
    let pass = (variance - expected).abs() <= 3.0 * se + 1e-300;
    ModeMoment { k, variance, se, expected, pass }
}

/// Replica `r` draws the joint stationary state from `(seed + r, 0)` and
/// runs `steps` exact OU steps of size `dt` on the noise of seed `seed + r`;
/// the final states are compared with the stationary variances.
pub fn stationary_moments(
    q: &QSpectrum,
    nu: f64,
    seed: u64,
    replicas: usize,
    steps: usize,
    dt: f64,
    exec: Execution,
) -> Result<StationaryMoments> {
    check_nu(nu)?;
    if replicas < 2 {
        return Err(Error::InvalidParameter("need at least two replicas".into()));
    }
    let m = q.modes();
    let finals: Vec<Result<Vec<f64>>> = exec.map_range(replicas, |r| {
        let s = seed.wrapping_add(r as u64);
        let (h, u, v) = sample_stationary_joint(q, nu, s, 0)?;
        if steps == 0 {
            return Ok([h.coeffs(), u.coeffs(), v.coeffs()].concat());
        }
        let noise = NoisePath::with_execution(s, dt, m, 0, steps, Execution::Sequential)?;
        let init = OuState { heat: h, wave: Some((u, v)) };
        let path = evolve_ou_with(&noise, q, Some(nu), &init, Execution::Sequential)?;
        let last = path.len() - 1;
        Ok([path.heat(last), path.wave(last).expect("wave"), path.wave_velocity(last).expect("wave")].concat())
    });
    let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;
    let mk = |block: usize, k: usize, expected: f64| {
        moment(k, finals.iter().map(|x| x[block * m + k - 1]), replicas, expected)
    };
    let heat: Vec<ModeMoment> = (1..=m).map(|k| mk(0, k, q.rate(k) / (2.0 * (k * k) as f64))).collect();
    let position: Vec<ModeMoment> = (1..=m).map(|k| mk(1, k, q.rate(k) / (2.0 * (k * k) as f64))).collect();
    let velocity: Vec<ModeMoment> = (1..=m).map(|k| mk(2, k, q.rate(k) / (2.0 * nu))).collect();
    let energies: Vec<f64> = finals
        .iter()
        .map(|x| nu * nu * x[2 * m..].iter().map(|v| v * v).sum::<f64>())
        .collect();
    let n = replicas as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let var = energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let pass = heat.iter().chain(&position).chain(&velocity).all(|m| m.pass);
    Ok(StationaryMoments {
        nu,
        replicas,
        steps,
        heat,
        position,
        velocity,
        nu2_velocity_energy: mean,
        nu2_velocity_energy_se: (var / n).sqrt(),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q_unit_first(m: usize) -> QSpectrum {
        let mut q = vec![0.0; m];
        q[0] = 1.0;
        QSpectrum::new(q, 1.0).unwrap()
    }

    /// `int_0^dt F(r) dr` by composite 5-point Gauss-Legendre.
    fn gauss<F: Fn(f64) -> Matrix4<f64>>(dt: f64, panels: usize, f: F) -> Matrix4<f64> {
        let x = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        let w = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = dt / panels as f64;
        let mut s = Matrix4::zeros();
        for p in 0..panels {
            let c = (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(w) {
                s += f(c + 0.5 * h * xi) * (0.5 * h * wi);
            }
        }
        s
    }

    #[test]
    fn step_covariance_matches_quadrature() {
        for &(k, nu, dt) in &[
            (1usize, 0.1, 1e-2),
            (3, 0.01, 1e-3),
            (5, 0.01, 1e-2),
            (9, 0.01, 1e-3),
            (2, 1e-3, 1e-2),
        ] {
            let b = wave_generator(k, nu);
            let k2 = (k * k) as f64;
            // response of (beta, heat, u, v) to a unit impulse at lag r
            let reference = gauss(dt, 400, |r| {
                let e = expm2(&b, r);
                let g = nalgebra::Vector4::new(1.0, (-k2 * r).exp(), e[(0, 1)] / nu, e[(1, 1)] / nu);
                g * g.transpose()
            });
            let p = step_covariance(k, dt, Some(nu));
            let scale = p.abs().max();
            assert!(
                (p - reference).abs().max() < 1e-10 * scale.max(1.0),
                "k={k} nu={nu} dt={dt}\n{p}\n{reference}"
            );
        }
    }

    #[test]
    fn factor_reproduces_covariance() {
        let ks = ModeStep::new(4, 1e-3, Some(0.01));
        let p = step_covariance(4, 1e-3, Some(0.01));
        let l = ks.factor;
        assert!((l * l.transpose() - p).abs().max() < 1e-15);
        assert_abs_diff_eq!(l[(0, 0)], 1e-3f64.sqrt(), epsilon = 1e-16);
        // heat rows do not see nu
        let other = ModeStep::new(4, 1e-3, Some(0.1));
        assert_eq!(other.factor.fixed_view::<2, 2>(0, 0), l.fixed_view::<2, 2>(0, 0));
    }

    #[test]
    fn zero_spectrum_gives_zero_samples() {
        let q = QSpectrum::zero(6);
        assert_eq!(sample_stationary_heat(&q, 3), SpectralField::zeros(6));
        let (u, v) = sample_stationary_wave(&q, 0.1, 3).unwrap();
        assert_eq!(u, SpectralField::zeros(6));
        assert_eq!(v, SpectralField::zeros(6));
        assert!(sample_stationary_wave(&q, 0.0, 3).is_err());
    }

    #[test]
    fn deterministic_heat_decay() {
        let q = QSpectrum::zero(3);
        let noise = NoisePath::new(1, 0.01, 3, 0, 100).unwrap();
        let init = OuState { heat: SpectralField::basis(3, 1), wave: None };
        let path = evolve_ou(&noise, &q, None, &init).unwrap();
        for i in [0, 17, 100] {
            let t = path.time(i);
            assert_abs_diff_eq!(path.heat(i)[0], (-t).exp(), epsilon = 1e-14);
            assert_eq!(path.heat(i)[1], 0.0);
        }
    }

    #[test]
    fn deterministic_wave_matches_two_exponentials() {
        // nu = 0.01, k = 4: roots -20 and -80; z(0) = 1, z'(0) = 0
        let q = QSpectrum::zero(4);
        let noise = NoisePath::new(1, 0.001, 4, 0, 100).unwrap();
        let init = OuState {
            heat: SpectralField::zeros(4),
            wave: Some((SpectralField::basis(4, 4), SpectralField::zeros(4))),
        };
        let path = evolve_ou(&noise, &q, Some(0.01), &init).unwrap();
        let t = path.t_last();
        let exact = (4.0 * (-20.0 * t).exp() - (-80.0 * t).exp()) / 3.0;
        assert_abs_diff_eq!(path.wave(100).unwrap()[3], exact, epsilon = 1e-12);
    }

    #[test]
    fn stationary_heat_variance_second_mode() {
        let q = QSpectrum::new(vec![0.0, 1.0 / 16.0], 1.0).unwrap();
        let n = 40_000;
        let var = (0..n).map(|s| sample_stationary_heat(&q, s).mode(2).powi(2)).sum::<f64>() / n as f64;
        let want = 1.0 / 128.0;
        assert!((var - want).abs() < 3.0 * want * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn velocity_variance_matches_langevin_simulation() {
        // independent oracle: Euler-Maruyama of nu z'' + z' + z = beta' with
        // many chains, started with the position already at its stationary law
        let nu = 0.01;
        let dt = 2e-5;
        let chains = 4000;
        let steps = 5000;
        let sim: Vec<f64> = (0..chains)
            .map(|c| {
                use rand::SeedableRng;
                use rand_distr::{Distribution, StandardNormal};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + c as u64);
                let mut z: f64 = StandardNormal.sample(&mut rng);
                z *= 0.5f64.sqrt();
                let mut v = 0.0;
                for _ in 0..steps {
                    let db: f64 = StandardNormal.sample(&mut rng);
                    let nv = v + dt * (-z - v) / nu + db * dt.sqrt() / nu;
                    z += dt * v;
                    v = nv;
                }
                v * v
            })
            .collect();
        let sim_var = sim.iter().sum::<f64>() / chains as f64;
        let se = sim_var * (2.0 / chains as f64).sqrt();

        let q = q_unit_first(1);
        let n = 20_000;
        let exact = (0..n)
            .map(|s| sample_stationary_wave(&q, nu, s).unwrap().1.mode(1).powi(2))
            .sum::<f64>()
            / n as f64;
        let se_exact = exact * (2.0 / n as f64).sqrt();
        assert!((sim_var - 50.0).abs() < 3.0 * se + 50.0 * dt / nu, "{sim_var}");
        assert!((exact - 50.0).abs() < 3.0 * se_exact, "{exact}");
    }

    #[test]
    fn heat_autocorrelation() {
        let q = q_unit_first(1);
        let dt = 0.05;
        let n = 100_000;
        let noise = NoisePath::new(5, dt, 1, 0, n).unwrap();
        let path = OUPath::stationary(&noise, &q, None).unwrap();
        let xs: Vec<f64> = (0..=n).map(|i| path.heat(i)[0]).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        let cov = xs.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / n as f64;
        let rho = cov / var;
        // effective sample size for an AR(1) with coefficient r
        let r = (-dt).exp();
        let se = ((1.0 - r * r) / (n as f64 * dt)).sqrt();
        assert!((rho - r).abs() < 3.0 * se, "rho {rho} vs {r}");
    }

    #[test]
    fn shift_is_a_group_action() {
        let q = QSpectrum::power_law(4, 4.0, 1.0).unwrap();
        let noise = NoisePath::new(9, 0.01, 4, -100, 200).unwrap();
        let path = OUPath::stationary(&noise, &q, Some(0.01)).unwrap();
        assert_eq!(path.shift(0.0).unwrap(), path);
        let s = path.shift(0.25).unwrap();
        assert_eq!(s.shift(-0.25).unwrap(), path);
        let i = path.index_of(0.3).unwrap();
        let j = s.index_of(0.05).unwrap();
        assert_eq!(path.heat(i), s.heat(j));
        assert_eq!(path.wave(i), s.wave(j));
        assert!(path.shift(5.0).is_err());
        assert!(path.shift(0.005).is_err());
    }

    #[test]
    fn heat_path_ignores_nu() {
        let q = QSpectrum::power_law(4, 4.0, 1.0).unwrap();
        let noise = NoisePath::new(2, 0.01, 4, -50, 100).unwrap();
        let a = OUPath::stationary(&noise, &q, Some(0.1)).unwrap();
        let b = OUPath::stationary(&noise, &q, Some(0.001)).unwrap();
        let c = OUPath::stationary(&noise, &q, None).unwrap();
        for i in 0..a.len() {
            assert_eq!(a.heat(i), b.heat(i));
            assert_eq!(a.heat(i), c.heat(i));
        }
    }

    #[test]
    fn csv_has_one_row_per_sample_and_mode() {
        let q = QSpectrum::power_law(2, 4.0, 1.0).unwrap();
        let noise = NoisePath::new(2, 0.1, 2, 0, 3).unwrap();
        let path = OUPath::stationary(&noise, &q, Some(0.1)).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 2);
        assert!(text.starts_with("t,mode,z_heat,z_wave,zdot_wave"));
    }

    #[test]
    fn stationary_moments_without_noise_are_zero() {
        let q = QSpectrum::zero(4);
        let st = stationary_moments(&q, 0.1, 1, 50, 3, 0.01, Execution::Sequential).unwrap();
        assert!(st.pass);
        assert!(st.heat.iter().chain(&st.velocity).all(|m| m.variance == 0.0 && m.se == 0.0));
    }

    #[test]
    fn stationary_moments_match_the_law() {
        let q = QSpectrum::power_law(4, 4.0, 1.0).unwrap();
        let st = stationary_moments(&q, 0.05, 7, 4000, 5, 0.01, Execution::default()).unwrap();
        for m in st.heat.iter().chain(&st.position).chain(&st.velocity) {
            assert!((m.variance - m.expected).abs() <= 4.0 * m.se, "{m:?}");
        }
        // nu^2 E|v|^2 = nu Tr Q / 2
        let exact = 0.05 * q.trace() / 2.0;
        assert!((st.nu2_velocity_energy - exact).abs() <= 4.0 * st.nu2_velocity_energy_se);
    }
}
