//! Lyapunov-Perron fixed points for the random inertial manifolds.
//!
//! A trajectory is stored on the nodes `t_i = -i h`, `i = 0..=nt`, with the
//! forcing interpolated linearly between OU samples. Every linear factor is
//! exact and the nonlinear term is integrated over panels of two steps with
//! its quadratic interpolant (see [`Panel`]). Panels never straddle an OU
//! sample, so the quadrature is high order on the piecewise smooth forcing.
//! The Picard map discretises the mild equation on `[-T_back, 0]`:
//!
//! * low modes run backward from their value at `t = 0`,
//! * high (heat) or `E_-1 + E_22` (wave) components run forward from zero
//!   at `t = -T_back`.
//!
//! Residuals are measured in the weighted norm `sup_t e^{-eta t} ||.||`.

use nalgebra::Vector2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrators::RandomHeatFlow;
use crate::linalg::{Panel, Panel2};
use crate::ou::{Forcing, NodeForcing, OUPath};
use crate::par::Execution;
use crate::spectral::{Nonlinearity, SineTransform, SpectralField};
use crate::wave_operator::{
    c_matrix, dichotomy_rates, effective_lipschitz, gap_check, GapCase, GapReport, PhasePoint,
    WaveGeometry,
};

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpConfig {
    /// Solver nodes per OU step.
    pub substeps: usize,
    /// Backward horizon; chosen from the tail bound when `None`.
    pub t_back: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    /// Upper bound on the weighted trajectory norm, if enforced.
    pub tempered_bound: Option<f64>,
    pub k_const: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            substeps: 4,
            t_back: None,
            tol: 1e-8,
            max_iters: 500,
            tempered_bound: None,
            k_const: 1.0,
            exec: Execution::default(),
        }
    }
}

/// Everything a solve needs besides the base point and the noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSetup {
    pub modes: usize,
    pub n: usize,
    pub f: Nonlinearity,
    pub phys_points: usize,
    pub cfg: LpConfig,
}

impl LpSetup {
    pub fn new(modes: usize, n: usize, f: Nonlinearity) -> Self {
        Self { modes, n, f, phys_points: 2 * modes, cfg: LpConfig::default() }
    }

    /// The same problem with twice the substeps and twice the horizon.
    pub fn refined(&self, t_back_used: f64) -> Self {
        let mut out = self.clone();
        out.cfg.substeps *= 2;
        out.cfg.t_back = Some(2.0 * t_back_used);
        out
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n >= self.modes {
            return Err(Error::InvalidParameter(format!(
                "cutoff N = {} must lie in 1..{}",
                self.n, self.modes
            )));
        }
        if self.phys_points < 2 * self.modes {
            return Err(Error::InvalidParameter("need at least 2 M quadrature points".into()));
        }
        if self.cfg.substeps == 0 || !self.cfg.substeps.is_multiple_of(2) {
            return Err(Error::InvalidParameter("substeps must be a positive even number".into()));
        }
        if !(self.cfg.tol > 0.0) || self.cfg.max_iters == 0 {
            return Err(Error::InvalidParameter("tol and max_iters must be positive".into()));
        }
        self.f.validate()
    }
}

/// `T_back` such that `e^{-(eta - beta) T} F_bound < tol / 10`.
pub fn auto_t_back(eta: f64, beta: f64, f_bound: f64, tol: f64) -> f64 {
    let rate = eta - beta;
    ((10.0 * f_bound.max(1e-300) / tol).ln() / rate).max(1.0 / rate)
}

/// A backward trajectory on `[-T_back, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedTrajectory {
    /// `t_i = -i h`, so `times[0] = 0`.
    pub times: Vec<f64>,
    pub modes: usize,
    /// Node-major `u` coefficients.
    pub u: Vec<f64>,
    /// Node-major `v` coefficients (wave only).
    pub v: Option<Vec<f64>>,
    pub eta: f64,
    /// `sup_t e^{-eta t} ||state(t)||`.
    pub weighted_norm: f64,
}

impl WeightedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn u_at(&self, i: usize) -> &[f64] {
        &self.u[i * self.modes..(i + 1) * self.modes]
    }

    pub fn v_at(&self, i: usize) -> Option<&[f64]> {
        self.v.as_ref().map(|v| &v[i * self.modes..(i + 1) * self.modes])
    }

    pub fn step(&self) -> f64 {
        if self.times.len() > 1 {
            -self.times[1]
        } else {
            0.0
        }
    }
}

/// Converged fixed point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LPSolution {
    pub trajectory: WeightedTrajectory,
    /// Low-mode base coordinates (heat: `zeta_k`; wave: coefficients on `e_k^+`).
    pub base: Vec<f64>,
    /// High part at `t = 0` (heat: `Q u(0)`; wave: u-component of the
    /// `E_-1 + E_22` part).
    pub graph_u: SpectralField,
    /// Wave only: v-component of the graph value.
    pub graph_v: Option<SpectralField>,
    /// Norm of the graph value (`L^2` for heat, E-norm for the wave).
    pub graph_norm: f64,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub final_residual: f64,
    /// Largest ratio of successive residuals from the second iterate on.
    pub contraction_estimate: Option<f64>,
    pub t_back: f64,
    pub gap: GapReport,
}

impl LPSolution {
    /// Point on the manifold at `t = 0` as `(u, v)`; `v` is zero for heat.
    pub fn state0(&self) -> (SpectralField, Option<SpectralField>) {
        let u = SpectralField::from_coeffs(self.trajectory.u_at(0).to_vec()).expect("finite");
        let v = self
            .trajectory
            .v_at(0)
            .map(|v| SpectralField::from_coeffs(v.to_vec()).expect("finite"));
        (u, v)
    }
}

fn contraction(residuals: &[f64]) -> Option<f64> {
    residuals
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .reduce(f64::max)
}

/// Nodes covering the horizon, rounded up to whole OU steps.
fn node_count(t_back: f64, dt_ou: f64, substeps: usize) -> usize {
    let ou_steps = (t_back / dt_ou - 1e-9).ceil().max(1.0) as usize;
    ou_steps * substeps
}

/// Right-hand side evaluator: `rhs(node, u, out, scratch)`.
type Rhs<'a> = dyn Fn(usize, &[f64], &mut [f64], &mut [f64]) + Sync + 'a;

/// Evaluates the right-hand side at every node, in parallel over nodes.
fn eval_rhs(exec: Execution, positions: &[f64], m: usize, points: usize, rhs: &Rhs, out: &mut [f64]) {
    const CHUNK: usize = 64;
    exec.for_each_chunk(out, m * CHUNK, |ci, chunk| {
        let mut scratch = vec![0.0; points];
        for (j, row) in chunk.chunks_mut(m).enumerate() {
            let i = ci * CHUNK + j;
            rhs(i, &positions[i * m..(i + 1) * m], row, &mut scratch);
        }
    });
}

/// Scalar channel `y' = mu y + scale g` swept panel by panel, either
/// backward from `t = 0` (causal) or forward from `t = -T` starting at zero.
#[derive(Debug, Clone, Copy)]
struct Channel {
    panel: Panel,
    scale: f64,
    causal: bool,
}

/// Node visited at sweep position `j`.
fn sweep_index(causal: bool, last: usize, j: usize) -> usize {
    if causal {
        j
    } else {
        last - j
    }
}

impl Channel {
    fn backward(mu: f64, h: f64, scale: f64) -> Self {
        Self { panel: Panel::new(mu, -h), scale, causal: true }
    }

    fn forward(mu: f64, h: f64, scale: f64) -> Self {
        Self { panel: Panel::new(mu, h), scale, causal: false }
    }

    /// Runs over all nodes; `g(i)` is the scalar forcing at node `i`.
    fn run(&self, y0: f64, nodes: usize, g: impl Fn(usize) -> f64, mut put: impl FnMut(usize, f64)) {
        let last = nodes - 1;
        let at = |j| sweep_index(self.causal, last, j);
        let p = &self.panel;
        let mut y = if self.causal { y0 } else { 0.0 };
        put(at(0), y);
        for j in (0..last).step_by(2) {
            let gs = [g(at(j)), g(at(j + 1)), g(at(j + 2))];
            let dot = |w: &[f64; 3]| w[0] * gs[0] + w[1] * gs[1] + w[2] * gs[2];
            put(at(j + 1), p.e1 * y + self.scale * dot(&p.w1));
            y = p.e2 * y + self.scale * dot(&p.w2);
            put(at(j + 2), y);
        }
    }
}

struct HeatOutcome {
    traj: Vec<f64>,
    residuals: Vec<f64>,
    weighted_norm: f64,
}

/// Picard iteration of the heat mild equation.
fn heat_core(setup: &LpSetup, h: f64, nodes: usize, eta: f64, zeta: &[f64], rhs: &Rhs) -> Result<HeatOutcome> {
    let m = setup.modes;
    let n = setup.n;
    let channels: Vec<Channel> = (1..=m)
        .map(|k| {
            let mu = -((k * k) as f64);
            if k <= n {
                Channel::backward(mu, h, 1.0)
            } else {
                Channel::forward(mu, h, 1.0)
            }
        })
        .collect();
    let weights: Vec<f64> = (0..nodes).map(|i| (eta * i as f64 * h).exp()).collect();

    let mut traj = vec![0.0; nodes * m];
    for (k, ch) in channels.iter().enumerate().take(n) {
        ch.run(zeta[k], nodes, |_| 0.0, |i, y| traj[i * m + k] = y);
    }
    let mut g = vec![0.0; nodes * m];
    let mut next = vec![0.0; nodes * m];
    let mut residuals = Vec::new();
    loop {
        eval_rhs(setup.cfg.exec, &traj, m, setup.phys_points, rhs, &mut g);
        for (k, ch) in channels.iter().enumerate() {
            let y0 = if k < n { zeta[k] } else { 0.0 };
            ch.run(y0, nodes, |i| g[i * m + k], |i, y| next[i * m + k] = y);
        }
        let mut res = 0.0f64;
        let mut norm = 0.0f64;
        for i in 0..nodes {
            let (a, b) = (&next[i * m..(i + 1) * m], &traj[i * m..(i + 1) * m]);
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            let s: f64 = a.iter().map(|x| x * x).sum();
            res = res.max(weights[i] * d.sqrt());
            norm = norm.max(weights[i] * s.sqrt());
        }
        std::mem::swap(&mut traj, &mut next);
        if !res.is_finite() || !norm.is_finite() {
            return Err(Error::WeightedOverflow { iteration: residuals.len() + 1 });
        }
        residuals.push(res);
        if res <= setup.cfg.tol {
            return Ok(HeatOutcome { traj, residuals, weighted_norm: norm });
        }
        if residuals.len() >= setup.cfg.max_iters {
            return Err(Error::NoConvergence { iterations: residuals.len(), residual: res });
        }
    }
}

fn heat_gap(setup: &LpSetup) -> Result<GapReport> {
    let lf = effective_lipschitz(GapCase::Heat, setup.n, setup.f.lipschitz())?;
    let gap = gap_check(GapCase::Heat, setup.n, setup.cfg.k_const, lf, None)?;
    if !gap.pass {
        return Err(Error::InvalidParameter(format!(
            "spectral gap condition fails for the heat problem (gap value {:.4})",
            gap.gap_value
        )));
    }
    Ok(gap)
}

/// Bound on `||F||` used for the horizon; falls back to a Lipschitz bound
/// around the largest forcing sample.
fn f_bound(f: &Nonlinearity, base_norm: f64, forcing_sup: impl FnOnce() -> f64) -> f64 {
    f.l2_bound().unwrap_or_else(|| f.lipschitz() * (1.0 + base_norm + forcing_sup()))
}

fn path_sup(path: &OUPath, which: Forcing) -> f64 {
    (0..path.len())
        .filter_map(|i| path.forcing(which, i).ok())
        .map(|z| z.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn resolve_t_back(setup: &LpSetup, eta: f64, beta: f64, fb: f64, dt_ou: f64) -> f64 {
    let raw = setup.cfg.t_back.unwrap_or_else(|| auto_t_back(eta, beta, fb, setup.cfg.tol));
    (raw / dt_ou - 1e-9).ceil().max(1.0) * dt_ou
}

fn check_low(zeta: &SpectralField, setup: &LpSetup) -> Result<()> {
    if zeta.modes() != setup.modes {
        return Err(Error::ShapeMismatch { expected: setup.modes, found: zeta.modes() });
    }
    if zeta.coeffs()[setup.n..].iter().any(|c| *c != 0.0) {
        return Err(Error::InvalidParameter("base point must lie in the low modes".into()));
    }
    Ok(())
}

/// Heat-side graph through `zeta` for the random equation
/// `u_t = Delta u + f(u + z(t))`, with `z` the chosen component of `path`.
pub fn lp_solve_heat(zeta: &SpectralField, path: &OUPath, which: Forcing, setup: &LpSetup) -> Result<LPSolution> {
    setup.validate()?;
    check_low(zeta, setup)?;
    let gap = heat_gap(setup)?;
    let forcing = NodeForcing::new(path, which, setup.cfg.substeps)?;
    let fb = f_bound(&setup.f, zeta.l2_norm(), || path_sup(path, which));
    let t_back = resolve_t_back(setup, gap.eta, gap.beta, fb, path.dt());
    let nodes = node_count(t_back, path.dt(), setup.cfg.substeps) + 1;
    if !forcing.covers(-(nodes as i64 - 1), 0) {
        return Err(Error::OutsideGrid(-t_back));
    }
    let h = forcing.step();
    let transform = SineTransform::new(setup.modes, setup.phys_points);
    let m = setup.modes;
    let f = &setup.f;
    let rhs = move |i: usize, u: &[f64], out: &mut [f64], scratch: &mut [f64]| {
        let mut z = vec![0.0; m];
        forcing.at(-(i as i64), &mut z);
        transform.nemytskii_into(f, u, Some(&z), out, scratch);
    };
    let out = heat_core(setup, h, nodes, gap.eta, zeta.coeffs(), &rhs)?;
    finish_heat(setup, zeta.coeffs()[..setup.n].to_vec(), out, h, nodes, t_back, gap)
}

fn finish_heat(
    setup: &LpSetup,
    base: Vec<f64>,
    out: HeatOutcome,
    h: f64,
    nodes: usize,
    t_back: f64,
    gap: GapReport,
) -> Result<LPSolution> {
    let m = setup.modes;
    let mut graph = out.traj[..m].to_vec();
    graph[..setup.n].iter_mut().for_each(|x| *x = 0.0);
    let graph_u = SpectralField::from_coeffs(graph)?;
    let residuals = out.residuals;
    Ok(LPSolution {
        trajectory: WeightedTrajectory {
            times: (0..nodes).map(|i| -(i as f64) * h).collect(),
            modes: m,
            u: out.traj,
            v: None,
            eta: gap.eta,
            weighted_norm: out.weighted_norm,
        },
        base,
        graph_norm: graph_u.l2_norm(),
        graph_u,
        graph_v: None,
        iterations: residuals.len(),
        final_residual: *residuals.last().unwrap_or(&0.0),
        contraction_estimate: contraction(&residuals),
        residuals,
        t_back,
        gap,
    })
}

/// Heat-side graph around a given solution `u*` of the full equation:
/// solves for `U = u - u*` with right-hand side `f(U + u*) - f(u*)` and low
/// part `zeta_bar` at `t = 0`. `u_star[i]` is `u*` at node `t_i = -i h`.
pub fn lp_solve_heat_around(
    zeta_bar: &SpectralField,
    u_star: &[Vec<f64>],
    h: f64,
    setup: &LpSetup,
) -> Result<LPSolution> {
    setup.validate()?;
    check_low(zeta_bar, setup)?;
    let gap = heat_gap(setup)?;
    let nodes = u_star.len();
    if nodes < 3 || nodes.is_multiple_of(2) {
        return Err(Error::InvalidParameter("u* needs an odd number (at least 3) of nodes".into()));
    }
    let transform = SineTransform::new(setup.modes, setup.phys_points);
    let m = setup.modes;
    let f = &setup.f;
    let mut f_star = vec![vec![0.0; m]; nodes];
    let mut scratch = vec![0.0; setup.phys_points];
    for (us, fs) in u_star.iter().zip(f_star.iter_mut()) {
        transform.nemytskii_into(f, us, None, fs, &mut scratch);
    }
    let rhs = |i: usize, u: &[f64], out: &mut [f64], scratch: &mut [f64]| {
        transform.nemytskii_into(f, u, Some(&u_star[i]), out, scratch);
        for (o, s) in out.iter_mut().zip(&f_star[i]) {
            *o -= s;
        }
    };
    let out = heat_core(setup, h, nodes, gap.eta, zeta_bar.coeffs(), &rhs)?;
    let t_back = (nodes - 1) as f64 * h;
    finish_heat(setup, zeta_bar.coeffs()[..setup.n].to_vec(), out, h, nodes, t_back, gap)
}

/// Wave-side graph through `xi = sum_k xi_k e_k^+` (`k <= N`) for the
/// random equation `U_t = C U + (0, f(u + z_nu(t)))`.
pub fn lp_solve_wave(xi: &[f64], path: &OUPath, nu: f64, setup: &LpSetup) -> Result<LPSolution> {
    setup.validate()?;
    let geo = WaveGeometry::new(nu, setup.n)?;
    if xi.len() != setup.n {
        return Err(Error::ShapeMismatch { expected: setup.n, found: xi.len() });
    }
    if path.nu() != Some(nu) {
        return Err(Error::InvalidParameter(format!(
            "OU path was built for nu = {:?}, solver asked for {nu}",
            path.nu()
        )));
    }
    let case = GapCase::Wave { nu };
    let lf = effective_lipschitz(case, setup.n, setup.f.lipschitz())?;
    let gap = gap_check(case, setup.n, setup.cfg.k_const, lf, None)?;
    if !gap.pass {
        return Err(Error::InvalidParameter(format!(
            "spectral gap condition fails for nu = {nu} (gap value {:.4})",
            gap.gap_value
        )));
    }
    let forcing = NodeForcing::new(path, Forcing::WavePosition, setup.cfg.substeps)?;
    let xi_norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let fb = f_bound(&setup.f, xi_norm, || path_sup(path, Forcing::WavePosition));
    let t_back = resolve_t_back(setup, gap.eta, gap.beta, fb, path.dt());
    let nodes = node_count(t_back, path.dt(), setup.cfg.substeps) + 1;
    if !forcing.covers(-(nodes as i64 - 1), 0) {
        return Err(Error::OutsideGrid(-t_back));
    }
    let h = forcing.step();
    let m = setup.modes;
    let n = setup.n;
    let eta = gap.eta;

    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    let mut cks = Vec::with_capacity(n);
    let mut e_weight = Vec::with_capacity(n);
    for k in 1..=n {
        let e = geo.eigen(k);
        let s = 0.5 / e.c_k;
        plus.push(Channel::backward(e.lambda_plus, h, s));
        minus.push(Channel::forward(e.lambda_minus, h, -s));
        cks.push(e.c_k);
        e_weight.push(0.5 - 2.0 * nu * (k * k) as f64);
    }
    let drive = Vector2::new(0.0, 1.0);
    let high: Vec<Panel2> = (n + 1..=m).map(|k| Panel2::new(&c_matrix(k, nu), &drive, h)).collect();
    let u_weight: Vec<f64> = (1..=m).map(|k| geo.u_weight(k)).collect();
    let weights: Vec<f64> = (0..nodes).map(|i| (eta * i as f64 * h).exp()).collect();

    // native layout per node: [a_1..a_M, b_1..b_M] with (a, b) = (p, m) on
    // low modes and (u, v) on high modes
    let w = 2 * m;
    let mut state = vec![0.0; nodes * w];
    for k in 0..n {
        plus[k].run(xi[k], nodes, |_| 0.0, |i, y| state[i * w + k] = y);
    }
    let transform = SineTransform::new(m, setup.phys_points);
    let f = &setup.f;
    let rhs = |i: usize, u: &[f64], out: &mut [f64], scratch: &mut [f64]| {
        let mut z = vec![0.0; m];
        forcing.at(-(i as i64), &mut z);
        transform.nemytskii_into(f, u, Some(&z), out, scratch);
    };
    let position = |state: &[f64], pos: &mut [f64]| {
        for i in 0..nodes {
            let row = &state[i * w..(i + 1) * w];
            for k in 0..m {
                pos[i * m + k] = if k < n { row[k] + row[m + k] } else { row[k] };
            }
        }
    };
    let e_norm_sq = |row: &[f64]| -> f64 {
        let mut s = 0.0;
        for k in 0..m {
            let (a, b) = (row[k], row[m + k]);
            s += if k < n { e_weight[k] * (a * a + b * b) } else { u_weight[k] * a * a + b * b };
        }
        s
    };

    let mut pos = vec![0.0; nodes * m];
    let mut g = vec![0.0; nodes * m];
    let mut next = vec![0.0; nodes * w];
    let mut residuals = Vec::new();
    let mut diff = vec![0.0; w];
    let weighted_norm = loop {
        position(&state, &mut pos);
        eval_rhs(setup.cfg.exec, &pos, m, setup.phys_points, &rhs, &mut g);
        for k in 0..n {
            plus[k].run(xi[k], nodes, |i| g[i * m + k], |i, y| next[i * w + k] = y);
            minus[k].run(0.0, nodes, |i| g[i * m + k], |i, y| next[i * w + m + k] = y);
        }
        for (j, p) in high.iter().enumerate() {
            let k = n + j;
            let last = nodes - 1;
            let mut y = Vector2::zeros();
            next[last * w + k] = 0.0;
            next[last * w + m + k] = 0.0;
            for i in (2..=last).rev().step_by(2) {
                let gs = [g[i * m + k], g[(i - 1) * m + k], g[(i - 2) * m + k]];
                let y1 = p.e1 * y + p.w1[0] * gs[0] + p.w1[1] * gs[1] + p.w1[2] * gs[2];
                y = p.e2 * y + p.w2[0] * gs[0] + p.w2[1] * gs[1] + p.w2[2] * gs[2];
                next[(i - 1) * w + k] = y1[0];
                next[(i - 1) * w + m + k] = y1[1];
                next[(i - 2) * w + k] = y[0];
                next[(i - 2) * w + m + k] = y[1];
            }
        }
        let mut res = 0.0f64;
        let mut norm = 0.0f64;
        for i in 0..nodes {
            let (a, b) = (&next[i * w..(i + 1) * w], &state[i * w..(i + 1) * w]);
            for (d, (x, y)) in diff.iter_mut().zip(a.iter().zip(b)) {
                *d = x - y;
            }
            res = res.max(weights[i] * e_norm_sq(&diff).sqrt());
            norm = norm.max(weights[i] * e_norm_sq(a).sqrt());
        }
        std::mem::swap(&mut state, &mut next);
        if !res.is_finite() || !norm.is_finite() {
            return Err(Error::WeightedOverflow { iteration: residuals.len() + 1 });
        }
        residuals.push(res);
        if res <= setup.cfg.tol {
            break norm;
        }
        if residuals.len() >= setup.cfg.max_iters {
            return Err(Error::NoConvergence { iterations: residuals.len(), residual: res });
        }
    };
    if let Some(bound) = setup.cfg.tempered_bound {
        if weighted_norm > bound {
            return Err(Error::TemperedBound { norm: weighted_norm, bound });
        }
    }

    let mut u = vec![0.0; nodes * m];
    let mut v = vec![0.0; nodes * m];
    for i in 0..nodes {
        let row = &state[i * w..(i + 1) * w];
        for k in 0..m {
            let (a, b) = (row[k], row[m + k]);
            let (uu, vv) = if k < n { (a + b, cks[k] * (a - b)) } else { (a, b) };
            u[i * m + k] = uu;
            v[i * m + k] = vv;
        }
    }
    let mut gu = vec![0.0; m];
    let mut gv = vec![0.0; m];
    for k in 0..m {
        let (a, b) = (state[k], state[m + k]);
        if k < n {
            gu[k] = b;
            gv[k] = -cks[k] * b;
        } else {
            gu[k] = a;
            gv[k] = b;
        }
    }
    let graph_norm = geo.norm_sq(&gu, &gv).sqrt();
    Ok(LPSolution {
        trajectory: WeightedTrajectory {
            times: (0..nodes).map(|i| -(i as f64) * h).collect(),
            modes: m,
            u,
            v: Some(v),
            eta,
            weighted_norm,
        },
        base: xi.to_vec(),
        graph_u: SpectralField::from_coeffs(gu)?,
        graph_v: Some(SpectralField::from_coeffs(gv)?),
        graph_norm,
        iterations: residuals.len(),
        final_residual: *residuals.last().unwrap_or(&0.0),
        contraction_estimate: contraction(&residuals),
        residuals,
        t_back,
        gap,
    })
}

/// Point `(u0, u0_t)` of the heat manifold: `u0 = zeta + h(zeta)` and
/// `u0_t = Delta u0 + f(u0 + z(0))`.
pub fn manifold_point_heat(
    zeta: &SpectralField,
    path: &OUPath,
    which: Forcing,
    setup: &LpSetup,
) -> Result<(SpectralField, SpectralField, LPSolution)> {
    let sol = lp_solve_heat(zeta, path, which, setup)?;
    let (u0, _) = sol.state0();
    let z0 = SpectralField::from_coeffs(path.forcing(which, path.index_of(0.0)?)?.to_vec())?;
    let transform = SineTransform::new(setup.modes, setup.phys_points);
    let f0 = transform.apply_nonlinearity(&u0, &z0, &setup.f)?;
    let ut = &u0.laplacian() + &f0;
    Ok((u0, ut, sol))
}

/// Base points: `per_axis` values per axis in `[-R, R]` on the first
/// `min(N, 2)` low modes, kept when their norm is at most `R`.
pub fn base_grid(n: usize, radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let axes = n.min(2);
    let vals: Vec<f64> = if per_axis <= 1 {
        vec![0.0]
    } else {
        (0..per_axis)
            .map(|i| -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64)
            .collect()
    };
    let mut out = Vec::new();
    let total = vals.len().pow(axes as u32);
    for idx in 0..total {
        let mut p = vec![0.0; n];
        let mut r = idx;
        for a in (0..axes).rev() {
            p[a] = vals[r % vals.len()];
            r /= vals.len();
        }
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= radius * (1.0 + 1e-12) {
            out.push(p);
        }
    }
    out
}

fn low_field(modes: usize, coords: &[f64]) -> SpectralField {
    let mut c = vec![0.0; modes];
    c[..coords.len()].copy_from_slice(coords);
    SpectralField::from_coeffs(c).expect("finite base")
}

/// One solved base point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub base: Vec<f64>,
    pub graph_norm: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub contraction_estimate: Option<f64>,
    #[serde(skip)]
    pub graph: (SpectralField, Option<SpectralField>),
}

/// Manifold graph over a bounded base grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifoldSample {
    pub radius: f64,
    pub seed: Option<u64>,
    pub points: Vec<SamplePoint>,
    pub t_back: f64,
    pub gap: GapReport,
    /// Largest finite-difference slope of the graph over the sample.
    pub lipschitz_h_estimate: f64,
    /// `K^2 L_F / ((eta - beta)(1 - gap))`.
    pub lipschitz_h_bound: f64,
    /// The gap report re-evaluated with the estimated `L_h`.
    pub strong_gap: GapReport,
}

/// Solves the graph on every base point of [`base_grid`]. With `nu` the
/// wave graph is computed (bases are coefficients on `e_k^+`), otherwise
/// the heat graph forced by `which`.
pub fn manifold_sample(
    path: &OUPath,
    which: Forcing,
    nu: Option<f64>,
    setup: &LpSetup,
    radius: f64,
    per_axis: usize,
    seed: Option<u64>,
) -> Result<ManifoldSample> {
    let bases = base_grid(setup.n, radius, per_axis);
    let mut inner = setup.clone();
    inner.cfg.exec = Execution::Sequential;
    let solved: Vec<Result<LPSolution>> = setup.cfg.exec.map_range(bases.len(), |i| match nu {
        Some(nu) => lp_solve_wave(&bases[i], path, nu, &inner),
        None => lp_solve_heat(&low_field(setup.modes, &bases[i]), path, which, &inner),
    });
    let mut points = Vec::with_capacity(bases.len());
    let mut t_back = 0.0;
    let mut gap = None;
    for (b, s) in bases.iter().zip(solved) {
        let s = s.map_err(|e| match e {
            Error::NoConvergence { .. } | Error::WeightedOverflow { .. } => {
                Error::AtBasePoint { base: b.clone(), source: Box::new(e) }
            }
            other => other,
        })?;
        t_back = s.t_back;
        gap.get_or_insert(s.gap.clone());
        points.push(SamplePoint {
            base: b.clone(),
            graph_norm: s.graph_norm,
            iterations: s.iterations,
            final_residual: s.final_residual,
            contraction_estimate: s.contraction_estimate,
            graph: (s.graph_u.clone(), s.graph_v.clone()),
        });
    }
    let gap = gap.ok_or_else(|| Error::InvalidParameter("empty base grid".into()))?;
    let geo = nu.map(|nu| WaveGeometry::new(nu, setup.n)).transpose()?;
    let dist = |a: &SamplePoint, b: &SamplePoint| -> (f64, f64) {
        let du = &a.graph.0 - &b.graph.0;
        let dh = match (&geo, &a.graph.1, &b.graph.1) {
            (Some(g), Some(va), Some(vb)) => g.norm_sq(du.coeffs(), (va - vb).coeffs()).sqrt(),
            _ => du.l2_norm(),
        };
        let db: f64 = match &geo {
            Some(g) => {
                // base points are coefficients on e_k^+, with ||e_k^+||_E^2 = 1/2 - 2 nu k^2
                a.base
                    .iter()
                    .zip(&b.base)
                    .enumerate()
                    .map(|(i, (x, y))| (0.5 - 2.0 * g.nu * ((i + 1) * (i + 1)) as f64) * (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
            None => a.base.iter().zip(&b.base).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
        };
        (dh, db)
    };
    let mut lh = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (dh, db) = dist(&points[i], &points[j]);
            if db > 0.0 {
                lh = lh.max(dh / db);
            }
        }
    }
    let k = gap.k_const;
    let bound = k * k * gap.lipschitz_f / ((gap.eta - gap.beta) * (1.0 - gap.gap_value));
    let strong_gap = gap_check(gap.case, gap.n, k, gap.lipschitz_f, Some(lh))?;
    Ok(ManifoldSample {
        radius,
        seed,
        points,
        t_back,
        gap,
        lipschitz_h_estimate: lh,
        lipschitz_h_bound: bound,
        strong_gap,
    })
}

/// Matched distance between the heat and wave manifolds at one base point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistancePoint {
    pub base: Vec<f64>,
    /// `P_1` coordinates (on `e_k^+`) of the lifted heat point.
    pub xi: Vec<f64>,
    pub e_distance: f64,
    pub l2_distance: f64,
    pub heat_iterations: usize,
    pub wave_iterations: usize,
    /// `nu ||u_tt(0)||` from a backward second difference of the heat
    /// trajectory.
    pub nu_utt: f64,
}

/// Distances for all base points at one `nu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceReport {
    pub nu: f64,
    pub points: Vec<DistancePoint>,
    pub sup_e_distance: f64,
    pub sup_l2_distance: f64,
    pub heat_gap: GapReport,
    pub wave_gap: GapReport,
}

/// For each heat base point: solve the heat graph forced by the wave
/// position path, lift the point to `U = (u0, u0/2 + nu u0_t)`, take
/// `xi = P_1 U`, solve the wave graph at `xi` and compare.
pub fn manifold_distance(path: &OUPath, nu: f64, setup: &LpSetup, bases: &[Vec<f64>]) -> Result<DistanceReport> {
    let geo = WaveGeometry::new(nu, setup.n)?;
    let mut inner = setup.clone();
    inner.cfg.exec = Execution::Sequential;
    let results: Vec<Result<(DistancePoint, GapReport, GapReport)>> =
        setup.cfg.exec.map_range(bases.len(), |i| {
            let zeta = low_field(setup.modes, &bases[i]);
            let (u0, ut, heat) = manifold_point_heat(&zeta, path, Forcing::WavePosition, &inner)?;
            let v0 = &(&u0 * 0.5) + &(&ut * nu);
            let lifted = geo.phase_point(u0.clone(), v0)?;
            let xi: Vec<f64> = (1..=setup.n).map(|k| geo.to_eigen(k, lifted.u.mode(k), lifted.v.mode(k)).0).collect();
            let wave = lp_solve_wave(&xi, path, nu, &inner)?;
            let (wu, wv) = wave.state0();
            let wpoint = geo.phase_point(wu, wv.expect("wave state"))?;
            let diff = lifted.sub(&wpoint)?;
            let tr = &heat.trajectory;
            let nu_utt = if tr.len() > 2 {
                let hh = tr.step();
                let m = setup.modes;
                let s: f64 = (0..m)
                    .map(|k| (tr.u_at(0)[k] - 2.0 * tr.u_at(1)[k] + tr.u_at(2)[k]) / (hh * hh))
                    .map(|x| x * x)
                    .sum();
                nu * s.sqrt()
            } else {
                0.0
            };
            Ok((
                DistancePoint {
                    base: bases[i].clone(),
                    xi,
                    e_distance: diff.norm_e(),
                    l2_distance: diff.u.l2_norm(),
                    heat_iterations: heat.iterations,
                    wave_iterations: wave.iterations,
                    nu_utt,
                },
                heat.gap,
                wave.gap,
            ))
        });
    let mut points = Vec::with_capacity(bases.len());
    let mut gaps = None;
    for (b, r) in bases.iter().zip(results) {
        let (p, hg, wg) = r.map_err(|e| match e {
            Error::NoConvergence { .. } | Error::WeightedOverflow { .. } => {
                Error::AtBasePoint { base: b.clone(), source: Box::new(e) }
            }
            other => other,
        })?;
        gaps.get_or_insert((hg, wg));
        points.push(p);
    }
    let (heat_gap, wave_gap) = gaps.ok_or_else(|| Error::InvalidParameter("empty base set".into()))?;
    Ok(DistanceReport {
        nu,
        sup_e_distance: points.iter().map(|p| p.e_distance).fold(0.0, f64::max),
        sup_l2_distance: points.iter().map(|p| p.l2_distance).fold(0.0, f64::max),
        points,
        heat_gap,
        wave_gap,
    })
}

/// High-mode distance to the manifold along a forward orbit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Least-squares slope of `ln residual` against `t` over the samples
    /// with `t > 0`.
    pub decay_rate: Option<f64>,
}

/// Starts at the heat manifold point over `zeta` (plus `offset` added to
/// mode `N + 1`), integrates the random equation forward, and at every
/// `sample_dt` compares the high part with the graph recomputed on the
/// shifted fiber.
pub fn invariance_residual(
    zeta: &SpectralField,
    path: &OUPath,
    which: Forcing,
    setup: &LpSetup,
    horizon: f64,
    sample_dt: f64,
    offset: f64,
) -> Result<InvarianceReport> {
    let sol = lp_solve_heat(zeta, path, which, setup)?;
    let m = setup.modes;
    let n = setup.n;
    let mut start = sol.trajectory.u_at(0).to_vec();
    start[n] += offset;
    let forcing = NodeForcing::new(path, which, setup.cfg.substeps)?;
    let h = forcing.step();
    let flow = RandomHeatFlow::new(m, setup.phys_points, setup.f.clone(), h);
    let per_sample = ((sample_dt / path.dt()).round() as i64).max(1) * setup.cfg.substeps as i64;
    let samples = (horizon / (per_sample as f64 * h)).round() as i64;
    let traj = flow.integrate(&start, &forcing, 0, samples * per_sample)?;
    let mut fixed = setup.clone();
    fixed.cfg.t_back = Some(sol.t_back);
    let mut times = Vec::new();
    let mut residuals = Vec::new();
    for j in 0..=samples {
        let node = (j * per_sample) as usize;
        let t = node as f64 * h;
        let state = &traj[node];
        let shifted = path.shift(t)?;
        let base = low_field(m, &state[..n]);
        let s = lp_solve_heat(&base, &shifted, which, &fixed)?;
        let d: f64 = (n..m).map(|k| (state[k] - s.graph_u[k]).powi(2)).sum::<f64>().sqrt();
        times.push(t);
        residuals.push(d);
    }
    let decay_rate = {
        let pts: Vec<(f64, f64)> = times
            .iter()
            .zip(&residuals)
            .filter(|(t, r)| **t > 0.0 && **r > 0.0)
            .map(|(t, r)| (*t, r.ln()))
            .collect();
        (pts.len() >= 2).then(|| {
            let n = pts.len() as f64;
            let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
            sxy / sxx
        })
    };
    Ok(InvarianceReport {
        max_residual: residuals.iter().cloned().fold(0.0, f64::max),
        times,
        residuals,
        decay_rate,
    })
}

/// Two constructions of the manifold point of the full heat equation over
/// the low coordinates `xi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub xi: Vec<f64>,
    pub pullback_horizon: f64,
    /// `||Q (u_shift - u_around)||` at `t = 0`.
    pub discrepancy: f64,
    /// `||u*(0)||` from the pullback.
    pub u_star_norm: f64,
    /// `||u*(0)||` change between half and full pullback horizon.
    pub pullback_change: f64,
    /// Whether `pullback_change` is within the pullback tolerance.
    pub pullback_settled: bool,
    pub shift_iterations: usize,
    pub around_iterations: usize,
    pub t_back: f64,
}

/// Pullback horizon with `e^{-(1 - L_f) T} F_bound < tol`.
pub fn auto_pullback_horizon(f: &Nonlinearity, tol: f64) -> f64 {
    let rate = (1.0 - f.lipschitz()).max(1e-3);
    let fb = f.l2_bound().unwrap_or(1.0).max(1e-300);
    ((fb / tol).ln() / rate).max(1.0)
}

/// Manifold point over `xi` built (i) from the graph of the random equation
/// shifted by `z*`, and (ii) from the graph around a pullback approximation
/// of the stationary solution `u*`. The heat component of `path` is used.
pub fn consistency_check(
    xi: &[f64],
    path: &OUPath,
    setup: &LpSetup,
    pullback_horizon: f64,
    pullback_tol: f64,
) -> Result<ConsistencyReport> {
    let m = setup.modes;
    let n = setup.n;
    if xi.len() != n {
        return Err(Error::ShapeMismatch { expected: n, found: xi.len() });
    }
    let i0 = path.index_of(0.0)?;
    let z0 = path.heat(i0);

    // (i) u = u~ + z*, with P u~(0) = xi - P z*(0)
    let zeta: Vec<f64> = (0..n).map(|k| xi[k] - z0[k]).collect();
    let sol = lp_solve_heat(&low_field(m, &zeta), path, Forcing::Heat, setup)?;
    let shift_point: Vec<f64> = sol.trajectory.u_at(0).iter().zip(z0).map(|(a, b)| a + b).collect();

    // (ii) u = U + u*, with u* = V* + z* from the pullback
    let forcing = NodeForcing::new(path, Forcing::Heat, setup.cfg.substeps)?;
    let h = forcing.step();
    let nodes = sol.trajectory.len();
    let lo = -(nodes as i64 - 1);
    let horizon_nodes = 2 * (pullback_horizon / (2.0 * h)).round().max(1.0) as i64;
    let flow = RandomHeatFlow::new(m, setup.phys_points, setup.f.clone(), h);
    let v_star = flow.pullback(&forcing, lo, 0, horizon_nodes)?;
    let half_nodes = 2 * (horizon_nodes / 4).max(1);
    let v_half = flow.pullback(&forcing, 0, 0, half_nodes - lo)?;
    let pullback_change = v_half[0]
        .iter()
        .zip(v_star.last().expect("pullback reaches t = 0"))
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    // v_star[j] sits at node lo + j; the solver wants node -i at index i
    let mut u_star = vec![vec![0.0; m]; nodes];
    let mut z = vec![0.0; m];
    for (j, v) in v_star.iter().enumerate() {
        let node = lo + j as i64;
        forcing.at(node, &mut z);
        let i = (-node) as usize;
        for k in 0..m {
            u_star[i][k] = v[k] + z[k];
        }
    }
    let zeta_bar: Vec<f64> = (0..n).map(|k| xi[k] - u_star[0][k]).collect();
    let mut fixed = setup.clone();
    fixed.cfg.t_back = Some(sol.t_back);
    let around = lp_solve_heat_around(&low_field(m, &zeta_bar), &u_star, h, &fixed)?;
    let around_point: Vec<f64> = around.trajectory.u_at(0).iter().zip(&u_star[0]).map(|(a, b)| a + b).collect();

    let discrepancy = (n..m).map(|k| (shift_point[k] - around_point[k]).powi(2)).sum::<f64>().sqrt();
    Ok(ConsistencyReport {
        xi: xi.to_vec(),
        pullback_horizon,
        discrepancy,
        u_star_norm: u_star[0].iter().map(|x| x * x).sum::<f64>().sqrt(),
        pullback_change,
        pullback_settled: pullback_change <= pullback_tol,
        shift_iterations: sol.iterations,
        around_iterations: around.iterations,
        t_back: sol.t_back,
    })
}

/// Low-mode coordinates (on `e_k^+`) of `P_1 U`.
pub fn p1_coordinates(u: &PhasePoint) -> Vec<f64> {
    let g = u.geometry();
    (1..=u.n).map(|k| g.to_eigen(k, u.u.mode(k), u.v.mode(k)).0).collect()
}

/// Horizon needed by a solve with this setup, for sizing OU paths.
pub fn required_t_back(setup: &LpSetup, case: GapCase, dt_ou: f64) -> Result<f64> {
    let (_, beta, eta) = dichotomy_rates(case, setup.n)?;
    let fb = setup.f.l2_bound().unwrap_or(1.0);
    Ok(resolve_t_back(setup, eta, beta, fb, dt_ou))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoisePath;
    use crate::spectral::QSpectrum;
    use approx::assert_abs_diff_eq;

    fn desk_path(q: &QSpectrum, nu: Option<f64>, t0: f64, t1: f64, dt: f64) -> OUPath {
        let noise = NoisePath::covering(42, dt, q.modes(), t0, t1).unwrap();
        OUPath::stationary(&noise, q, nu).unwrap()
    }

    #[test]
    fn zero_nonlinearity_gives_flat_heat_graph() {
        let q = QSpectrum::power_law(8, 4.0, 1.0).unwrap();
        let path = desk_path(&q, None, -10.0, 0.0, 0.01);
        let setup = LpSetup::new(8, 2, Nonlinearity::Zero);
        let zeta = &SpectralField::basis(8, 1) * 0.3;
        let sol = lp_solve_heat(&zeta, &path, Forcing::Heat, &setup).unwrap();
        assert_eq!(sol.graph_norm, 0.0);
        let i = sol.trajectory.len() / 3;
        let t = sol.trajectory.times[i];
        assert_abs_diff_eq!(sol.trajectory.u_at(i)[0], 0.3 * (-t).exp(), epsilon = 1e-12 * (-t).exp());
    }

    #[test]
    fn zero_is_a_fixed_point_without_noise() {
        let q = QSpectrum::zero(8);
        let path = desk_path(&q, Some(1e-3), -10.0, 0.0, 0.01);
        let setup = LpSetup::new(8, 2, Nonlinearity::ScaledSine { a: 0.5 });
        let sol = lp_solve_heat(&SpectralField::zeros(8), &path, Forcing::Heat, &setup).unwrap();
        assert_eq!(sol.graph_norm, 0.0);
        let w = lp_solve_wave(&[0.0, 0.0], &path, 1e-3, &setup).unwrap();
        assert_eq!(w.graph_norm, 0.0);
        assert!(w.trajectory.u.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn zero_nonlinearity_gives_flat_wave_graph() {
        let q = QSpectrum::power_law(8, 4.0, 1.0).unwrap();
        let nu = 1e-3;
        let path = desk_path(&q, Some(nu), -10.0, 0.0, 0.01);
        let setup = LpSetup::new(8, 2, Nonlinearity::Zero);
        let sol = lp_solve_wave(&[0.3, 0.0], &path, nu, &setup).unwrap();
        assert_eq!(sol.graph_norm, 0.0);
        let geo = WaveGeometry::new(nu, 2).unwrap();
        let i = 40;
        let t = sol.trajectory.times[i];
        let e = geo.eigen(1);
        assert_abs_diff_eq!(sol.trajectory.u_at(i)[0], 0.3 * (e.lambda_plus * t).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(sol.trajectory.v_at(i).unwrap()[0], 0.3 * e.c_k * (e.lambda_plus * t).exp(), epsilon = 1e-12);
    }

    #[test]
    fn heat_solve_contracts_and_reports() {
        let q = QSpectrum::power_law(16, 4.0, 1.0).unwrap();
        let path = desk_path(&q, None, -20.0, 0.0, 0.01);
        let setup = LpSetup::new(16, 2, Nonlinearity::ScaledSine { a: 0.5 });
        let zeta = &SpectralField::basis(16, 1) * 0.3;
        let sol = lp_solve_heat(&zeta, &path, Forcing::Heat, &setup).unwrap();
        assert!(sol.final_residual <= 1e-8);
        assert!(sol.contraction_estimate.unwrap() <= sol.gap.gap_value + 0.1);
        assert!(sol.graph_norm > 0.0);
        let json = serde_json::to_string(&sol.gap).unwrap();
        assert!(json.contains("\"case\":\"heat\""));
    }

    #[test]
    fn gap_failure_is_rejected() {
        let q = QSpectrum::zero(8);
        let path = desk_path(&q, None, -10.0, 0.0, 0.01);
        let setup = LpSetup::new(8, 1, Nonlinearity::ScaledSine { a: 1.0 });
        assert!(lp_solve_heat(&SpectralField::zeros(8), &path, Forcing::Heat, &setup).is_err());
    }

    #[test]
    fn short_path_is_rejected() {
        let q = QSpectrum::zero(8);
        let path = desk_path(&q, None, -1.0, 0.0, 0.01);
        let setup = LpSetup::new(8, 2, Nonlinearity::ScaledSine { a: 0.5 });
        assert!(matches!(
            lp_solve_heat(&SpectralField::zeros(8), &path, Forcing::Heat, &setup),
            Err(Error::OutsideGrid(_))
        ));
    }

    #[test]
    fn base_grid_has_thirteen_points() {
        let g = base_grid(2, 1.0, 5);
        assert_eq!(g.len(), 13);
        assert!(g.iter().all(|p| p.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12));
        assert_eq!(base_grid(1, 1.0, 5).len(), 5);
        assert_eq!(base_grid(3, 1.0, 5)[0].len(), 3);
    }

    #[test]
    fn flat_manifold_distance_is_the_minus_component() {
        // f = 0: the lifted heat point (zeta, zeta (1/2 - nu k^2)) differs
        // from the wave graph point by m_k e_k^- only
        let q = QSpectrum::zero(8);
        let nu = 1e-3;
        let path = desk_path(&q, Some(nu), -10.0, 0.0, 0.01);
        let setup = LpSetup::new(8, 2, Nonlinearity::Zero);
        let bases = base_grid(2, 1.0, 3);
        let r = manifold_distance(&path, nu, &setup, &bases).unwrap();
        for (b, p) in bases.iter().zip(&r.points) {
            let mut e2 = 0.0;
            let mut l2 = 0.0;
            for (i, z) in b.iter().enumerate() {
                let kk = ((i + 1) * (i + 1)) as f64;
                let c = (1.0 - 4.0 * nu * kk).sqrt() / 2.0;
                let m = 0.5 * z * (1.0 - (0.5 - nu * kk) / c);
                e2 += (0.5 - 2.0 * nu * kk) * m * m;
                l2 += m * m;
            }
            assert_abs_diff_eq!(p.e_distance, e2.sqrt(), epsilon = 1e-13);
            assert_abs_diff_eq!(p.l2_distance, l2.sqrt(), epsilon = 1e-13);
        }
    }

    #[test]
    fn manifold_point_without_noise_or_nonlinearity() {
        let q = QSpectrum::zero(8);
        let path = desk_path(&q, None, -10.0, 0.0, 0.01);
        let setup = LpSetup::new(8, 2, Nonlinearity::Zero);
        let (u0, ut, _) = manifold_point_heat(&SpectralField::basis(8, 1), &path, Forcing::Heat, &setup).unwrap();
        assert_eq!(u0, SpectralField::basis(8, 1));
        assert_eq!(ut, &SpectralField::basis(8, 1) * -1.0);
        let (u0, ut, _) = manifold_point_heat(&SpectralField::zeros(8), &path, Forcing::Heat, &setup).unwrap();
        assert_eq!((u0.max_abs(), ut.max_abs()), (0.0, 0.0));
    }
}
