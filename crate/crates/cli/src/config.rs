//! Flat `key = value` configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use skm_core::error::{Error, Result};
use skm_core::spectral::{Nonlinearity, QSpectrum};

/// The experiments exposed as subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    GapCheck,
    Stationary,
    Sk,
    Manifold,
    ManifoldDist,
    Consistency,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::GapCheck,
        Experiment::Stationary,
        Experiment::Sk,
        Experiment::Manifold,
        Experiment::ManifoldDist,
        Experiment::Consistency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::GapCheck => "gap-check",
            Experiment::Stationary => "stationary",
            Experiment::Sk => "sk",
            Experiment::Manifold => "manifold",
            Experiment::ManifoldDist => "manifold-dist",
            Experiment::Consistency => "consistency",
        }
    }

    /// Default `nu` list.
    pub fn default_nu(self) -> Vec<f64> {
        match self {
            Experiment::GapCheck | Experiment::Manifold => vec![1e-4],
            Experiment::Stationary => vec![1e-1, 1e-2],
            Experiment::Sk => vec![1e-1, 1e-2, 1e-3],
            Experiment::ManifoldDist => vec![1e-2, 1e-3, 1e-4],
            Experiment::Consistency => vec![],
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    Heat,
    Wave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QLaw {
    /// `q_k = k^(-p)`.
    Power,
    /// `q_1 = 1`, all other modes zero.
    Single,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FKind {
    Sine,
    Linear,
    Zero,
}

/// Resolved experiment parameters. Every key has a default; see
/// [`ExperimentConfig::KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub modes: usize,
    pub cutoff: usize,
    pub nu: Vec<f64>,
    pub case: Case,
    pub radius: f64,
    pub grid_points: usize,
    pub t_end: f64,
    pub dt: f64,
    pub ou_dt: f64,
    pub substeps: usize,
    pub t_back: Option<f64>,
    pub lp_tol: f64,
    pub max_iters: usize,
    pub k_const: f64,
    pub lipschitz: Option<f64>,
    pub pullback_tol: f64,
    pub pullback_horizon: Option<f64>,
    pub replicas: usize,
    pub stationary_replicas: usize,
    pub stationary_steps: usize,
    pub seed: u64,
    pub q_law: QLaw,
    pub q_exponent: f64,
    pub sigma: f64,
    pub f: FKind,
    pub f_amplitude: f64,
    pub delta: f64,
    pub u0: Vec<f64>,
    pub base: Vec<f64>,
    pub invariance: bool,
    pub t_inv: f64,
    pub sample_dt: f64,
    pub offset: f64,
    pub phys_points: Option<usize>,
    pub parallel: bool,
    pub dump: bool,
    pub output: PathBuf,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{v}` for key `{key}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse(key, x)).collect()
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>> {
    if v.trim() == "auto" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("cannot parse `{v}` as a boolean for key `{key}`"))),
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map_or("auto".into(), |x| x.to_string())
}

/// Splits a config text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", no + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Recognised keys with their documentation.
    pub const KEYS: [(&'static str, &'static str); 38] = [
        ("modes", "Galerkin modes M (16)"),
        ("cutoff", "low-mode cutoff N (2)"),
        ("nu", "comma list of nu values (per experiment)"),
        ("case", "heat | wave (heat)"),
        ("radius", "base-grid radius R (1)"),
        ("grid_points", "grid points per axis (5)"),
        ("t_end", "SK horizon T (1)"),
        ("dt", "SK time step (1e-3)"),
        ("ou_dt", "OU grid step for the manifold solvers (0.01)"),
        ("substeps", "solver nodes per OU step, even (4)"),
        ("t_back", "backward horizon or auto (auto)"),
        ("lp_tol", "fixed-point tolerance (1e-8)"),
        ("max_iters", "fixed-point iteration cap (500)"),
        ("k_const", "dichotomy constant K (1)"),
        ("lipschitz", "override of L_F for gap-check, or auto (auto)"),
        ("pullback_tol", "pullback settling tolerance (1e-8)"),
        ("pullback_horizon", "pullback horizon or auto (auto)"),
        ("replicas", "SK replicas (200)"),
        ("stationary_replicas", "stationary-law replicas, >= 1000 (100000)"),
        ("stationary_steps", "exact OU steps after the stationary draw (10)"),
        ("seed", "noise seed (42)"),
        ("q_law", "power | single | zero (power)"),
        ("q_exponent", "p in q_k = k^(-p) (4)"),
        ("sigma", "noise intensity (1)"),
        ("f", "sine | linear | zero (sine)"),
        ("f_amplitude", "a in f = a sin u or f = a u (0.5)"),
        ("delta", "SK exceedance threshold (0.1)"),
        ("u0", "comma list of initial coefficients (0.3)"),
        ("base", "comma list of low-mode base coordinates (0.3,0)"),
        ("invariance", "also run the invariance check in `manifold` (false)"),
        ("t_inv", "invariance horizon (0.5)"),
        ("sample_dt", "invariance sampling interval (0.1)"),
        ("offset", "off-manifold perturbation of mode N+1 (0.1)"),
        ("phys_points", "quadrature points or auto = 2M (auto)"),
        ("parallel", "use the thread pool (true)"),
        ("dump", "write per-trajectory CSV dumps (false)"),
        ("output", "output directory (skm-out)"),
        ("experiment", "experiment name (set by the subcommand)"),
    ];

    pub fn defaults(experiment: Experiment) -> Self {
        Self {
            experiment,
            modes: 16,
            cutoff: 2,
            nu: experiment.default_nu(),
            case: Case::Heat,
            radius: 1.0,
            grid_points: 5,
            t_end: 1.0,
            dt: 1e-3,
            ou_dt: 0.01,
            substeps: 4,
            t_back: None,
            lp_tol: 1e-8,
            max_iters: 500,
            k_const: 1.0,
            lipschitz: None,
            pullback_tol: 1e-8,
            pullback_horizon: None,
            replicas: 200,
            stationary_replicas: 100_000,
            stationary_steps: 10,
            seed: 42,
            q_law: QLaw::Power,
            q_exponent: 4.0,
            sigma: 1.0,
            f: FKind::Sine,
            f_amplitude: 0.5,
            delta: 0.1,
            u0: vec![0.3],
            base: vec![0.3, 0.0],
            invariance: false,
            t_inv: 0.5,
            sample_dt: 0.1,
            offset: 0.1,
            phys_points: None,
            parallel: true,
            dump: false,
            output: PathBuf::from("skm-out"),
        }
    }

    /// Applies one key; later calls override earlier ones.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "experiment" => {
                let e: Experiment = v.trim().parse()?;
                if e != self.experiment {
                    return Err(Error::Config(format!(
                        "config names experiment `{e}` but `{}` was requested",
                        self.experiment
                    )));
                }
            }
            "modes" => self.modes = parse(key, v)?,
            "cutoff" => self.cutoff = parse(key, v)?,
            "nu" => self.nu = parse_list(key, v)?,
            "case" => {
                self.case = match v.trim() {
                    "heat" => Case::Heat,
                    "wave" => Case::Wave,
                    _ => return Err(Error::Config(format!("case must be heat or wave, got `{v}`"))),
                }
            }
            "radius" => self.radius = parse(key, v)?,
            "grid_points" => self.grid_points = parse(key, v)?,
            "t_end" => self.t_end = parse(key, v)?,
            "dt" => self.dt = parse(key, v)?,
            "ou_dt" => self.ou_dt = parse(key, v)?,
            "substeps" => self.substeps = parse(key, v)?,
            "t_back" => self.t_back = parse_opt(key, v)?,
            "lp_tol" => self.lp_tol = parse(key, v)?,
            "max_iters" => self.max_iters = parse(key, v)?,
            "k_const" => self.k_const = parse(key, v)?,
            "lipschitz" => self.lipschitz = parse_opt(key, v)?,
            "pullback_tol" => self.pullback_tol = parse(key, v)?,
            "pullback_horizon" => self.pullback_horizon = parse_opt(key, v)?,
            "replicas" => self.replicas = parse(key, v)?,
            "stationary_replicas" => self.stationary_replicas = parse(key, v)?,
            "stationary_steps" => self.stationary_steps = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "q_law" => {
                self.q_law = match v.trim() {
                    "power" => QLaw::Power,
                    "single" => QLaw::Single,
                    "zero" => QLaw::Zero,
                    _ => return Err(Error::Config(format!("q_law must be power, single or zero, got `{v}`"))),
                }
            }
            "q_exponent" => self.q_exponent = parse(key, v)?,
            "sigma" => self.sigma = parse(key, v)?,
            "f" => {
                self.f = match v.trim() {
                    "sine" => FKind::Sine,
                    "linear" => FKind::Linear,
                    "zero" => FKind::Zero,
                    _ => return Err(Error::Config(format!("f must be sine, linear or zero, got `{v}`"))),
                }
            }
            "f_amplitude" => self.f_amplitude = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "u0" => self.u0 = parse_list(key, v)?,
            "base" => self.base = parse_list(key, v)?,
            "invariance" => self.invariance = parse_bool(key, v)?,
            "t_inv" => self.t_inv = parse(key, v)?,
            "sample_dt" => self.sample_dt = parse(key, v)?,
            "offset" => self.offset = parse(key, v)?,
            "phys_points" => {
                self.phys_points = if v.trim() == "auto" { None } else { Some(parse(key, v)?) }
            }
            "parallel" => self.parallel = parse_bool(key, v)?,
            "dump" => self.dump = parse_bool(key, v)?,
            "output" => self.output = PathBuf::from(v.trim()),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Defaults, then the config text, then the overrides, then validation.
    pub fn resolve(experiment: Experiment, text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::defaults(experiment);
        if let Some(text) = text {
            for (k, v) in parse_pairs(text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        match self.f {
            FKind::Sine => Nonlinearity::ScaledSine { a: self.f_amplitude },
            FKind::Linear => Nonlinearity::Linear { a: self.f_amplitude },
            FKind::Zero => Nonlinearity::Zero,
        }
    }

    pub fn q_spectrum(&self) -> Result<QSpectrum> {
        match self.q_law {
            QLaw::Power => QSpectrum::power_law(self.modes, self.q_exponent, self.sigma),
            QLaw::Single => {
                let mut q = vec![0.0; self.modes];
                q[0] = 1.0;
                QSpectrum::new(q, self.sigma)
            }
            QLaw::Zero => Ok(QSpectrum::zero(self.modes)),
        }
    }

    pub fn phys_points(&self) -> usize {
        self.phys_points.unwrap_or(2 * self.modes)
    }

    fn uses_wave_manifold(&self) -> bool {
        match self.experiment {
            Experiment::ManifoldDist => true,
            Experiment::GapCheck | Experiment::Manifold => self.case == Case::Wave,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.modes < 2 {
            return bad("modes must be at least 2".into());
        }
        if self.cutoff == 0 || self.cutoff >= self.modes {
            return bad(format!("cutoff must lie in 1..{}", self.modes));
        }
        let positive = [
            ("radius", self.radius),
            ("t_end", self.t_end),
            ("dt", self.dt),
            ("ou_dt", self.ou_dt),
            ("lp_tol", self.lp_tol),
            ("k_const", self.k_const),
            ("pullback_tol", self.pullback_tol),
            ("delta", self.delta),
            ("t_inv", self.t_inv),
            ("sample_dt", self.sample_dt),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be positive and finite, got {v}"));
            }
        }
        for (k, v) in [("t_back", self.t_back), ("pullback_horizon", self.pullback_horizon), ("lipschitz", self.lipschitz)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{k} must be positive and finite, got {v}"));
                }
            }
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() || !(self.q_exponent > 1.0) {
            return bad("sigma must be nonnegative and q_exponent above 1".into());
        }
        if self.substeps == 0 || !self.substeps.is_multiple_of(2) {
            return bad("substeps must be a positive even number".into());
        }
        if self.grid_points == 0 || self.max_iters == 0 || self.replicas == 0 {
            return bad("grid_points, max_iters and replicas must be positive".into());
        }
        if self.experiment == Experiment::Stationary && self.stationary_replicas < 1000 {
            return bad("stationary_replicas must be at least 1000".into());
        }
        if self.phys_points() < 2 * self.modes {
            return bad("phys_points must be at least 2 modes".into());
        }
        if self.u0.len() > self.modes {
            return bad("u0 has more coefficients than modes".into());
        }
        if self.experiment == Experiment::Consistency && self.base.len() != self.cutoff {
            return bad(format!("base needs {} coordinates", self.cutoff));
        }
        let lf = self.nonlinearity().lipschitz();
        if lf > 1.0 {
            return bad(format!("L_f = {lf} exceeds 1"));
        }
        for &nu in &self.nu {
            if !(nu > 0.0 && nu.is_finite()) {
                return bad(format!("nu must be positive, got {nu}"));
            }
            let limit = 1.0 / (4.0 * ((self.cutoff + 1) * (self.cutoff + 1)) as f64);
            if self.uses_wave_manifold() && nu >= limit {
                return bad(format!("nu = {nu} must be below 1/(4(N+1)^2) = {limit}"));
            }
        }
        let needs_nu = match self.experiment {
            Experiment::Stationary | Experiment::Sk | Experiment::ManifoldDist => true,
            _ => self.uses_wave_manifold(),
        };
        if needs_nu && self.nu.is_empty() {
            return bad("nu list is empty".into());
        }
        Ok(())
    }

    /// Every key with its resolved value.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let case = match self.case {
            Case::Heat => "heat",
            Case::Wave => "wave",
        };
        let q_law = match self.q_law {
            QLaw::Power => "power",
            QLaw::Single => "single",
            QLaw::Zero => "zero",
        };
        let f = match self.f {
            FKind::Sine => "sine",
            FKind::Linear => "linear",
            FKind::Zero => "zero",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("modes", self.modes.to_string()),
            ("cutoff", self.cutoff.to_string()),
            ("nu", list(&self.nu)),
            ("case", case.into()),
            ("radius", self.radius.to_string()),
            ("grid_points", self.grid_points.to_string()),
            ("t_end", self.t_end.to_string()),
            ("dt", self.dt.to_string()),
            ("ou_dt", self.ou_dt.to_string()),
            ("substeps", self.substeps.to_string()),
            ("t_back", opt(self.t_back)),
            ("lp_tol", self.lp_tol.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("k_const", self.k_const.to_string()),
            ("lipschitz", opt(self.lipschitz)),
            ("pullback_tol", self.pullback_tol.to_string()),
            ("pullback_horizon", opt(self.pullback_horizon)),
            ("replicas", self.replicas.to_string()),
            ("stationary_replicas", self.stationary_replicas.to_string()),
            ("stationary_steps", self.stationary_steps.to_string()),
            ("seed", self.seed.to_string()),
            ("q_law", q_law.into()),
            ("q_exponent", self.q_exponent.to_string()),
            ("sigma", self.sigma.to_string()),
            ("f", f.into()),
            ("f_amplitude", self.f_amplitude.to_string()),
            ("delta", self.delta.to_string()),
            ("u0", list(&self.u0)),
            ("base", list(&self.base)),
            ("invariance", self.invariance.to_string()),
            ("t_inv", self.t_inv.to_string()),
            ("sample_dt", self.sample_dt.to_string()),
            ("offset", self.offset.to_string()),
            ("phys_points", self.phys_points.map_or("auto".into(), |p| p.to_string())),
            ("parallel", self.parallel.to_string()),
            ("dump", self.dump.to_string()),
            ("output", self.output.display().to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
