//! Experiment drivers behind the subcommands.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use skm_core::error::{Error, Result};
use skm_core::integrators::{run_coupled, sk_row, SpdeParams};
use skm_core::lyapunov_perron::{
    auto_pullback_horizon, base_grid, consistency_check, invariance_residual, manifold_distance,
    manifold_sample, required_t_back, ConsistencyReport, LpSetup,
};
use skm_core::noise::NoisePath;
use skm_core::ou::{stationary_moments, Forcing, OUPath};
use skm_core::par::Execution;
use skm_core::spectral::SpectralField;
use skm_core::wave_operator::{effective_lipschitz, gap_check, GapCase};

use crate::config::{Case, Experiment, ExperimentConfig};

/// Result of one experiment.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub summary: Value,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Exit code for a failed run: 2 for invalid configuration, 3 for numerical
/// failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoConvergence { .. }
        | Error::WeightedOverflow { .. }
        | Error::TemperedBound { .. }
        | Error::BlowUp { .. } => 3,
        Error::AtBasePoint { source, .. } => exit_code(source),
        _ => 2,
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::GapCheck => cmd_gap(cfg),
        Experiment::Stationary => cmd_stationary(cfg),
        Experiment::Sk => cmd_sk(cfg),
        Experiment::Manifold => cmd_manifold(cfg),
        Experiment::ManifoldDist => cmd_manifold_dist(cfg),
        Experiment::Consistency => cmd_consistency(cfg),
    }
}

fn exec(cfg: &ExperimentConfig) -> Execution {
    if cfg.parallel {
        Execution::default()
    } else {
        Execution::Sequential
    }
}

fn setup(cfg: &ExperimentConfig) -> LpSetup {
    let mut s = LpSetup::new(cfg.modes, cfg.cutoff, cfg.nonlinearity());
    s.phys_points = cfg.phys_points();
    s.cfg.substeps = cfg.substeps;
    s.cfg.t_back = cfg.t_back;
    s.cfg.tol = cfg.lp_tol;
    s.cfg.max_iters = cfg.max_iters;
    s.cfg.k_const = cfg.k_const;
    s.cfg.exec = exec(cfg);
    s
}

/// Strictly decreasing along the list.
fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.output)?;
        Ok(Self { dir: cfg.output.clone(), files: Vec::new() })
    }

    fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        writeln!(f, "{header}")?;
        for r in rows {
            writeln!(f, "{r}")?;
        }
        self.files.push(path);
        Ok(())
    }

    fn finish(mut self, cfg: &ExperimentConfig, pass: bool, body: Value, warnings: Vec<String>) -> Result<Outcome> {
        let mut summary = json!({
            "experiment": cfg.experiment.name(),
            "config": cfg.resolved(),
            "pass": pass,
            "warnings": warnings,
        });
        if let (Some(obj), Value::Object(extra)) = (summary.as_object_mut(), body) {
            obj.extend(extra);
        }
        let path = self.dir.join(format!("{}.json", cfg.experiment.name()));
        fs::write(&path, serde_json::to_string_pretty(&summary)?)?;
        self.files.push(path);
        Ok(Outcome { pass, summary, files: self.files, warnings })
    }
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

/// Gap condition for the heat problem or for each `nu` of the wave problem.
pub fn cmd_gap(cfg: &ExperimentConfig) -> Result<Outcome> {
    let cases: Vec<GapCase> = match cfg.case {
        Case::Heat => vec![GapCase::Heat],
        Case::Wave => cfg.nu.iter().map(|&nu| GapCase::Wave { nu }).collect(),
    };
    let l_f = cfg.nonlinearity().lipschitz();
    let mut reports = Vec::new();
    for case in cases {
        let lf = match cfg.lipschitz {
            Some(l) => l,
            None => effective_lipschitz(case, cfg.cutoff, l_f)?,
        };
        reports.push(gap_check(case, cfg.cutoff, cfg.k_const, lf, None)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    let w = Writer::new(cfg)?;
    let body = json!({ "reports": to_value(&reports)? });
    w.finish(cfg, pass, body, Vec::new())
}

/// Stationary variances for each `nu`.
pub fn cmd_stationary(cfg: &ExperimentConfig) -> Result<Outcome> {
    let q = cfg.q_spectrum()?;
    let mut w = Writer::new(cfg)?;
    let mut all = Vec::new();
    let mut rows = Vec::new();
    for &nu in &cfg.nu {
        let st = stationary_moments(&q, nu, cfg.seed, cfg.stationary_replicas, cfg.stationary_steps, cfg.ou_dt, exec(cfg))?;
        for (name, ms) in [("heat", &st.heat), ("position", &st.position), ("velocity", &st.velocity)] {
            for m in ms {
                rows.push(format!("{nu:e},{name},{},{:e},{:e},{:e},{}", m.k, m.variance, m.se, m.expected, m.pass));
            }
        }
        all.push(st);
    }
    w.csv("stationary.csv", "nu,process,k,variance,se,expected,pass", &rows)?;
    // nu^2 E|v|^2 = nu Tr Q / 2 is linear in nu
    let scaling: Vec<Value> = all
        .windows(2)
        .map(|p| {
            let ratio = p[0].nu2_velocity_energy / p[1].nu2_velocity_energy;
            let expected = p[0].nu / p[1].nu;
            json!({
                "nu_pair": [p[0].nu, p[1].nu],
                "ratio": ratio,
                "expected": expected,
                "pass": (ratio / expected - 1.0).abs() <= 0.2 || (ratio.is_nan() && q.trace() == 0.0),
            })
        })
        .collect();
    let pass = all.iter().all(|s| s.pass) && scaling.iter().all(|s| s["pass"] == json!(true));
    let body = json!({ "results": to_value(&all)?, "velocity_scaling": scaling });
    w.finish(cfg, pass, body, Vec::new())
}

fn initial_field(cfg: &ExperimentConfig) -> Result<SpectralField> {
    let mut c = vec![0.0; cfg.modes];
    c[..cfg.u0.len()].copy_from_slice(&cfg.u0);
    SpectralField::from_coeffs(c)
}

/// Exceedance probabilities of `sup_t ||u^nu - u||` over the `nu` list.
pub fn cmd_sk(cfg: &ExperimentConfig) -> Result<Outcome> {
    let q = cfg.q_spectrum()?;
    let u0 = initial_field(cfg)?;
    let u1 = SpectralField::zeros(cfg.modes);
    let mut w = Writer::new(cfg)?;
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut warnings = Vec::new();
    for &nu in &cfg.nu {
        let params = SpdeParams { nu, q: q.clone(), f: cfg.nonlinearity(), phys_points: cfg.phys_points() };
        let row = sk_row(&params, &u0, &u1, cfg.dt, cfg.t_end, cfg.delta, cfg.seed, cfg.replicas, exec(cfg))?;
        if row.blow_ups > 0 {
            warnings.push(format!("nu = {nu:e}: {} of {} replicas blew up", row.blow_ups, row.replicas));
        }
        rows.push(format!(
            "{nu:e},{},{:e},{:e},{:e},{:e},{}",
            row.replicas, row.exceedance, row.exceedance_se, row.mean_sup_diff, row.mean_se, row.blow_ups
        ));
        if cfg.dump {
            let steps = (cfg.t_end / cfg.dt).round() as usize;
            let noise = NoisePath::new(cfg.seed, cfg.dt, cfg.modes, 0, steps)?;
            let run = run_coupled(&u0, &u1, &params, &noise, cfg.t_end)?;
            let dump: Vec<String> = run
                .wave
                .times
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let wave = run.wave.u[i].coeffs().iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
                    let heat = run.heat.u[i].coeffs().iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
                    format!("{t},{wave},{heat}")
                })
                .collect();
            let header = std::iter::once("t".to_string())
                .chain((1..=cfg.modes).map(|k| format!("wave_u{k}")))
                .chain((1..=cfg.modes).map(|k| format!("heat_u{k}")))
                .collect::<Vec<_>>()
                .join(",");
            w.csv(&format!("sk_trajectory_nu{nu:e}.csv"), &header, &dump)?;
        }
        table.push(row);
    }
    w.csv("sk.csv", "nu,replicas,exceedance,exceedance_se,mean_sup_diff,mean_se,blow_ups", &rows)?;
    let ex: Vec<f64> = table.iter().map(|r| r.exceedance).collect();
    let monotone = strictly_decreasing(&ex);
    let body = json!({ "rows": to_value(&table)?, "monotone_decrease": monotone });
    w.finish(cfg, monotone, body, warnings)
}

/// Noise and OU path long enough for the solver horizons plus `extra`
/// (backward) and `ahead` (forward).
fn ou_path(cfg: &ExperimentConfig, setup: &LpSetup, nu: Option<f64>, extra: f64, ahead: f64) -> Result<OUPath> {
    let heat = required_t_back(setup, GapCase::Heat, cfg.ou_dt)?;
    let wave = match nu {
        Some(nu) => required_t_back(setup, GapCase::Wave { nu }, cfg.ou_dt)?,
        None => 0.0,
    };
    let span = heat.max(wave) + extra + 2.0 * cfg.ou_dt;
    let noise = NoisePath::covering(cfg.seed, cfg.ou_dt, cfg.modes, -span, ahead)?;
    OUPath::stationary(&noise, &cfg.q_spectrum()?, nu)
}

/// Manifold graph over the base grid for the heat or the wave problem.
pub fn cmd_manifold(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = setup(cfg);
    let nu = match cfg.case {
        Case::Heat => None,
        Case::Wave => Some(cfg.nu[0]),
    };
    let ahead = if cfg.invariance && nu.is_none() { cfg.t_inv + cfg.ou_dt } else { 0.0 };
    let path = ou_path(cfg, &setup, nu, 0.0, ahead)?;
    let sample = manifold_sample(&path, Forcing::Heat, nu, &setup, cfg.radius, cfg.grid_points, Some(cfg.seed))?;
    let mut w = Writer::new(cfg)?;
    let rows: Vec<String> = sample
        .points
        .iter()
        .map(|p| {
            let base = p.base.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
            format!(
                "{base},{:e},{},{:e},{}",
                p.graph_norm,
                p.iterations,
                p.final_residual,
                p.contraction_estimate.map_or(String::new(), |c| format!("{c:e}"))
            )
        })
        .collect();
    w.csv("manifold.csv", "base,graph_norm,iterations,final_residual,contraction", &rows)?;
    let limit = sample.gap.gap_value + 0.1;
    let max_contraction = sample.points.iter().filter_map(|p| p.contraction_estimate).fold(0.0, f64::max);
    let contracts = max_contraction <= limit;
    let mut pass = contracts;
    let mut body = json!({
        "sample": to_value(&sample)?,
        "sup_graph_norm": sample.points.iter().map(|p| p.graph_norm).fold(0.0, f64::max),
        "max_contraction": max_contraction,
        "contraction_limit": limit,
        "contraction_pass": contracts,
    });
    if cfg.invariance && nu.is_none() {
        let mut zeta = vec![0.0; cfg.modes];
        let n = cfg.base.len().min(cfg.cutoff);
        zeta[..n].copy_from_slice(&cfg.base[..n]);
        let zeta = SpectralField::from_coeffs(zeta)?;
        let on = invariance_residual(&zeta, &path, Forcing::Heat, &setup, cfg.t_inv, cfg.sample_dt, 0.0)?;
        let off = invariance_residual(&zeta, &path, Forcing::Heat, &setup, cfg.t_inv, cfg.sample_dt, cfg.offset)?;
        let threshold = 5.0 * (cfg.ou_dt + cfg.lp_tol);
        let eta = sample.gap.eta;
        let on_pass = on.max_residual <= threshold;
        let off_pass = off.residuals.get(1).zip(on.residuals.get(1)).is_some_and(|(a, b)| *a >= 10.0 * b)
            && off.decay_rate.is_some_and(|r| r <= eta);
        pass &= on_pass && off_pass;
        body["invariance"] = json!({
            "on_manifold": to_value(&on)?,
            "off_manifold": to_value(&off)?,
            "threshold": threshold,
            "eta": eta,
            "on_pass": on_pass,
            "off_pass": off_pass,
        });
    }
    w.finish(cfg, pass, body, Vec::new())
}

/// Matched heat/wave manifold distances over the `nu` list.
pub fn cmd_manifold_dist(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = setup(cfg);
    let bases = base_grid(cfg.cutoff, cfg.radius, cfg.grid_points);
    let mut w = Writer::new(cfg)?;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    let mut point_rows = Vec::new();
    for &nu in &cfg.nu {
        let path = ou_path(cfg, &setup, Some(nu), 0.0, 0.0)?;
        let r = manifold_distance(&path, nu, &setup, &bases)?;
        let diag = r.points.iter().map(|p| p.nu_utt).fold(0.0, f64::max);
        rows.push(format!("{nu:e},{:e},{:e},{:e}", r.sup_e_distance, r.sup_l2_distance, diag));
        for p in &r.points {
            let base = p.base.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
            point_rows.push(format!(
                "{nu:e},{base},{:e},{:e},{},{},{:e}",
                p.e_distance, p.l2_distance, p.heat_iterations, p.wave_iterations, p.nu_utt
            ));
        }
        reports.push(r);
    }
    w.csv("manifold_dist.csv", "nu,sup_e_distance,sup_l2_distance,max_nu_utt", &rows)?;
    w.csv(
        "manifold_dist_points.csv",
        "nu,base,e_distance,l2_distance,heat_iterations,wave_iterations,nu_utt",
        &point_rows,
    )?;
    let e: Vec<f64> = reports.iter().map(|r| r.sup_e_distance).collect();
    let l2: Vec<f64> = reports.iter().map(|r| r.sup_l2_distance).collect();
    let (me, ml) = (strictly_decreasing(&e), strictly_decreasing(&l2));
    let body = json!({
        "reports": to_value(&reports)?,
        "monotone_e": me,
        "monotone_l2": ml,
    });
    w.finish(cfg, me && ml, body, Vec::new())
}

/// Shift construction against the construction around a pullback `u*`.
pub fn cmd_consistency(cfg: &ExperimentConfig) -> Result<Outcome> {
    let setup = setup(cfg);
    let f = cfg.nonlinearity();
    let horizon = cfg.pullback_horizon.unwrap_or_else(|| auto_pullback_horizon(&f, cfg.pullback_tol));
    let path = ou_path(cfg, &setup, None, 2.0 * horizon, 0.0)?;
    let runs: Vec<ConsistencyReport> = [0.5, 1.0, 2.0]
        .iter()
        .map(|s| consistency_check(&cfg.base, &path, &setup, s * horizon, cfg.pullback_tol))
        .collect::<Result<_>>()?;
    let main = &runs[1];
    let budget = 10.0 * (cfg.lp_tol + cfg.pullback_tol);
    // geometric pullback convergence: each doubling at least halves the
    // change of u*(0); changes at rounding level count as settled
    let pc: Vec<f64> = runs.iter().map(|r| r.pullback_change).collect();
    let halves = pc.windows(2).all(|w| w[1] <= 0.5 * w[0] || w[1] <= 1e-14);
    let mut warnings = Vec::new();
    if !main.pullback_settled {
        warnings.push(format!(
            "pullback has not settled: change {:e} exceeds {:e}",
            main.pullback_change, cfg.pullback_tol
        ));
    }
    let within = main.discrepancy <= budget;
    let pass = within && halves;
    let mut w = Writer::new(cfg)?;
    let rows: Vec<String> = runs
        .iter()
        .map(|r| format!("{},{:e},{:e},{}", r.pullback_horizon, r.discrepancy, r.pullback_change, r.pullback_settled))
        .collect();
    w.csv("consistency.csv", "pullback_horizon,discrepancy,pullback_change,pullback_settled", &rows)?;
    let body = json!({
        "report": to_value(main)?,
        "horizon_sweep": to_value(&runs)?,
        "budget": budget,
        "within_budget": within,
        "horizon_doubling_halves_change": halves,
    });
    w.finish(cfg, pass, body, warnings)
}
