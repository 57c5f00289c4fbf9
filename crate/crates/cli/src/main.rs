use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use skm_cli::{exit_code, run, Experiment, ExperimentConfig};

/// Random inertial manifolds of the stochastic damped wave equation and
/// their small-mass limit.
#[derive(Parser, Debug)]
#[command(name = "skm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectral gap condition for the heat or the wave problem.
    GapCheck(Common),
    /// Variances of the stationary OU processes.
    Stationary(Common),
    /// Finite-time small-mass convergence table.
    Sk(Common),
    /// Manifold graph over a base grid.
    Manifold(Common),
    /// Heat/wave manifold distance against nu.
    ManifoldDist(Common),
    /// Shift construction against the pullback construction.
    Consistency(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set modes=8`; repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma list of nu values.
    #[arg(long)]
    nu: Option<String>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    cutoff: Option<usize>,
    /// heat | wave
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{s}`"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let named = [
            ("seed", self.seed.map(|x| x.to_string())),
            ("nu", self.nu.clone()),
            ("modes", self.modes.map(|x| x.to_string())),
            ("cutoff", self.cutoff.map(|x| x.to_string())),
            ("case", self.case.clone()),
            ("replicas", self.replicas.map(|x| x.to_string())),
            ("output", self.output.as_ref().map(|p| p.display().to_string())),
            ("parallel", self.sequential.then(|| "false".to_string())),
        ];
        out.extend(named.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        Ok(out)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match &cli.command {
        Command::GapCheck(c) => (Experiment::GapCheck, c),
        Command::Stationary(c) => (Experiment::Stationary, c),
        Command::Sk(c) => (Experiment::Sk, c),
        Command::Manifold(c) => (Experiment::Manifold, c),
        Command::ManifoldDist(c) => (Experiment::ManifoldDist, c),
        Command::Consistency(c) => (Experiment::Consistency, c),
    };
    let text = match &common.config {
        Some(p) => match fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    let overrides = match common.overrides() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cfg = match ExperimentConfig::resolve(experiment, text.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&out.summary).expect("serialisable summary"));
            for f in &out.files {
                eprintln!("wrote {}", f.display());
            }
            eprintln!("{}: {}", experiment, if out.pass { "PASS" } else { "FAIL" });
            ExitCode::from(if out.pass { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
