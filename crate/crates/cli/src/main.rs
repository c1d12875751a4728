//! `hermflow`: run built-in scenarios, identity checks and studies.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on
//! configuration or I/O errors.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hermflow::flow::simulate_flow;
use hermflow::harness::{
    convergence_study, default_levels, emit_norm_table, run_check, write_report, Overrides, ScenarioConfig, CHECKS,
    SCENARIOS,
};
use hermflow::solutions::z_coeffs;

#[derive(Parser, Debug)]
#[command(
    name = "hermflow",
    version,
    about = "Hermite–Sobolev SPDE solutions driven by stochastic flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one flow ensemble and write its trajectories, Brownian path
    /// and solution coefficients.
    Simulate(Common),
    /// Run one identity check, or `all`.
    Verify {
        /// One of strong, mild, martingale, generator, monotonicity, support, norms, tv, all.
        identity: String,
        #[command(flatten)]
        common: Common,
    },
    /// Step-size studies.
    Study {
        #[command(subcommand)]
        kind: StudyKind,
    },
    /// Write the membership-profile table of a delta.
    Norms(Common),
    /// Print the scenario registry and the available checks.
    ListScenarios,
}

#[derive(Subcommand, Debug)]
enum StudyKind {
    /// Strong-residual RMS over the ladder 4 dt, 2 dt, dt (or `--levels`).
    Convergence {
        /// Explicit geometric step ladder, comma separated.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML, or JSON when it starts with `{`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Registry scenario to use with default settings when no file is given.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    /// Number of steps; sets the horizon to `steps * dt`.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    inner_paths: Option<usize>,
    #[arg(long)]
    truncation: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, String> {
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            dt: self.dt,
            steps: self.steps,
            paths: self.paths,
            inner_paths: self.inner_paths,
            truncation: self.truncation,
        };
        let cfg = match (&self.config, &self.scenario) {
            (Some(path), None) => ScenarioConfig::load(path, &overrides),
            (None, Some(name)) => ScenarioConfig::from_overrides(name, &overrides),
            (Some(_), Some(_)) => return Err("give either --config or --scenario, not both".into()),
            (None, None) => return Err("a scenario is needed: pass --config PATH or --scenario NAME".into()),
        };
        cfg.map_err(|e| e.to_string())
    }
}

enum Failure {
    Config(String),
    Check,
}

impl From<hermflow::Error> for Failure {
    fn from(e: hermflow::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("HERMFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("HERMFLOW_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn simulate(cfg: &ScenarioConfig) -> Result<(), Failure> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    let discrete = cfg.initial_condition()?.discretize(cfg.grid.psi_nodes)?;
    let ens = simulate_flow(
        cfg.build_model(),
        discrete.nodes(),
        cfg.grid.t_end,
        cfg.grid.dt,
        cfg.seed,
        0,
    )?;
    ens.write_csv(BufWriter::new(fs::File::create(dir.join("flow.csv"))?))?;
    ens.path()
        .write_csv(BufWriter::new(fs::File::create(dir.join("brownian.csv"))?))?;
    let z = z_coeffs(&discrete, &ens, cfg.grid.truncation)?;
    z.write_csv(BufWriter::new(fs::File::create(dir.join("z_coeffs.csv"))?))?;
    println!(
        "simulated {} nodes over {} steps into {}",
        ens.num_nodes(),
        ens.steps(),
        dir.display()
    );
    Ok(())
}

fn verify(cfg: &ScenarioConfig, identity: &str) -> Result<(), Failure> {
    let checks: Vec<&str> = if identity == "all" {
        cfg.selected_checks()
    } else if CHECKS.contains(&identity) {
        vec![identity]
    } else {
        return Err(Failure::Config(format!(
            "unknown identity {identity:?}; expected one of {CHECKS:?} or all"
        )));
    };
    let dir = cfg.out_dir();
    let mut all_pass = true;
    for check in checks {
        for report in run_check(cfg, check)? {
            write_report(&dir, &report)?;
            println!("{}", report.headline());
            all_pass &= report.pass;
        }
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn study(cfg: &ScenarioConfig, levels: &[f64]) -> Result<(), Failure> {
    let dts = if levels.is_empty() {
        default_levels(cfg)
    } else {
        levels.to_vec()
    };
    let result = convergence_study(cfg, &dts)?;
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("study-convergence.json"), result.to_json())?;
    result.write_csv(BufWriter::new(fs::File::create(dir.join("study-convergence.csv"))?))?;
    for l in &result.levels {
        println!("dt {:.3e}  rms {:.4e}", l.dt, l.rms);
    }
    let slope = result.slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
    println!(
        "{} convergence [{}]: slope {slope}, expected >= {}",
        if result.pass { "PASS" } else { "FAIL" },
        result.scenario,
        result.expected_order
    );
    if result.pass {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn norms(cfg: &ScenarioConfig) -> Result<(), Failure> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    let path = dir.join("norms-table.csv");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    let rows = emit_norm_table(cfg, &mut w)?;
    w.flush()?;
    for &p in &cfg.norms.p {
        let slope = rows.iter().find(|r| r.p == p).and_then(|r| r.slope);
        let last = rows.iter().rev().find(|r| r.p == p).map_or(f64::NAN, |r| r.partial_sum);
        match slope {
            Some(s) => println!("p {p}: partial sum {last:.6e}, log-increment slope {s:.3}"),
            None => println!("p {p}: partial sum {last:.6e}, increments vanish"),
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::ListScenarios => {
            println!("scenarios: {}", SCENARIOS.join(", "));
            println!("checks: {}", CHECKS.join(", "));
            Ok(())
        }
        Command::Simulate(common) => simulate(&common.load().map_err(Failure::Config)?),
        Command::Verify { identity, common } => verify(&common.load().map_err(Failure::Config)?, &identity),
        Command::Study {
            kind: StudyKind::Convergence { levels, common },
        } => study(&common.load().map_err(Failure::Config)?, &levels),
        Command::Norms(common) => norms(&common.load().map_err(Failure::Config)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
