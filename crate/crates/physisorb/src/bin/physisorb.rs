use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use physisorb::cli::{compare_bc, run};
use physisorb::config::ScenarioConfig;
use physisorb::diagnostics::Status;
use physisorb::Error;

#[derive(Parser)]
#[command(
    name = "physisorb",
    version,
    about = "Half-space kinetic solver for a physisorbate layer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Reference case i to viii.
    #[arg(long)]
    preset: Option<String>,
    /// Flat TOML file; its keys override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Stop once the weighted L1 increment of the density falls to this value.
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    kmax: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra probe position for the increment history (repeatable).
        #[arg(long, allow_negative_numbers = true)]
        probe: Vec<f64>,
        /// Position of a velocity cut (repeatable).
        #[arg(long, allow_negative_numbers = true)]
        cut: Vec<f64>,
        /// Also solve from the equilibrium start and compare.
        #[arg(long)]
        uniqueness: bool,
    },
    /// Compare the boundary models with the full solve.
    CompareBc {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig, Error> {
    let base = match &common.preset {
        Some(id) => Some(ScenarioConfig::from_preset(id)?),
        None => None,
    };
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path, base)?,
        None => base.unwrap_or_default(),
    };
    if let Some(t) = common.tol {
        cfg.tol = t;
    }
    if let Some(k) = common.kmax {
        cfg.k_max = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::NotConverged(_) => ExitCode::from(3),
        Error::Config { .. } | Error::Parameter { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    let common = match &cli.command {
        Command::Run { common, .. } | Command::CompareBc { common } => common,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build_global()
        .map_err(|e| Error::Config {
            key: "threads".into(),
            msg: e.to_string(),
        })?;
    match cli.command {
        Command::Run {
            common,
            out,
            probe,
            cut,
            uniqueness,
        } => {
            let mut cfg = load(&common)?;
            if let Some(o) = out {
                cfg.out = o;
            }
            cfg.probes.extend(probe);
            cfg.cuts.extend(cut);
            cfg.check_uniqueness |= uniqueness;
            cfg.validate()?;
            let outcome = run(&cfg)?;
            let r = &outcome.report;
            println!(
                "{}: {} after {} iterations, a = {}, b = {}, artifacts in {}",
                cfg.name,
                if r.converged { "converged" } else { "NOT converged" },
                r.iterations,
                r.a.map_or("n/a".into(), |v| format!("{v:.5}")),
                r.b.map_or("n/a".into(), |v| format!("{v:.4}")),
                cfg.out.display()
            );
            let failed: Vec<&str> = r
                .properties
                .iter()
                .filter(|p| p.status == Status::Fail)
                .map(|p| p.name.as_str())
                .collect();
            if !failed.is_empty() {
                println!("properties not passed: {}", failed.join(", "));
            }
            Ok(if r.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        Command::CompareBc { common } => {
            let cfg = load(&common)?;
            let c = compare_bc(&cfg)?;
            print!("{}", c.table());
            println!(
                "beta = {:.8}, flux-balancing level = {:.8}",
                c.beta, c.beta_flux_balance
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
