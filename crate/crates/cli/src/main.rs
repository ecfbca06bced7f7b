//! `tiercache` command line: optimize a placement, check it by simulation,
//! or sweep a parameter grid.

mod config;
mod run;
mod sweep;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tiercache::caching::format_sig12;
use tiercache::{estimate_stp, stp, validate, Error, Placement};

use crate::config::{read_json, Config, SweepSection};
use crate::run::{execute, Algorithm, HistoryRow, Overrides};

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, configuration or input files (exit 1).
    Usage(String),
    /// A solver gave up (exit 2).
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SolverFailure(_) | Error::BracketFailure { .. } => Failure::Solver(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "tiercache", version, about = "Random cache placement for multi-tier networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the caching probabilities and write T.csv and history.csv.
    Optimize {
        /// sca, robust, stochastic, baseline1 or baseline2.
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the analytic STP of a placement with a Monte Carlo estimate.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Placement CSV as written by `optimize`.
        #[arg(long)]
        placement: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every scheme on a parameter grid and write one CSV row per point and scheme.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Sweep description; defaults to the config's `sweep` section.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for sweep.csv; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Optimize {
            algorithm,
            config,
            seed,
            max_iters,
            tol,
            out,
        } => optimize(algorithm, &config, seed, Overrides { max_iters, tol }, &out),
        Command::Validate {
            config,
            placement,
            trials,
            seed,
        } => validate_cmd(&config, &placement, trials, seed),
        Command::Sweep { config, sweep, seed, out } => sweep_cmd(&config, sweep.as_deref(), seed, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn cell(v: Option<f64>) -> String {
    v.map(format_sig12).unwrap_or_default()
}

fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("iter,objective,step,stationarity,wall_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            format_sig12(r.objective),
            cell(r.step),
            cell(r.stationarity),
            format_sig12(r.wall_ms)
        );
    }
    out
}

fn seed_of(flag: Option<u64>, cfg: &Config) -> u64 {
    flag.or(cfg.algorithm.seed).unwrap_or(0)
}

fn optimize(algorithm: Option<String>, config: &Path, seed: Option<u64>, over: Overrides, out: &Path) -> Result<(), Failure> {
    let name = algorithm.unwrap_or_default();
    let cfg: Config = read_json(config)?;
    let name = if name.is_empty() {
        cfg.algorithm.name.clone().unwrap_or_else(|| "sca".into())
    } else {
        name
    };
    let alg: Algorithm = name.parse()?;
    let ctx = cfg.context()?;
    let seed = seed_of(seed, &cfg);
    let result = execute(alg, &cfg, &ctx, over, seed)?;
    validate(&result.placement, ctx.cache_sizes())?;

    std::fs::create_dir_all(out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    write_file(&out.join("T.csv"), &result.placement.to_csv())?;
    write_file(&out.join("history.csv"), &history_csv(&result.history))?;
    if let Some(slots) = &result.slots {
        let mut text = String::from("t,entropy,objective,omega,rho,wall_ms\n");
        for s in slots {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                s.t,
                format_sig12(s.entropy),
                format_sig12(s.objective),
                format_sig12(s.omega),
                format_sig12(s.rho),
                format_sig12(s.wall_ms)
            );
        }
        write_file(&out.join("slots.csv"), &text)?;
    }

    println!("algorithm {}", alg.name());
    println!("objective {}", format_sig12(result.objective));
    println!("iterations {}", result.history.last().map_or(0, |r| r.iter));
    println!("converged {}", result.converged);
    if !result.converged {
        eprintln!("warning: iteration limit reached before the stopping tolerance");
    }
    match result.failure {
        Some(msg) => Err(Failure::Solver(msg)),
        None => Ok(()),
    }
}

fn validate_cmd(config: &Path, placement: &Path, trials: Option<u64>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg: Config = read_json(config)?;
    let ctx = cfg.context()?;
    let text = std::fs::read_to_string(placement).map_err(|e| Failure::Usage(format!("{}: {e}", placement.display())))?;
    let t = Placement::from_csv(&text)?;
    validate(&t, ctx.cache_sizes())?;
    let a = cfg.popularity()?;
    let analytic = stp(&a, &t, &ctx)?;
    let mut sim = cfg.sim(seed_of(seed, &cfg));
    if let Some(n) = trials {
        sim.trials = n;
    }
    let est = estimate_stp(ctx.config(), &t, &a, &sim)?;
    let diff = est.estimate - analytic;
    let z = if est.std_error > 0.0 {
        diff / est.std_error
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    println!("analytic {}", format_sig12(analytic));
    println!("monte_carlo {}", format_sig12(est.estimate));
    println!("std_error {}", format_sig12(est.std_error));
    println!("z_score {}", format_sig12(z));
    Ok(())
}

fn sweep_cmd(config: &Path, sweep: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let cfg: Config = read_json(config)?;
    let spec: SweepSection = match sweep {
        Some(p) => read_json(p)?,
        None => cfg
            .sweep
            .clone()
            .ok_or_else(|| Failure::Usage("no sweep given: pass --sweep or add a sweep section".into()))?,
    };
    let rows = sweep::run_sweep(&cfg, &spec, seed_of(seed, &cfg))?;
    let text = sweep::to_csv(&rows);
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
            write_file(&dir.join("sweep.csv"), &text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
