use std::str::FromStr;
use std::time::Instant;

use tiercache::alg_sca::stationarity;
use tiercache::alg_stochastic::SlotRecord;
use tiercache::{
    iid_popularity, most_popular, run, run_robust, run_stochastic, stp, Context, Placement, RobustStop, SlotStop,
    StepSchedule, StopRule,
};

use crate::config::Config;
use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sca,
    Robust,
    Stochastic,
    Baseline1,
    Baseline2,
}

impl FromStr for Algorithm {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        Ok(match s {
            "sca" => Algorithm::Sca,
            "robust" => Algorithm::Robust,
            "stochastic" => Algorithm::Stochastic,
            "baseline1" => Algorithm::Baseline1,
            "baseline2" => Algorithm::Baseline2,
            other => return Err(Failure::Usage(format!("unsupported algorithm {other:?}"))),
        })
    }
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sca => "sca",
            Algorithm::Robust => "robust",
            Algorithm::Stochastic => "stochastic",
            Algorithm::Baseline1 => "baseline1",
            Algorithm::Baseline2 => "baseline2",
        }
    }

    pub fn randomized(self) -> bool {
        matches!(self, Algorithm::Stochastic | Algorithm::Baseline2)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

/// `step` and `stationarity` are `None` where the algorithm has no such quantity.
#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub iter: u64,
    pub objective: f64,
    pub step: Option<f64>,
    pub stationarity: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub placement: Placement,
    /// The algorithm's own objective: `q(a, T)`, or `y` for the robust solver.
    pub objective: f64,
    pub converged: bool,
    pub failure: Option<String>,
    pub history: Vec<HistoryRow>,
    pub slots: Option<Vec<SlotRecord>>,
}

pub fn execute(alg: Algorithm, cfg: &Config, ctx: &Context, over: Overrides, seed: u64) -> Result<RunResult, Failure> {
    let a = cfg.popularity()?;
    let single = |placement: Placement, start: Instant| -> Result<RunResult, Failure> {
        let objective = stp(&a, &placement, ctx)?;
        let stat = stationarity(&a, &placement, ctx)?;
        Ok(RunResult {
            history: vec![HistoryRow {
                iter: 0,
                objective,
                step: None,
                stationarity: Some(stat),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            }],
            placement,
            objective,
            converged: true,
            failure: None,
            slots: None,
        })
    };
    let start = Instant::now();
    match alg {
        Algorithm::Sca => {
            let d = StopRule::default();
            let stop = StopRule {
                max_iters: over.max_iters.or(cfg.algorithm.max_iters).unwrap_or(d.max_iters),
                tol: over.tol.or(cfg.algorithm.tol).unwrap_or(d.tol),
            };
            let out = run(&a, ctx, &StepSchedule::Harmonic, &stop, None)?;
            Ok(RunResult {
                placement: out.placement,
                objective: out.objective,
                converged: out.converged,
                failure: None,
                history: out
                    .history
                    .iter()
                    .map(|r| HistoryRow {
                        iter: r.iter as u64,
                        objective: r.objective,
                        step: Some(r.step),
                        stationarity: Some(r.stationarity),
                        wall_ms: r.wall_ms,
                    })
                    .collect(),
                slots: None,
            })
        }
        Algorithm::Robust => {
            let set = cfg.uncertainty()?;
            let d = RobustStop::default();
            let stop = RobustStop {
                max_iters: over.max_iters.or(cfg.algorithm.max_iters).unwrap_or(d.max_iters),
                tol: over.tol.or(cfg.algorithm.tol).unwrap_or(d.tol),
                ..d
            };
            let out = run_robust(&set, ctx, &stop)?;
            Ok(RunResult {
                placement: out.placement,
                objective: out.y,
                converged: out.converged,
                failure: out.solver_failure,
                history: out
                    .history
                    .iter()
                    .map(|r| HistoryRow {
                        iter: r.iter as u64,
                        objective: r.y,
                        step: None,
                        stationarity: r.kkt_residual.is_finite().then_some(r.kkt_residual),
                        wall_ms: r.wall_ms,
                    })
                    .collect(),
                slots: None,
            })
        }
        Algorithm::Stochastic => {
            let stream = cfg.stream(seed)?;
            let stop = SlotStop {
                max_slots: over
                    .max_iters
                    .map(|v| v as u64)
                    .or(cfg.algorithm.slots)
                    .unwrap_or(SlotStop::default().max_slots),
                ..SlotStop::default()
            };
            let out = run_stochastic(&stream, ctx, &cfg.schedules(), &stop, None)?;
            Ok(RunResult {
                placement: out.placement,
                objective: out.objective,
                converged: true,
                failure: None,
                history: out
                    .history
                    .iter()
                    .map(|r| HistoryRow {
                        iter: r.t,
                        objective: r.objective,
                        step: Some(r.omega),
                        stationarity: None,
                        wall_ms: r.wall_ms,
                    })
                    .collect(),
                slots: Some(out.history),
            })
        }
        Algorithm::Baseline1 => single(most_popular(&a, ctx.config())?, start),
        Algorithm::Baseline2 => {
            let samples = cfg.algorithm.samples.unwrap_or(10_000);
            single(iid_popularity(&a, ctx.config(), samples, seed)?, start)
        }
    }
}
