use rayon::prelude::*;
use tiercache::caching::format_sig12;
use tiercache::{stp, worst_case_stp};

use crate::config::{Config, SweepParam, SweepSection};
use crate::run::{execute, Algorithm, Overrides};
use crate::Failure;

pub const HEADER: &str = "param,value,scheme,objective,stderr";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub scheme: Algorithm,
    pub objective: f64,
    pub stderr: f64,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of grid point `index`, repeat `repeat`.
pub fn point_seed(master: u64, index: usize, repeat: usize) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(index as u64)) ^ repeat as u64)
}

fn default_schemes(param: SweepParam) -> Vec<Algorithm> {
    match param {
        SweepParam::K3 | SweepParam::Gamma => vec![Algorithm::Sca, Algorithm::Baseline1, Algorithm::Baseline2],
        SweepParam::Epsilon => vec![Algorithm::Robust, Algorithm::Sca, Algorithm::Baseline1, Algorithm::Baseline2],
        SweepParam::Slots | SweepParam::Observers => vec![Algorithm::Stochastic, Algorithm::Sca],
    }
}

fn as_count(param: SweepParam, v: f64) -> Result<u64, Failure> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as u64)
    } else {
        Err(Failure::Usage(format!("{} sweep value {v} is not a nonnegative integer", param.name())))
    }
}

/// Configuration of grid point `value`.
pub fn point_config(base: &Config, sweep: &SweepSection, value: f64) -> Result<Config, Failure> {
    let mut cfg = base.clone();
    match sweep.param {
        SweepParam::K3 => {
            if cfg.network.cache_sizes.len() != 3 {
                return Err(Failure::Usage("a k3 sweep needs a three-tier network".into()));
            }
            let k3 = as_count(sweep.param, value)? as usize;
            cfg.network.cache_sizes = vec![k3 + sweep.k1_offset, k3 + sweep.k2_offset, k3];
        }
        SweepParam::Gamma => {
            if cfg.popularity.weights.is_some() {
                return Err(Failure::Usage("a gamma sweep needs a Zipf popularity".into()));
            }
            cfg.popularity.zipf_exponent = value;
        }
        SweepParam::Epsilon => {
            cfg.popularity.error_bounds = None;
            cfg.popularity.epsilon = value;
        }
        SweepParam::Slots => cfg.algorithm.slots = Some(as_count(sweep.param, value)?),
        SweepParam::Observers => cfg.popularity.observers = as_count(sweep.param, value)? as usize,
    }
    Ok(cfg)
}

/// Objective of one run of `scheme` at a grid point: the worst-case STP in
/// an epsilon sweep, the STP under the configured popularity otherwise.
fn evaluate(cfg: &Config, param: SweepParam, scheme: Algorithm, seed: u64) -> Result<f64, Failure> {
    let ctx = cfg.context()?;
    let out = execute(scheme, cfg, &ctx, Overrides::default(), seed)?;
    if let Some(msg) = out.failure {
        return Err(Failure::Solver(format!("{} at {} sweep point: {msg}", scheme.name(), param.name())));
    }
    Ok(if param == SweepParam::Epsilon {
        worst_case_stp(&cfg.uncertainty()?, &out.placement, &ctx)?.value
    } else {
        stp(&cfg.popularity()?, &out.placement, &ctx)?
    })
}

pub fn run_sweep(base: &Config, sweep: &SweepSection, master: u64) -> Result<Vec<SweepRow>, Failure> {
    if sweep.values.is_empty() {
        return Err(Failure::Usage("sweep grid is empty".into()));
    }
    if sweep.repeats == 0 {
        return Err(Failure::Usage("sweep repeats must be positive".into()));
    }
    let schemes = match &sweep.schemes {
        Some(names) => names.iter().map(|s| s.parse()).collect::<Result<Vec<Algorithm>, _>>()?,
        None => default_schemes(sweep.param),
    };
    let configs = sweep
        .values
        .iter()
        .map(|&v| point_config(base, sweep, v))
        .collect::<Result<Vec<_>, _>>()?;
    let tasks: Vec<(usize, Algorithm)> = (0..configs.len())
        .flat_map(|i| schemes.iter().map(move |&s| (i, s)))
        .collect();
    tasks
        .par_iter()
        .map(|&(i, scheme)| {
            let repeats = if scheme.randomized() { sweep.repeats } else { 1 };
            let values = (0..repeats)
                .map(|r| evaluate(&configs[i], sweep.param, scheme, point_seed(master, i, r)))
                .collect::<Result<Vec<f64>, _>>()?;
            let (objective, stderr) = mean_and_stderr(&values);
            Ok(SweepRow {
                param: sweep.param,
                value: sweep.values[i],
                scheme,
                objective,
                stderr,
            })
        })
        .collect()
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.param.name(),
            format_sig12(r.value),
            r.scheme.name(),
            format_sig12(r.objective),
            format_sig12(r.stderr)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn point_seeds_differ() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..50 {
            for r in 0..4 {
                assert!(seen.insert(point_seed(7, i, r)));
            }
        }
    }

    #[test]
    fn stderr_of_repeats() {
        assert_eq!(mean_and_stderr(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
