//! Monte Carlo estimate of the STP on simulated Poisson base station fields.
//!
//! Per trial the typical user sits at the origin and requests a file drawn
//! from the popularity vector. Each tier's base stations are generated in
//! order of increasing distance inside a disk that holds `expected_per_tier`
//! stations on average (`pi lambda r^2` of successive stations has unit
//! exponential gaps), each station draws its cache from the tier's
//! combination distribution, and every station transmits with unit-mean
//! exponential fading. The user is served by the strongest-on-average station
//! that stores the file; the trial succeeds when the SIR reaches the serving
//! tier's threshold.
//!
//! Interference from beyond the disk is replaced by its mean, which removes
//! the first-order truncation bias. Every tier uses its own random stream per
//! trial, so growing the window only appends far stations and leaves the
//! near field of every trial unchanged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::caching::{tier_combinations, CachingProbabilityMatrix, CombinationDistribution};
use crate::error::{Error, Result};
use crate::netmodel::NetworkConfig;
use crate::popularity::PopularityVector;

/// Smallest accepted mean station count per tier window.
pub const MIN_EXPECTED_PER_TIER: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    /// Mean number of stations per tier inside its window; the window radius
    /// of tier `m` is `sqrt(expected_per_tier / (pi lambda_m))`.
    pub expected_per_tier: f64,
    /// Add the mean interference of the stations outside the window.
    pub tail_correction: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            trials: 100_000,
            seed: 0,
            expected_per_tier: 400.0,
            tail_correction: true,
        }
    }
}

impl SimConfig {
    pub fn window_radius(&self, density: f64) -> f64 {
        (self.expected_per_tier / (std::f64::consts::PI * density)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub successes: u64,
    pub trials: u64,
}

/// Estimates the STP of placement `t` under popularity `a`.
pub fn estimate_stp(
    cfg: &NetworkConfig<f64>,
    t: &CachingProbabilityMatrix<f64>,
    a: &PopularityVector<f64>,
    sim: &SimConfig,
) -> Result<SimEstimate> {
    let dists = tier_combinations(t, &cfg.cache_sizes)?;
    estimate_with_combinations(cfg, &dists, a, sim)
}

/// As [`estimate_stp`], with the caches drawn from explicit combination
/// distributions, one per tier.
pub fn estimate_with_combinations(
    cfg: &NetworkConfig<f64>,
    dists: &[CombinationDistribution<f64>],
    a: &PopularityVector<f64>,
    sim: &SimConfig,
) -> Result<SimEstimate> {
    cfg.validate()?;
    if dists.len() != cfg.tier_count() || a.len() != cfg.catalog_size {
        return Err(Error::DimensionMismatch(format!(
            "{} combination distributions and {} files for a {}-tier network with {} files",
            dists.len(),
            a.len(),
            cfg.tier_count(),
            cfg.catalog_size
        )));
    }
    if !(sim.expected_per_tier >= MIN_EXPECTED_PER_TIER) {
        return Err(Error::InvalidConfig(format!(
            "expected stations per tier {} is below {MIN_EXPECTED_PER_TIER}",
            sim.expected_per_tier
        )));
    }
    if sim.trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    let field = Field::new(cfg, dists, a, sim);
    let successes: u64 = (0..sim.trials)
        .into_par_iter()
        .map(|trial| u64::from(field.trial(trial)))
        .sum();
    let p = successes as f64 / sim.trials as f64;
    Ok(SimEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / sim.trials as f64).sqrt(),
        successes,
        trials: sim.trials,
    })
}

struct Field<'a> {
    alpha: f64,
    tiers: Vec<TierField<'a>>,
    cdf: Vec<f64>,
    seed: u64,
}

struct TierField<'a> {
    /// `pi lambda`: station `k` sits at radius `sqrt(Gamma_k / (pi lambda))`.
    rate: f64,
    /// Window edge in units of `pi lambda r^2`.
    edge: f64,
    power: f64,
    threshold: f64,
    tail: f64,
    dist: &'a CombinationDistribution<f64>,
}

impl<'a> Field<'a> {
    fn new(
        cfg: &NetworkConfig<f64>,
        dists: &'a [CombinationDistribution<f64>],
        a: &PopularityVector<f64>,
        sim: &SimConfig,
    ) -> Self {
        let alpha = cfg.alpha;
        let tiers = (0..cfg.tier_count())
            .map(|m| {
                let lambda = cfg.densities[m];
                let radius = sim.window_radius(lambda);
                let tail = if sim.tail_correction {
                    2.0 * std::f64::consts::PI * lambda * cfg.powers[m] * radius.powf(2.0 - alpha) / (alpha - 2.0)
                } else {
                    0.0
                };
                TierField {
                    rate: std::f64::consts::PI * lambda,
                    edge: sim.expected_per_tier,
                    power: cfg.powers[m],
                    threshold: cfg.sir_thresholds[m],
                    tail,
                    dist: &dists[m],
                }
            })
            .collect();
        let mut acc = 0.0;
        let cdf = a
            .as_slice()
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        Field {
            alpha,
            tiers,
            cdf,
            seed: sim.seed,
        }
    }

    fn rng(&self, trial: u64, stream: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(trial);
        rng
    }

    fn trial(&self, trial: u64) -> bool {
        let mut req = self.rng(trial, self.tiers.len());
        let u: f64 = req.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        let file = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);

        let half_alpha = self.alpha / 2.0;
        let mut total = 0.0;
        // (average received power, instantaneous received power, tier)
        let mut best: Option<(f64, f64, usize)> = None;
        for (m, tier) in self.tiers.iter().enumerate() {
            let mut rng = self.rng(trial, m);
            let mut gamma = 0.0;
            let mut found = false;
            loop {
                gamma += -(1.0 - rng.random::<f64>()).ln();
                if gamma > tier.edge {
                    break;
                }
                let fading = -(1.0 - rng.random::<f64>()).ln();
                // r^-alpha with r^2 = gamma / rate.
                let path = (tier.rate / gamma).powf(half_alpha);
                let received = tier.power * fading * path;
                total += received;
                if !found {
                    let cache = tier.dist.sample_cache(&mut rng);
                    if CombinationDistribution::<f64>::contains_file(cache, file) {
                        found = true;
                        let avg = tier.power * path;
                        if best.is_none_or(|(b, _, _)| avg > b) {
                            best = Some((avg, received, m));
                        }
                    }
                }
            }
            total += tier.tail;
        }
        match best {
            None => false,
            Some((_, signal, m)) => {
                let interference = total - signal;
                interference <= 0.0 || signal >= self.tiers[m].threshold * interference
            }
        }
    }
}
