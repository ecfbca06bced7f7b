use std::path::Path;

use serde::Deserialize;
use tiercache::{
    zipf, Context, Network, Popularity, RequestStreamConfig, SimConfig, StochasticSchedules, StepSchedule, Uncertainty,
};

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub network: NetworkSection,
    #[serde(default)]
    pub popularity: PopularitySection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

/// Omitted tier parameters fall back to the reference three-tier layout.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub alpha: Option<f64>,
    pub densities: Option<Vec<f64>>,
    pub powers: Option<Vec<f64>>,
    pub sir_thresholds: Option<Vec<f64>>,
    pub cache_sizes: Vec<usize>,
    pub catalog_size: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopularitySection {
    /// Zipf exponent of the (estimated) popularity; ignored when `weights` is set.
    #[serde(default = "default_zipf")]
    pub zipf_exponent: f64,
    pub weights: Option<Vec<f64>>,
    /// Relative error bound `eps * a_hat` of the uncertainty set.
    #[serde(default)]
    pub epsilon: f64,
    /// Absolute error bounds; override `epsilon`.
    pub error_bounds: Option<Vec<f64>>,
    #[serde(default = "default_observers")]
    pub observers: usize,
    #[serde(default = "one")]
    pub request_prob: f64,
}

impl Default for PopularitySection {
    fn default() -> Self {
        PopularitySection {
            zipf_exponent: default_zipf(),
            weights: None,
            epsilon: 0.0,
            error_bounds: None,
            observers: default_observers(),
            request_prob: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub name: Option<String>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    /// Slots of the stochastic algorithm.
    pub slots: Option<u64>,
    pub rho_exponent: Option<f64>,
    pub omega_exponent: Option<f64>,
    /// Sampled placements per tier for the i.i.d. baseline.
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_expected")]
    pub expected_per_tier: f64,
    #[serde(default = "yes")]
    pub tail_correction: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            trials: default_trials(),
            expected_per_tier: default_expected(),
            tail_correction: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    K3,
    Gamma,
    Epsilon,
    Slots,
    Observers,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K3 => "k3",
            SweepParam::Gamma => "gamma",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Slots => "slots",
            SweepParam::Observers => "observers",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub schemes: Option<Vec<String>>,
    /// `K1 = K3 + k1_offset`, `K2 = K3 + k2_offset` in a `k3` sweep.
    #[serde(default = "default_k1_offset")]
    pub k1_offset: usize,
    #[serde(default = "default_k2_offset")]
    pub k2_offset: usize,
    /// Independent runs of each randomized scheme per grid point.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_zipf() -> f64 {
    0.55
}
fn default_observers() -> usize {
    200
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_trials() -> u64 {
    100_000
}
fn default_expected() -> f64 {
    400.0
}
fn default_k1_offset() -> usize {
    8
}
fn default_k2_offset() -> usize {
    4
}
fn default_repeats() -> usize {
    1
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

impl Config {
    pub fn network(&self) -> Result<Network, Failure> {
        let n = &self.network;
        let reference = |what: &str| {
            if n.cache_sizes.len() == 3 {
                Ok(())
            } else {
                Err(Failure::Usage(format!(
                    "network.{what} is required unless the network has exactly three tiers"
                )))
            }
        };
        let k = &n.cache_sizes;
        let base = if k.len() == 3 {
            Some(Network::reference_three_tier([k[0], k[1], k[2]], n.catalog_size.max(1))?)
        } else {
            None
        };
        let pick = |v: &Option<Vec<f64>>, what: &str, get: fn(&Network) -> Vec<f64>| -> Result<Vec<f64>, Failure> {
            match (v, &base) {
                (Some(v), _) => Ok(v.clone()),
                (None, Some(b)) => Ok(get(b)),
                (None, None) => reference(what).map(|_| Vec::new()),
            }
        };
        let densities = pick(&n.densities, "densities", |b| b.densities.clone())?;
        let powers = pick(&n.powers, "powers", |b| b.powers.clone())?;
        let thresholds = pick(&n.sir_thresholds, "sir_thresholds", |b| b.sir_thresholds.clone())?;
        let alpha = n.alpha.unwrap_or(3.0);
        Ok(Network::new(alpha, densities, powers, thresholds, k.clone(), n.catalog_size)?)
    }

    pub fn context(&self) -> Result<Context, Failure> {
        Ok(Context::new(self.network()?)?)
    }

    /// The popularity vector (the estimate when uncertainty is configured).
    pub fn popularity(&self) -> Result<Popularity, Failure> {
        let p = &self.popularity;
        let files = self.network.catalog_size;
        let pop = match &p.weights {
            Some(w) => Popularity::from_weights(w)?,
            None => zipf(files, p.zipf_exponent)?,
        };
        if pop.len() != files {
            return Err(Failure::Usage(format!(
                "popularity has {} files, network has {files}",
                pop.len()
            )));
        }
        Ok(pop)
    }

    pub fn uncertainty(&self) -> Result<Uncertainty, Failure> {
        let est = self.popularity()?;
        Ok(match &self.popularity.error_bounds {
            Some(b) => Uncertainty::from_estimate(est, b.clone())?,
            None => Uncertainty::relative(est, self.popularity.epsilon)?,
        })
    }

    pub fn stream(&self, seed: u64) -> Result<RequestStreamConfig<f64>, Failure> {
        Ok(RequestStreamConfig::new(
            self.popularity()?,
            self.popularity.observers,
            self.popularity.request_prob,
            seed,
        )?)
    }

    pub fn schedules(&self) -> StochasticSchedules {
        let d = StochasticSchedules::default();
        let power = |e: Option<f64>, fallback: StepSchedule| match e {
            Some(exponent) => StepSchedule::Power { scale: 1.0, exponent },
            None => fallback,
        };
        StochasticSchedules {
            rho: power(self.algorithm.rho_exponent, d.rho),
            omega: power(self.algorithm.omega_exponent, d.omega),
        }
    }

    pub fn sim(&self, seed: u64) -> SimConfig {
        SimConfig {
            trials: self.simulation.trials,
            seed,
            expected_per_tier: self.simulation.expected_per_tier,
            tail_correction: self.simulation.tail_correction,
        }
    }
}
