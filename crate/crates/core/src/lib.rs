//! Random cache placement for multi-tier wireless networks.
//!
//! The analytic core (coefficients, success probability, caching matrices,
//! per-tier surrogates) is generic over the floating point type; the solvers
//! built on top run in `f64`.

pub mod alg_robust;
pub mod alg_sca;
pub mod alg_stochastic;
pub mod baselines;
pub mod caching;
pub mod error;
pub mod gp;
pub mod mcsim;
pub mod netmodel;
pub mod popularity;
pub mod scalar;
pub mod stp;
pub mod surrogate;

pub use alg_robust::{run_robust, RobustOutcome, RobustStop};
pub use alg_sca::{run, ScaOutcome, StepSchedule, StopRule};
pub use alg_stochastic::{run_stochastic, SlotStop, StochOutcome, StochasticSchedules};
pub use baselines::{iid_popularity, most_popular};
pub use caching::{
    project_capped_simplex, to_combinations, validate, CachingProbabilityMatrix,
    CombinationDistribution,
};
pub use error::{Error, Result};
pub use mcsim::{estimate_stp, SimConfig, SimEstimate};
pub use netmodel::{compute_coefficients, CoefficientTable, NetworkConfig};
pub use popularity::{zipf, PopularityVector, RequestBatch, RequestStreamConfig, UncertaintySet};
pub use scalar::Scalar;
pub use stp::{stp, stp_gradient, worst_case_stp, ObjectiveContext, WorstCase};
pub use surrogate::TierSurrogate;

pub type Network = NetworkConfig<f64>;
pub type Network32 = NetworkConfig<f32>;
pub type Coefficients = CoefficientTable<f64>;
pub type Popularity = PopularityVector<f64>;
pub type Placement = CachingProbabilityMatrix<f64>;
pub type Placement32 = CachingProbabilityMatrix<f32>;
pub type Uncertainty = UncertaintySet<f64>;
pub type Context = ObjectiveContext<f64>;
