//! Stochastic parallel SCA for unknown popularity.
//!
//! Each slot observes the empirical request shares `xi` of a set of users,
//! maximizes a per-tier surrogate built from `xi` and a running gradient
//! estimate `f`, moves the iterate with step `omega`, and folds the new
//! gradient sample into `f` with weight `rho`.

use std::time::Instant;

use crate::alg_sca::{convex_step, solve_all, StepSchedule};
use crate::caching::CachingProbabilityMatrix;
use crate::error::Result;
use crate::popularity::{PopularityVector, RequestBatch, RequestStreamConfig};
use crate::scalar::Scalar;
use crate::stp::{denominators, gradient_unchecked, stp_unchecked, ObjectiveContext};
use crate::surrogate::{cross_tier_slope, own_offset, TierSurrogate};

/// Step sizes indexed by the update count `t >= 1`; `rho(t)` is
/// `rho.gamma(t - 1)`, likewise for `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticSchedules {
    pub rho: StepSchedule,
    pub omega: StepSchedule,
}

impl Default for StochasticSchedules {
    fn default() -> Self {
        StochasticSchedules {
            rho: StepSchedule::Power {
                scale: 1.0,
                exponent: 0.6,
            },
            omega: StepSchedule::Power {
                scale: 1.0,
                exponent: 0.9,
            },
        }
    }
}

impl StochasticSchedules {
    pub fn rho(&self, t: usize) -> f64 {
        self.rho.gamma(t.saturating_sub(1))
    }

    pub fn omega(&self, t: usize) -> f64 {
        self.omega.gamma(t.saturating_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochState<S> {
    pub iterate: CachingProbabilityMatrix<S>,
    /// Running gradient estimate, tier by file.
    pub f: Vec<Vec<S>>,
    /// Slots seen, including empty ones.
    pub slot: u64,
    /// Updates performed; schedules are indexed by this count.
    pub updates: usize,
    pub schedules: StochasticSchedules,
}

impl<S: Scalar> StochState<S> {
    pub fn new(iterate: CachingProbabilityMatrix<S>, schedules: StochasticSchedules) -> Self {
        let f = vec![vec![S::zero(); iterate.files()]; iterate.tiers()];
        StochState {
            iterate,
            f,
            slot: 0,
            updates: 0,
            schedules,
        }
    }
}

/// Per-slot log entry. `rho` and `omega` are zero for skipped slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub entropy: f64,
    pub objective: f64,
    pub omega: f64,
    pub rho: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotStop {
    pub max_slots: u64,
    /// Trailing window for the objective-change test; 0 disables it.
    pub window: usize,
    pub tol: f64,
}

impl Default for SlotStop {
    fn default() -> Self {
        SlotStop {
            max_slots: 200,
            window: 0,
            tol: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StochOutcome<S> {
    pub placement: CachingProbabilityMatrix<S>,
    pub objective: S,
    pub slots: u64,
    pub history: Vec<SlotRecord>,
}

/// `f^t = (1 - rho) f^{t-1} + rho grad q(xi, T^t)` with `rho = rho(state.updates)`;
/// `state.iterate` must already be `T^t`.
pub fn update_f<S: Scalar>(state: &StochState<S>, xi: &PopularityVector<S>, ctx: &ObjectiveContext<S>) -> Result<Vec<Vec<S>>> {
    ctx.check_dims(&state.iterate, xi.len())?;
    let rho = S::lit(state.schedules.rho(state.updates.max(1)));
    Ok(fold_gradient(&state.f, xi.as_slice(), &state.iterate, rho, ctx))
}

fn fold_gradient<S: Scalar>(
    f: &[Vec<S>],
    xi: &[S],
    t: &CachingProbabilityMatrix<S>,
    rho: S,
    ctx: &ObjectiveContext<S>,
) -> Vec<Vec<S>> {
    let keep = S::one() - rho;
    let grad = gradient_unchecked(xi, t, ctx.coefficients());
    f.iter()
        .zip(&grad)
        .map(|(fr, gr)| fr.iter().zip(gr).map(|(&old, &g)| keep * old + rho * g).collect())
        .collect()
}

fn stochastic_surrogate<S: Scalar>(
    m: usize,
    xi: &[S],
    prev: &CachingProbabilityMatrix<S>,
    x: &[Vec<S>],
    f: &[Vec<S>],
    rho: S,
    ctx: &ObjectiveContext<S>,
) -> TierSurrogate<S> {
    let coef = ctx.coefficients();
    let keep = S::one() - rho;
    let cross = cross_tier_slope(xi, prev, x, coef, m);
    TierSurrogate {
        tier: m,
        theta_own: coef.theta(m, m),
        offset: own_offset(prev, coef, m),
        weight: xi.iter().map(|&v| rho * v).collect(),
        slope: cross
            .iter()
            .zip(&f[m])
            .map(|(&d, &fm)| rho * d - keep * fm)
            .collect(),
    }
}

/// Surrogate of tier `m` for the next update of `state` given sample `xi`.
pub fn tier_surrogate_stochastic<S: Scalar>(
    m: usize,
    xi: &PopularityVector<S>,
    state: &StochState<S>,
    ctx: &ObjectiveContext<S>,
) -> TierSurrogate<S> {
    let rho = S::lit(state.schedules.rho(state.updates + 1));
    let x = denominators(ctx.coefficients(), &state.iterate);
    stochastic_surrogate(m, xi.as_slice(), &state.iterate, &x, &state.f, rho, ctx)
}

/// Exact maximizer of tier `m`'s surrogate for the next update.
pub fn solve_tier_subproblem_stochastic<S: Scalar>(
    m: usize,
    xi: &PopularityVector<S>,
    state: &StochState<S>,
    ctx: &ObjectiveContext<S>,
) -> Result<Vec<S>> {
    ctx.check_dims(&state.iterate, xi.len())?;
    let (row, _) = tier_surrogate_stochastic(m, xi, state, ctx).maximize(ctx.cache_sizes()[m])?;
    Ok(row)
}

/// Update with an explicit sample; exposed so that the reduction to the
/// deterministic algorithm can be checked with `xi = a`.
pub fn step_with_sample<S: Scalar>(
    state: &StochState<S>,
    xi: &PopularityVector<S>,
    ctx: &ObjectiveContext<S>,
) -> Result<StochState<S>> {
    ctx.check_dims(&state.iterate, xi.len())?;
    let u = state.updates + 1;
    let rho = S::lit(state.schedules.rho(u));
    let omega = S::lit(state.schedules.omega(u));
    let prev = &state.iterate;
    let xi = xi.as_slice();
    let x = denominators(ctx.coefficients(), prev);
    let targets = solve_all(prev, ctx, |m| stochastic_surrogate(m, xi, prev, &x, &state.f, rho, ctx))?;
    let iterate = convex_step(prev, &targets, omega);
    let f = fold_gradient(&state.f, xi, &iterate, rho, ctx);
    Ok(StochState {
        iterate,
        f,
        slot: state.slot + 1,
        updates: u,
        schedules: state.schedules,
    })
}

/// Consumes one slot; an empty slot only advances the slot counter.
pub fn step<S: Scalar>(state: &StochState<S>, batch: &RequestBatch, ctx: &ObjectiveContext<S>) -> Result<StochState<S>> {
    match batch.shares::<S>() {
        Some(xi) => step_with_sample(state, &xi, ctx),
        None => {
            let mut next = state.clone();
            next.slot += 1;
            Ok(next)
        }
    }
}

/// Runs on the stream's slots `1, 2, ...`. The stream's popularity is the
/// ground truth used for the logged objective.
pub fn run_stochastic<S: Scalar>(
    stream: &RequestStreamConfig<S>,
    ctx: &ObjectiveContext<S>,
    schedules: &StochasticSchedules,
    stop: &SlotStop,
    initial: Option<CachingProbabilityMatrix<S>>,
) -> Result<StochOutcome<S>> {
    let start = Instant::now();
    let truth = stream.popularity().as_slice();
    let init = match initial {
        Some(t) => {
            crate::caching::validate(&t, ctx.cache_sizes())?;
            t
        }
        None => CachingProbabilityMatrix::uniform(ctx.config()),
    };
    ctx.check_dims(&init, truth.len())?;
    let mut state = StochState::new(init, *schedules);
    let mut history = Vec::new();
    let mut objective = stp_unchecked(truth, &state.iterate, ctx.coefficients());
    while state.slot < stop.max_slots {
        let batch = stream.sample_requests(state.slot + 1);
        let xi = batch.shares::<S>();
        let before = state.updates;
        state = step(&state, &batch, ctx)?;
        let updated = state.updates > before;
        if updated {
            objective = stp_unchecked(truth, &state.iterate, ctx.coefficients());
        }
        history.push(SlotRecord {
            t: state.slot,
            entropy: xi.map(|v| v.entropy().f64()).unwrap_or(0.0),
            objective: objective.f64(),
            omega: if updated { schedules.omega(state.updates) } else { 0.0 },
            rho: if updated { schedules.rho(state.updates) } else { 0.0 },
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if stop.window > 0 && history.len() > stop.window {
            let old = history[history.len() - 1 - stop.window].objective;
            if (objective.f64() - old).abs() <= stop.tol {
                break;
            }
        }
    }
    Ok(StochOutcome {
        placement: state.iterate,
        objective,
        slots: state.slot,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alg_sca;
    use crate::caching::validate;
    use crate::netmodel::NetworkConfig;
    use crate::popularity::zipf;

    fn ctx(k: [usize; 3], n: usize) -> ObjectiveContext<f64> {
        ObjectiveContext::new(NetworkConfig::reference_three_tier(k, n).unwrap()).unwrap()
    }

    #[test]
    fn default_schedules() {
        let s = StochasticSchedules::default();
        assert_eq!(s.rho(1), 1.0);
        assert_eq!(s.omega(1), 1.0);
        let mut prev = f64::INFINITY;
        for t in 2..10_000 {
            let r = s.omega(t) / s.rho(t);
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 0.07);
    }

    #[test]
    fn first_update_sets_f_to_the_sample_gradient() {
        let c = ctx([3, 2, 1], 8);
        let xi = zipf(8, 1.0).unwrap();
        let s0 = StochState::new(CachingProbabilityMatrix::uniform(c.config()), StochasticSchedules::default());
        let s1 = step_with_sample(&s0, &xi, &c).unwrap();
        let g = gradient_unchecked(xi.as_slice(), &s1.iterate, c.coefficients());
        assert_eq!(s1.f, g);
        assert_eq!(update_f(&StochState { f: s0.f.clone(), ..s1.clone() }, &xi, &c).unwrap(), g);
    }

    #[test]
    fn unobserved_file_decays() {
        let c = ctx([3, 2, 1], 6);
        let s0 = StochState::new(CachingProbabilityMatrix::uniform(c.config()), StochasticSchedules::default());
        let s1 = step_with_sample(&s0, &zipf(6, 0.5).unwrap(), &c).unwrap();
        let xi = PopularityVector::new(vec![0.5, 0.0, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let s2 = step_with_sample(&s1, &xi, &c).unwrap();
        let rho = s1.schedules.rho(2);
        for m in 0..3 {
            assert_eq!(s2.f[m][1], (1.0 - rho) * s1.f[m][1]);
        }
    }

    #[test]
    fn empty_slot_is_skipped() {
        let c = ctx([3, 2, 1], 6);
        let s0 = StochState::new(CachingProbabilityMatrix::uniform(c.config()), StochasticSchedules::default());
        let batch = RequestBatch {
            slot: 1,
            counts: vec![0; 6],
            active: 0,
        };
        let s1 = step(&s0, &batch, &c).unwrap();
        assert_eq!(s1.iterate, s0.iterate);
        assert_eq!(s1.f, s0.f);
        assert_eq!(s1.updates, 0);
        assert_eq!(s1.slot, 1);
    }

    #[test]
    fn zero_omega_keeps_iterate() {
        let c = ctx([3, 2, 1], 6);
        let sched = StochasticSchedules {
            rho: StepSchedule::Harmonic,
            omega: StepSchedule::Constant(0.0),
        };
        let s0 = StochState::new(CachingProbabilityMatrix::uniform(c.config()), sched);
        let s1 = step_with_sample(&s0, &zipf(6, 0.8).unwrap(), &c).unwrap();
        assert_eq!(s1.iterate, s0.iterate);
        assert_ne!(s1.f, s0.f);
    }

    #[test]
    fn reduces_to_deterministic_step() {
        let c = ctx([4, 3, 2], 12);
        let a = zipf(12, 0.7).unwrap();
        let sched = StochasticSchedules {
            rho: StepSchedule::Constant(1.0),
            omega: StepSchedule::Harmonic,
        };
        let mut s = StochState::new(CachingProbabilityMatrix::uniform(c.config()), sched);
        let mut det = alg_sca::ScaState::new(s.iterate.clone());
        for _ in 0..5 {
            s = step_with_sample(&s, &a, &c).unwrap();
            det = alg_sca::iterate(&det, &a, &StepSchedule::Harmonic, &c).unwrap();
            assert_eq!(s.iterate, det.iterate);
        }
    }

    #[test]
    fn stream_run_is_feasible_and_deterministic() {
        let c = ctx([3, 2, 1], 10);
        let stream = RequestStreamConfig::new(zipf(10, 0.8).unwrap(), 50, 1.0, 7).unwrap();
        let stop = SlotStop {
            max_slots: 30,
            ..SlotStop::default()
        };
        let one = run_stochastic(&stream, &c, &StochasticSchedules::default(), &stop, None).unwrap();
        let two = run_stochastic(&stream, &c, &StochasticSchedules::default(), &stop, None).unwrap();
        validate(&one.placement, c.cache_sizes()).unwrap();
        assert_eq!(one.placement, two.placement);
        assert_eq!(one.history.len(), 30);
    }
}
