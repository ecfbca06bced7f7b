//! Parallel successive convex approximation for the STP with known popularity.
//!
//! Every iteration maximizes one concave surrogate per tier (all tiers read
//! the same previous iterate, so they run concurrently) and moves each tier
//! part of the way towards its maximizer.

use std::time::Instant;

use rayon::prelude::*;

use crate::caching::{project_capped_simplex, CachingProbabilityMatrix};
use crate::error::Result;
use crate::popularity::PopularityVector;
use crate::scalar::Scalar;
use crate::stp::{denominators, gradient_unchecked, stp_unchecked, ObjectiveContext};
use crate::surrogate::{cross_tier_slope, own_offset, TierSurrogate};

/// Diminishing step size rule `k -> gamma_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `2 / (k + 2)`.
    Harmonic,
    /// `scale * (k + 1)^-exponent`.
    Power { scale: f64, exponent: f64 },
    /// A fixed step; not diminishing, useful for experiments and edge cases.
    Constant(f64),
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Harmonic
    }
}

impl StepSchedule {
    /// Step used to produce iterate `k + 1` from iterate `k`, for `k >= 0`.
    pub fn gamma(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            StepSchedule::Harmonic => 2.0 / (k + 2.0),
            StepSchedule::Power { scale, exponent } => scale * (k + 1.0).powf(-exponent),
            StepSchedule::Constant(g) => g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            max_iters: 2000,
            tol: 1e-5,
        }
    }
}

/// One row of the per-iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub step: f64,
    pub stationarity: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ScaState<S> {
    pub iterate: CachingProbabilityMatrix<S>,
    pub k: usize,
    pub history: Vec<IterationRecord>,
    pub stationarity: S,
}

#[derive(Debug, Clone)]
pub struct ScaOutcome<S> {
    /// Best iterate by objective.
    pub placement: CachingProbabilityMatrix<S>,
    pub objective: S,
    pub stationarity: S,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

/// Surrogate of tier `m` around `prev` for popularity `a`.
pub fn tier_surrogate<S: Scalar>(
    m: usize,
    a: &[S],
    prev: &CachingProbabilityMatrix<S>,
    ctx: &ObjectiveContext<S>,
) -> TierSurrogate<S> {
    let x = denominators(ctx.coefficients(), prev);
    surrogate_at(m, a, prev, &x, ctx)
}

fn surrogate_at<S: Scalar>(
    m: usize,
    a: &[S],
    prev: &CachingProbabilityMatrix<S>,
    x: &[Vec<S>],
    ctx: &ObjectiveContext<S>,
) -> TierSurrogate<S> {
    let coef = ctx.coefficients();
    TierSurrogate {
        tier: m,
        theta_own: coef.theta(m, m),
        offset: own_offset(prev, coef, m),
        weight: a.to_vec(),
        slope: cross_tier_slope(a, prev, x, coef, m),
    }
}

/// Exact maximizer of tier `m`'s surrogate.
pub fn solve_tier_subproblem<S: Scalar>(
    m: usize,
    a: &PopularityVector<S>,
    prev: &CachingProbabilityMatrix<S>,
    ctx: &ObjectiveContext<S>,
) -> Result<Vec<S>> {
    ctx.check_dims(prev, a.len())?;
    let (row, _) = tier_surrogate(m, a.as_slice(), prev, ctx).maximize(ctx.cache_sizes()[m])?;
    Ok(row)
}

/// `(1 - gamma) prev + gamma target`, row by row, clipped to the box.
pub(crate) fn convex_step<S: Scalar>(
    prev: &CachingProbabilityMatrix<S>,
    targets: &[Vec<S>],
    gamma: S,
) -> CachingProbabilityMatrix<S> {
    let keep = S::one() - gamma;
    let rows = prev
        .rows()
        .iter()
        .zip(targets)
        .map(|(old, new)| {
            old.iter()
                .zip(new)
                .map(|(&o, &n)| (keep * o + gamma * n).max(S::zero()).min(S::one()))
                .collect()
        })
        .collect();
    CachingProbabilityMatrix::from_rows_unchecked(rows)
}

/// `||T - Proj(T + grad q(a, T))||_inf` with `Proj` the Euclidean projection
/// onto the feasible set, tier by tier.
pub fn stationarity<S: Scalar>(
    a: &PopularityVector<S>,
    t: &CachingProbabilityMatrix<S>,
    ctx: &ObjectiveContext<S>,
) -> Result<S> {
    ctx.check_dims(t, a.len())?;
    stationarity_unchecked(a.as_slice(), t, ctx)
}

pub(crate) fn stationarity_unchecked<S: Scalar>(
    a: &[S],
    t: &CachingProbabilityMatrix<S>,
    ctx: &ObjectiveContext<S>,
) -> Result<S> {
    let grad = gradient_unchecked(a, t, ctx.coefficients());
    let mut worst = S::zero();
    for (m, g) in grad.iter().enumerate() {
        let row = t.row(m);
        let shifted: Vec<S> = row.iter().zip(g).map(|(&v, &d)| v + d).collect();
        let proj = project_capped_simplex(&shifted, S::from_usize_lossy(ctx.cache_sizes()[m]))?;
        for (&v, &p) in row.iter().zip(&proj) {
            worst = worst.max((v - p).abs());
        }
    }
    Ok(worst)
}

/// Maximizers of every tier's surrogate around `prev`, in tier order.
pub(crate) fn solve_all<S: Scalar>(
    prev: &CachingProbabilityMatrix<S>,
    ctx: &ObjectiveContext<S>,
    surrogate: impl Fn(usize) -> TierSurrogate<S> + Sync,
) -> Result<Vec<Vec<S>>> {
    (0..prev.tiers())
        .into_par_iter()
        .map(|m| surrogate(m).maximize(ctx.cache_sizes()[m]).map(|(row, _)| row))
        .collect()
}

/// One parallel update with step `gamma_k` of the schedule.
pub fn iterate<S: Scalar>(
    state: &ScaState<S>,
    a: &PopularityVector<S>,
    schedule: &StepSchedule,
    ctx: &ObjectiveContext<S>,
) -> Result<ScaState<S>> {
    ctx.check_dims(&state.iterate, a.len())?;
    let gamma = schedule.gamma(state.k);
    let next = step_with(&state.iterate, a.as_slice(), S::lit(gamma), ctx)?;
    let stat = stationarity_unchecked(a.as_slice(), &next, ctx)?;
    let mut history = state.history.clone();
    history.push(IterationRecord {
        iter: state.k + 1,
        objective: stp_unchecked(a.as_slice(), &next, ctx.coefficients()).f64(),
        step: gamma,
        stationarity: stat.f64(),
        wall_ms: 0.0,
    });
    Ok(ScaState {
        iterate: next,
        k: state.k + 1,
        history,
        stationarity: stat,
    })
}

pub(crate) fn step_with<S: Scalar>(
    prev: &CachingProbabilityMatrix<S>,
    a: &[S],
    gamma: S,
    ctx: &ObjectiveContext<S>,
) -> Result<CachingProbabilityMatrix<S>> {
    let x = denominators(ctx.coefficients(), prev);
    let targets = solve_all(prev, ctx, |m| surrogate_at(m, a, prev, &x, ctx))?;
    Ok(convex_step(prev, &targets, gamma))
}

/// Runs the iteration from `initial` (uniform caching when `None`).
pub fn run<S: Scalar>(
    a: &PopularityVector<S>,
    ctx: &ObjectiveContext<S>,
    schedule: &StepSchedule,
    stop: &StopRule,
    initial: Option<CachingProbabilityMatrix<S>>,
) -> Result<ScaOutcome<S>> {
    let start = Instant::now();
    let mut t = match initial {
        Some(t) => {
            crate::caching::validate(&t, ctx.cache_sizes())?;
            t
        }
        None => CachingProbabilityMatrix::uniform(ctx.config()),
    };
    ctx.check_dims(&t, a.len())?;
    let a = a.as_slice();
    let coef = ctx.coefficients();
    let tol = S::lit(stop.tol);

    let mut objective = stp_unchecked(a, &t, coef);
    let mut stat = stationarity_unchecked(a, &t, ctx)?;
    let mut history = vec![IterationRecord {
        iter: 0,
        objective: objective.f64(),
        step: 0.0,
        stationarity: stat.f64(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    }];
    let mut best = (t.clone(), objective, stat);
    let mut iterations = 0;
    while stat > tol && iterations < stop.max_iters {
        let gamma = schedule.gamma(iterations);
        t = step_with(&t, a, S::lit(gamma), ctx)?;
        iterations += 1;
        objective = stp_unchecked(a, &t, coef);
        stat = stationarity_unchecked(a, &t, ctx)?;
        history.push(IterationRecord {
            iter: iterations,
            objective: objective.f64(),
            step: gamma,
            stationarity: stat.f64(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if objective >= best.1 {
            best = (t.clone(), objective, stat);
        }
    }
    Ok(ScaOutcome {
        placement: best.0,
        objective: best.1,
        stationarity: best.2,
        iterations,
        converged: stat <= tol,
        history,
    })
}

impl<S: Scalar> ScaState<S> {
    pub fn new(iterate: CachingProbabilityMatrix<S>) -> Self {
        ScaState {
            iterate,
            k: 0,
            history: Vec::new(),
            stationarity: S::infinity(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caching::validate;
    use crate::netmodel::NetworkConfig;
    use crate::popularity::zipf;

    fn ctx(k: [usize; 3], n: usize) -> ObjectiveContext<f64> {
        ObjectiveContext::new(NetworkConfig::reference_three_tier(k, n).unwrap()).unwrap()
    }

    #[test]
    fn default_schedule_values() {
        let s = StepSchedule::Harmonic;
        assert_eq!(s.gamma(0), 1.0);
        assert_eq!(s.gamma(2), 0.5);
        assert!(s.gamma(100) < s.gamma(99));
    }

    #[test]
    fn symmetric_subproblem_is_uniform() {
        let c = ctx([3, 2, 1], 6);
        let a = PopularityVector::uniform(6).unwrap();
        let t = CachingProbabilityMatrix::uniform(c.config());
        for m in 0..3 {
            let row = solve_tier_subproblem(m, &a, &t, &c).unwrap();
            let want = c.cache_sizes()[m] as f64 / 6.0;
            for v in row {
                assert!((v - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_step_lands_on_subproblem_solutions() {
        let c = ctx([3, 2, 1], 8);
        let a = zipf(8, 0.8).unwrap();
        let t = CachingProbabilityMatrix::uniform(c.config());
        let state = ScaState::new(t.clone());
        let next = iterate(&state, &a, &StepSchedule::Constant(1.0), &c).unwrap();
        for m in 0..3 {
            let row = solve_tier_subproblem(m, &a, &t, &c).unwrap();
            assert_eq!(next.iterate.row(m), &row[..]);
        }
        let frozen = iterate(&state, &a, &StepSchedule::Constant(0.0), &c).unwrap();
        assert_eq!(frozen.iterate, t);
    }

    #[test]
    fn parallel_matches_sequential() {
        let c = ctx([4, 3, 2], 12);
        let a = zipf(12, 0.55).unwrap();
        let t = CachingProbabilityMatrix::uniform(c.config());
        let next = iterate(&ScaState::new(t.clone()), &a, &StepSchedule::Harmonic, &c).unwrap();
        let gamma = StepSchedule::Harmonic.gamma(0);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|m| {
                let target = solve_tier_subproblem(m, &a, &t, &c).unwrap();
                t.row(m)
                    .iter()
                    .zip(&target)
                    .map(|(&o, &n)| ((1.0 - gamma) * o + gamma * n).clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        for m in 0..3 {
            assert_eq!(next.iterate.row(m), &rows[m][..]);
        }
    }

    #[test]
    fn full_caches_are_already_optimal() {
        let c = ctx([5, 5, 5], 5);
        let a = zipf(5, 1.0).unwrap();
        let out = run(&a, &c, &StepSchedule::Harmonic, &StopRule::default(), None).unwrap();
        assert_eq!(out.iterations, 0);
        for m in 0..3 {
            assert!(out.placement.row(m).iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn iterates_stay_feasible_and_converge() {
        let c = ctx([4, 3, 2], 15);
        let a = zipf(15, 0.9).unwrap();
        let out = run(&a, &c, &StepSchedule::Harmonic, &StopRule::default(), None).unwrap();
        validate(&out.placement, c.cache_sizes()).unwrap();
        assert!(out.stationarity <= 1e-4, "stationarity {}", out.stationarity);
        assert!(out.objective >= out.history[0].objective);
    }
}
