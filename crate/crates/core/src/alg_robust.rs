//! Robust caching for an imperfectly known popularity vector.
//!
//! The worst case over the uncertainty set is an LP in the popularity; its
//! dual turns the max-min problem into a single maximization over the
//! placement `T` and the dual variables `(lambda, mu, nu1 - nu2)`:
//!
//! ```text
//! max y
//! s.t. (y + sum_n mu_n hi_n + nu1) / (sum_n lambda_n lo_n + nu2) <= 1
//!      (lambda_n + nu2) / (sum_m T[m][n] / x[m][n] + mu_n + nu1) <= 1
//!      (sum_l theta[l][m] T[l][n] + eta[m]) / x[m][n] <= 1
//!      T <= 1, sum_n T[m][n] <= K_m
//! ```
//!
//! The two ratio constraints have posynomial denominators; each outer
//! iteration replaces them by their weighted geometric-mean monomials at the
//! previous point and solves the resulting geometric program. `x` only ever
//! wants to be as small as possible, so it is eliminated as
//! `x = theta^T T + eta` and the GP keeps the variables
//! `(T, lambda, mu, nu1, nu2, y)`.

use std::time::Instant;

use crate::caching::{project_capped_simplex, CachingProbabilityMatrix};
use crate::error::{Error, Result};
use crate::gp::{BarrierOptions, Constraint, LogGp, LogSumExp, Term};
use crate::popularity::UncertaintySet;
use crate::stp::{minimize_over_box_simplex, worst_case_stp, InnerLpDual, ObjectiveContext, WorstCase};

/// Weights are floored here before use.
pub const WEIGHT_FLOOR: f64 = 1e-12;
/// Lower end of every log-variable box (`ln 1e-12`).
const LOG_FLOOR: f64 = -27.631_021_115_928_547;
/// Upper end of the boxes of the dual variables and `y` (`ln 1e6`).
const LOG_CEIL: f64 = 13.815_510_557_964_274;

#[derive(Debug, Clone, PartialEq)]
pub struct DualGpPoint {
    pub t: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu1: f64,
    pub nu2: f64,
    pub y: f64,
}

/// Shares of the previous point in the two posynomial denominators.
#[derive(Debug, Clone, PartialEq)]
pub struct GpWeights {
    pub sigma: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub gamma1: f64,
    pub gamma2: Vec<f64>,
    pub gamma3: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustStop {
    pub max_iters: usize,
    /// Relative change of `y` between outer iterations.
    pub tol: f64,
    pub barrier: BarrierOptions,
    /// Initial barrier weight of every GP after the first; the previous
    /// solution is already close to the new central path.
    pub warm_t0: f64,
}

impl Default for RobustStop {
    fn default() -> Self {
        RobustStop {
            max_iters: 100,
            tol: 1e-6,
            barrier: BarrierOptions::default(),
            warm_t0: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub iter: usize,
    pub y: f64,
    /// Duality gap bound of the GP solve in log space.
    pub kkt_residual: f64,
    pub newton_steps: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RobustOutcome {
    /// Rows rescaled to sum exactly to the cache sizes.
    pub placement: CachingProbabilityMatrix<f64>,
    pub y: f64,
    /// Independent worst-case evaluation of `placement`.
    pub worst_case: WorstCase<f64>,
    /// `(lambda, mu, nu1 - nu2)` of the final point.
    pub dual: InnerLpDual<f64>,
    pub point: DualGpPoint,
    pub iterations: usize,
    pub converged: bool,
    /// Set when a GP solve failed and the previous point was kept.
    pub solver_failure: Option<String>,
    pub history: Vec<OuterRecord>,
}

fn denominators(t: &[Vec<f64>], ctx: &ObjectiveContext<f64>) -> Vec<Vec<f64>> {
    let coef = ctx.coefficients();
    let m_count = t.len();
    (0..m_count)
        .map(|m| {
            (0..t[0].len())
                .map(|n| (0..m_count).fold(coef.eta(m), |acc, l| acc + coef.theta(l, m) * t[l][n]))
                .collect()
        })
        .collect()
}

fn floor_and_normalize(values: &mut [f64], keep: &[bool]) {
    for (v, &k) in values.iter_mut().zip(keep) {
        *v = if k { v.max(WEIGHT_FLOOR) } else { 0.0 };
    }
    let s: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= s);
}

/// Condensation weights at `prev`. Denominator terms with a zero
/// coefficient (`lo_n = 0`) are not part of the posynomial and get weight 0.
pub fn compute_weights(prev: &DualGpPoint, set: &UncertaintySet<f64>) -> GpWeights {
    let lo = set.lower();
    let n_files = lo.len();
    let m_count = prev.t.len();

    let mut first: Vec<f64> = (0..n_files).map(|n| prev.lambda[n] * lo[n]).collect();
    first.push(prev.nu2);
    let mut keep: Vec<bool> = lo.iter().map(|&v| v > 0.0).collect();
    keep.push(true);
    let total: f64 = first.iter().sum();
    first.iter_mut().for_each(|v| *v /= total);
    floor_and_normalize(&mut first, &keep);
    let gamma1 = first[n_files];
    first.truncate(n_files);

    let mut beta = vec![vec![0.0; n_files]; m_count];
    let mut gamma2 = vec![0.0; n_files];
    let mut gamma3 = vec![0.0; n_files];
    for n in 0..n_files {
        let mut parts: Vec<f64> = (0..m_count).map(|m| prev.t[m][n] / prev.x[m][n]).collect();
        parts.push(prev.mu[n]);
        parts.push(prev.nu1);
        let total: f64 = parts.iter().sum();
        parts.iter_mut().for_each(|v| *v /= total);
        floor_and_normalize(&mut parts, &vec![true; m_count + 2]);
        for m in 0..m_count {
            beta[m][n] = parts[m];
        }
        gamma2[n] = parts[m_count];
        gamma3[n] = parts[m_count + 1];
    }
    GpWeights {
        sigma: first,
        beta,
        gamma1,
        gamma2,
        gamma3,
    }
}

struct Layout {
    tiers: usize,
    files: usize,
}

impl Layout {
    fn t(&self, m: usize, n: usize) -> usize {
        m * self.files + n
    }
    fn lambda(&self, n: usize) -> usize {
        self.tiers * self.files + n
    }
    fn mu(&self, n: usize) -> usize {
        self.tiers * self.files + self.files + n
    }
    fn nu1(&self) -> usize {
        self.tiers * self.files + 2 * self.files
    }
    fn nu2(&self) -> usize {
        self.nu1() + 1
    }
    fn y(&self) -> usize {
        self.nu1() + 2
    }
    fn dim(&self) -> usize {
        self.nu1() + 3
    }
}

fn build_gp(weights: &GpWeights, set: &UncertaintySet<f64>, ctx: &ObjectiveContext<f64>) -> LogGp {
    let coef = ctx.coefficients();
    let lay = Layout {
        tiers: ctx.tiers(),
        files: ctx.files(),
    };
    let (lo, hi) = (set.lower(), set.upper());
    let mut constraints = Vec::with_capacity(lay.files + lay.tiers + 1);

    // Objective bound.
    let mut num = vec![Term::var(lay.y(), 1.0), Term::var(lay.nu1(), 1.0)];
    num.extend((0..lay.files).filter(|&n| hi[n] > 0.0).map(|n| Term::var(lay.mu(n), hi[n])));
    let mut linear = Vec::new();
    let mut constant = 0.0;
    for n in 0..lay.files {
        let s = weights.sigma[n];
        if s > 0.0 {
            linear.push((lay.lambda(n), -s));
            constant -= s * (lo[n].ln() - s.ln());
        }
    }
    let g1 = weights.gamma1;
    linear.push((lay.nu2(), -g1));
    constant += g1 * g1.ln();
    constraints.push(Constraint {
        lse: vec![(1.0, LogSumExp { terms: num })],
        linear,
        constant,
    });

    // One dual feasibility constraint per file; the factor x^beta of the
    // monomial becomes `+beta log(theta^T T + eta)`.
    for n in 0..lay.files {
        let mut lse = vec![(
            1.0,
            LogSumExp {
                terms: vec![Term::var(lay.lambda(n), 1.0), Term::var(lay.nu2(), 1.0)],
            },
        )];
        let mut linear = Vec::new();
        let mut constant = 0.0;
        for m in 0..lay.tiers {
            let b = weights.beta[m][n];
            let mut terms: Vec<Term> = (0..lay.tiers)
                .filter(|&l| coef.theta(l, m) > 0.0)
                .map(|l| Term::var(lay.t(l, n), coef.theta(l, m)))
                .collect();
            if coef.eta(m) > 0.0 {
                terms.push(Term::constant(coef.eta(m)));
            }
            lse.push((b, LogSumExp { terms }));
            linear.push((lay.t(m, n), -b));
            constant += b * b.ln();
        }
        let (g2, g3) = (weights.gamma2[n], weights.gamma3[n]);
        linear.push((lay.mu(n), -g2));
        linear.push((lay.nu1(), -g3));
        constant += g2 * g2.ln() + g3 * g3.ln();
        constraints.push(Constraint { lse, linear, constant });
    }

    for (m, &k) in ctx.cache_sizes().iter().enumerate() {
        constraints.push(Constraint {
            lse: vec![(
                1.0,
                LogSumExp {
                    terms: (0..lay.files).map(|n| Term::var(lay.t(m, n), 1.0)).collect(),
                },
            )],
            linear: Vec::new(),
            constant: -(k as f64).ln(),
        });
    }

    let dim = lay.dim();
    let mut upper = vec![LOG_CEIL; dim];
    upper[..lay.tiers * lay.files].iter_mut().for_each(|u| *u = 0.0);
    LogGp {
        dim,
        objective: vec![(lay.y(), -1.0)],
        constraints,
        lower: vec![LOG_FLOOR; dim],
        upper,
    }
}

fn to_log(point: &DualGpPoint) -> Vec<f64> {
    let mut z: Vec<f64> = point.t.iter().flatten().map(|v| v.ln()).collect();
    z.extend(point.lambda.iter().map(|v| v.ln()));
    z.extend(point.mu.iter().map(|v| v.ln()));
    z.extend([point.nu1.ln(), point.nu2.ln(), point.y.ln()]);
    z
}

fn from_log(z: &[f64], ctx: &ObjectiveContext<f64>) -> DualGpPoint {
    let lay = Layout {
        tiers: ctx.tiers(),
        files: ctx.files(),
    };
    let t: Vec<Vec<f64>> = (0..lay.tiers)
        .map(|m| (0..lay.files).map(|n| z[lay.t(m, n)].exp()).collect())
        .collect();
    DualGpPoint {
        x: denominators(&t, ctx),
        t,
        lambda: (0..lay.files).map(|n| z[lay.lambda(n)].exp()).collect(),
        mu: (0..lay.files).map(|n| z[lay.mu(n)].exp()).collect(),
        nu1: z[lay.nu1()].exp(),
        nu2: z[lay.nu2()].exp(),
        y: z[lay.y()].exp(),
    }
}

/// Solves the condensed GP built from `weights`, starting from `prev`.
pub fn solve_gp(
    weights: &GpWeights,
    prev: &DualGpPoint,
    set: &UncertaintySet<f64>,
    ctx: &ObjectiveContext<f64>,
    opts: &BarrierOptions,
) -> Result<(DualGpPoint, crate::gp::BarrierSolution)> {
    let gp = build_gp(weights, set, ctx);
    let sol = gp.solve(&to_log(prev), opts)?;
    Ok((from_log(&sol.z, ctx), sol))
}

/// Largest violation of the constraints of the (uncondensed) problem at
/// `p`, as `ratio - 1` for the ratio constraints and absolute excess for the
/// box and budgets. Negative values mean strict feasibility.
pub fn problem_violation(p: &DualGpPoint, set: &UncertaintySet<f64>, ctx: &ObjectiveContext<f64>) -> f64 {
    let (lo, hi) = (set.lower(), set.upper());
    let files = lo.len();
    let mut worst = f64::NEG_INFINITY;
    let num: f64 = p.y + (0..files).map(|n| p.mu[n] * hi[n]).sum::<f64>() + p.nu1;
    let den: f64 = (0..files).map(|n| p.lambda[n] * lo[n]).sum::<f64>() + p.nu2;
    worst = worst.max(num / den - 1.0);
    let posy = denominators(&p.t, ctx);
    for n in 0..files {
        let g: f64 = (0..p.t.len()).map(|m| p.t[m][n] / p.x[m][n]).sum();
        worst = worst.max((p.lambda[n] + p.nu2) / (g + p.mu[n] + p.nu1) - 1.0);
        for m in 0..p.t.len() {
            worst = worst.max(posy[m][n] / p.x[m][n] - 1.0);
            worst = worst.max(p.t[m][n] - 1.0);
        }
    }
    for (m, &k) in ctx.cache_sizes().iter().enumerate() {
        worst = worst.max(p.t[m].iter().sum::<f64>() - k as f64);
    }
    worst
}

/// Strictly feasible starting point: uniform caching shrunk into the
/// interior, and the inner LP dual at that placement with a small slack.
pub fn initial_point(set: &UncertaintySet<f64>, ctx: &ObjectiveContext<f64>) -> Result<DualGpPoint> {
    set.check_nonempty()?;
    if set.len() != ctx.files() {
        return Err(Error::DimensionMismatch(format!(
            "uncertainty set has {} files, network has {}",
            set.len(),
            ctx.files()
        )));
    }
    let shrink = 1.0 - 1e-6;
    let n_files = ctx.files() as f64;
    let t: Vec<Vec<f64>> = ctx
        .cache_sizes()
        .iter()
        .map(|&k| vec![k as f64 / n_files * shrink; ctx.files()])
        .collect();
    let x: Vec<Vec<f64>> = denominators(&t, ctx)
        .into_iter()
        .map(|row| row.into_iter().map(|v| v * (1.0 + 1e-6)).collect())
        .collect();
    let gains: Vec<f64> = (0..ctx.files())
        .map(|n| (0..t.len()).map(|m| t[m][n] / x[m][n]).sum())
        .collect();
    let wc = minimize_over_box_simplex(&gains, set)?;
    let price = -wc.dual.nu;
    // A slack comparable to the gains keeps every term of the condensed
    // denominators visible; tiny multipliers would only grow geometrically.
    let delta = 0.1 * gains.iter().copied().fold(1e-6, f64::max);
    let nu1 = 1e-2;
    let lambda: Vec<f64> = gains.iter().map(|&g| (g - price).max(0.0) + delta).collect();
    let mu: Vec<f64> = gains.iter().map(|&g| (price - g).max(0.0) + 2.0 * delta).collect();
    let nu2 = price + nu1;
    let (lo, hi) = (set.lower(), set.upper());
    let value: f64 = lambda.iter().zip(lo).map(|(l, a)| l * a).sum::<f64>() + nu2
        - mu.iter().zip(hi).map(|(m, a)| m * a).sum::<f64>()
        - nu1;
    if !(value > 0.0) {
        return Err(Error::SolverFailure(format!(
            "initial dual value {value:e} is not positive; no file is cached with positive gain"
        )));
    }
    Ok(DualGpPoint {
        t,
        x,
        lambda,
        mu,
        nu1,
        nu2,
        y: value * (1.0 - 1e-6),
    })
}

/// Rows scaled up to the cache sizes, projected if that overshoots a box.
fn recover_placement(t: &[Vec<f64>], ctx: &ObjectiveContext<f64>) -> Result<CachingProbabilityMatrix<f64>> {
    let rows = t
        .iter()
        .zip(ctx.cache_sizes())
        .map(|(row, &k)| {
            let k = k as f64;
            let s: f64 = row.iter().sum();
            let scaled: Vec<f64> = row.iter().map(|v| v * k / s).collect();
            if scaled.iter().all(|&v| v <= 1.0) {
                Ok(scaled)
            } else {
                project_capped_simplex(&scaled, k)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    CachingProbabilityMatrix::from_rows(rows)
}

pub fn run_robust(set: &UncertaintySet<f64>, ctx: &ObjectiveContext<f64>, stop: &RobustStop) -> Result<RobustOutcome> {
    let start = Instant::now();
    let mut point = initial_point(set, ctx)?;
    let mut history = vec![OuterRecord {
        iter: 0,
        y: point.y,
        kkt_residual: f64::NAN,
        newton_steps: 0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    }];
    let mut converged = false;
    let mut failure = None;
    let mut iterations = 0;
    while iterations < stop.max_iters {
        let weights = compute_weights(&point, set);
        let mut opts = stop.barrier;
        if iterations > 0 {
            opts.t0 = opts.t0.max(stop.warm_t0);
        }
        let (next, sol) = match solve_gp(&weights, &point, set, ctx, &opts) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        iterations += 1;
        let improved = next.y >= point.y;
        let change = (next.y - point.y).abs();
        if improved {
            point = next;
        }
        history.push(OuterRecord {
            iter: iterations,
            y: point.y,
            kkt_residual: sol.gap,
            newton_steps: sol.newton_steps,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if !improved || change <= stop.tol * point.y.max(1.0) {
            converged = true;
            break;
        }
    }
    let placement = recover_placement(&point.t, ctx)?;
    let worst_case = worst_case_stp(set, &placement, ctx)?;
    let dual = InnerLpDual {
        lambda: point.lambda.clone(),
        mu: point.mu.clone(),
        nu: point.nu1 - point.nu2,
    };
    Ok(RobustOutcome {
        placement,
        y: point.y,
        worst_case,
        dual,
        point,
        iterations,
        converged,
        solver_failure: failure,
        history,
    })
}
