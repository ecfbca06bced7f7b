//! Analytic successful transmission probability (STP), its gradient, and the
//! worst case over a popularity uncertainty set.
//!
//! With `x[m][n] = sum_l theta[l][m] T[l][n] + eta[m]` the STP is
//!
//! ```text
//! q(a, T) = sum_m sum_n a_n T[m][n] / x[m][n]
//! ```

use crate::caching::CachingProbabilityMatrix;
use crate::error::{Error, Result};
use crate::netmodel::{compute_coefficients, CoefficientTable, NetworkConfig};
use crate::popularity::{PopularityVector, UncertaintySet};
use crate::scalar::Scalar;

/// Network configuration together with its precomputed coefficient table.
#[derive(Debug, Clone)]
pub struct ObjectiveContext<S> {
    config: NetworkConfig<S>,
    coefficients: CoefficientTable<S>,
}

impl<S: Scalar> ObjectiveContext<S> {
    pub fn new(config: NetworkConfig<S>) -> Result<Self> {
        let coefficients = compute_coefficients(&config)?;
        Ok(Self {
            config,
            coefficients,
        })
    }

    /// Uses an explicit table instead of the one implied by `config`.
    pub fn with_coefficients(config: NetworkConfig<S>, coefficients: CoefficientTable<S>) -> Result<Self> {
        config.validate()?;
        if coefficients.tier_count() != config.tier_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} tiers in the coefficient table, {} in the network",
                coefficients.tier_count(),
                config.tier_count()
            )));
        }
        Ok(Self {
            config,
            coefficients,
        })
    }

    pub fn config(&self) -> &NetworkConfig<S> {
        &self.config
    }

    pub fn coefficients(&self) -> &CoefficientTable<S> {
        &self.coefficients
    }

    pub fn tiers(&self) -> usize {
        self.config.tier_count()
    }

    pub fn files(&self) -> usize {
        self.config.catalog_size
    }

    pub fn cache_sizes(&self) -> &[usize] {
        &self.config.cache_sizes
    }

    pub(crate) fn check_dims(&self, t: &CachingProbabilityMatrix<S>, files: usize) -> Result<()> {
        if t.tiers() != self.tiers() || t.files() != self.files() || files != self.files() {
            return Err(Error::DimensionMismatch(format!(
                "T is {}x{}, popularity has {files} files, network is {}x{}",
                t.tiers(),
                t.files(),
                self.tiers(),
                self.files()
            )));
        }
        Ok(())
    }
}

/// `x[m][n] = sum_l theta[l][m] T[l][n] + eta[m]`.
pub fn denominators<S: Scalar>(coef: &CoefficientTable<S>, t: &CachingProbabilityMatrix<S>) -> Vec<Vec<S>> {
    let m_count = t.tiers();
    (0..m_count)
        .map(|m| {
            (0..t.files())
                .map(|n| {
                    (0..m_count).fold(coef.eta(m), |acc, l| acc + coef.theta(l, m) * t.get(l, n))
                })
                .collect()
        })
        .collect()
}

#[inline]
fn ratio<S: Scalar>(t: S, x: S) -> S {
    if t == S::zero() {
        S::zero()
    } else {
        t / x
    }
}

/// Probability that a user requesting `file` is served by tier `tier`.
pub fn association_prob<S: Scalar>(
    t: &CachingProbabilityMatrix<S>,
    tier: usize,
    file: usize,
    cfg: &NetworkConfig<S>,
) -> Result<S> {
    if t.tiers() != cfg.tier_count() || tier >= t.tiers() || file >= t.files() {
        return Err(Error::DimensionMismatch(format!(
            "tier {tier}, file {file} out of range for a {}x{} matrix",
            t.tiers(),
            t.files()
        )));
    }
    let d = S::lit(2.0) / cfg.alpha;
    let own = cfg.densities[tier] * t.get(tier, file);
    let total = (0..t.tiers()).fold(S::zero(), |acc, l| {
        acc + cfg.densities[l] * t.get(l, file) * (cfg.powers[l] / cfg.powers[tier]).powf(d)
    });
    if total <= S::zero() {
        return Err(Error::FileNotStored { file });
    }
    Ok(own / total)
}

/// Per-tier STP components `q_j(a, T) = sum_n a_n T[j][n] / x[j][n]`.
pub fn stp_components<S: Scalar>(
    a: &PopularityVector<S>,
    t: &CachingProbabilityMatrix<S>,
    ctx: &ObjectiveContext<S>,
) -> Result<Vec<S>> {
    ctx.check_dims(t, a.len())?;
    Ok(components_unchecked(a.as_slice(), t, ctx.coefficients()))
}

pub(crate) fn components_unchecked<S: Scalar>(
    a: &[S],
    t: &CachingProbabilityMatrix<S>,
    coef: &CoefficientTable<S>,
) -> Vec<S> {
    let x = denominators(coef, t);
    (0..t.tiers())
        .map(|j| {
            (0..t.files())
                .map(|n| a[n] * ratio(t.get(j, n), x[j][n]))
                .sum()
        })
        .collect()
}

/// The STP `q(a, T)`.
pub fn stp<S: Scalar>(a: &PopularityVector<S>, t: &CachingProbabilityMatrix<S>, ctx: &ObjectiveContext<S>) -> Result<S> {
    Ok(stp_components(a, t, ctx)?.into_iter().sum())
}

pub(crate) fn stp_unchecked<S: Scalar>(a: &[S], t: &CachingProbabilityMatrix<S>, coef: &CoefficientTable<S>) -> S {
    components_unchecked(a, t, coef).into_iter().sum()
}

/// Per-file success probability given a request, `g_n(T) = sum_m T[m][n] / x[m][n]`.
pub fn file_gains<S: Scalar>(t: &CachingProbabilityMatrix<S>, coef: &CoefficientTable<S>) -> Vec<S> {
    let x = denominators(coef, t);
    (0..t.files())
        .map(|n| (0..t.tiers()).map(|m| ratio(t.get(m, n), x[m][n])).sum())
        .collect()
}

/// Exact gradient `dq/dT[m][n]`.
pub fn stp_gradient<S: Scalar>(
    a: &PopularityVector<S>,
    t: &CachingProbabilityMatrix<S>,
    ctx: &ObjectiveContext<S>,
) -> Result<Vec<Vec<S>>> {
    ctx.check_dims(t, a.len())?;
    Ok(gradient_unchecked(a.as_slice(), t, ctx.coefficients()))
}

pub(crate) fn gradient_unchecked<S: Scalar>(
    a: &[S],
    t: &CachingProbabilityMatrix<S>,
    coef: &CoefficientTable<S>,
) -> Vec<Vec<S>> {
    let m_count = t.tiers();
    let x = denominators(coef, t);
    (0..m_count)
        .map(|m| {
            (0..t.files())
                .map(|n| {
                    if a[n] == S::zero() {
                        return S::zero();
                    }
                    let cross = (0..m_count).fold(S::zero(), |acc, j| {
                        acc + coef.theta(m, j) * t.get(j, n) / (x[j][n] * x[j][n])
                    });
                    a[n] / x[m][n] - a[n] * cross
                })
                .collect()
        })
        .collect()
}

/// Dual certificate of the inner worst-case LP: multipliers of
/// `a >= lower`, `a <= upper` and `sum a = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerLpDual<S> {
    pub lambda: Vec<S>,
    pub mu: Vec<S>,
    pub nu: S,
}

/// Result of [`worst_case_stp`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase<S> {
    pub value: S,
    pub argmin: PopularityVector<S>,
    pub dual: InnerLpDual<S>,
}

/// Minimizes `sum_n a_n g_n` over `lower <= a <= upper, sum a = 1` by greedy
/// mass allocation: start at `lower` and pour the remaining mass into files
/// in ascending `g_n` order (ties by file index), each up to its upper bound.
pub fn minimize_over_box_simplex<S: Scalar>(gains: &[S], set: &UncertaintySet<S>) -> Result<WorstCase<S>> {
    let lower = set.lower();
    let upper = set.upper();
    if gains.len() != lower.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains for {} files",
            gains.len(),
            lower.len()
        )));
    }
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&i, &j| {
        gains[i]
            .partial_cmp(&gains[j])
            .expect("finite gains")
            .then(i.cmp(&j))
    });
    let mut a = lower.to_vec();
    let mut remaining = S::one() - lower.iter().copied().sum::<S>();
    // The file that receives the last share sets the marginal price.
    let mut marginal = order[0];
    for &n in &order {
        if remaining <= S::zero() {
            break;
        }
        let add = (upper[n] - lower[n]).min(remaining);
        a[n] = a[n] + add;
        remaining = remaining - add;
        marginal = n;
    }
    if remaining > S::tol(1e-12, 1.0) {
        let lower_sum: S = lower.iter().copied().sum();
        let upper_sum: S = upper.iter().copied().sum();
        return Err(Error::InfeasibleSet {
            lower_sum: lower_sum.f64(),
            upper_sum: upper_sum.f64(),
        });
    }
    let value = a.iter().zip(gains).map(|(&ai, &g)| ai * g).sum();
    let price = gains[marginal];
    let dual = InnerLpDual {
        lambda: gains.iter().map(|&g| (g - price).max(S::zero())).collect(),
        mu: gains.iter().map(|&g| (price - g).max(S::zero())).collect(),
        nu: -price,
    };
    // `a` sums to one up to rounding in the additions above.
    let total: S = a.iter().copied().sum();
    let argmin = PopularityVector::new(a.iter().map(|&v| v / total).collect())?;
    Ok(WorstCase { value, argmin, dual })
}

/// Worst-case STP `min_{a in A} q(a, T)` and a minimizing popularity vector.
pub fn worst_case_stp<S: Scalar>(
    set: &UncertaintySet<S>,
    t: &CachingProbabilityMatrix<S>,
    ctx: &ObjectiveContext<S>,
) -> Result<WorstCase<S>> {
    ctx.check_dims(t, set.len())?;
    minimize_over_box_simplex(&file_gains(t, ctx.coefficients()), set)
}
