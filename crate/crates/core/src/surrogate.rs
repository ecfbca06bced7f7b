//! Per-tier concave surrogate shared by the deterministic and the stochastic
//! parallel SCA updates, and its exact maximizer over the capped simplex.
//!
//! For one tier the surrogate is, up to a constant,
//!
//! ```text
//! h(T) = sum_n w_n T_n / (theta T_n + c_n) - sum_n e_n T_n
//! ```
//!
//! maximized subject to `0 <= T_n <= 1` and `sum_n T_n = K`. Stationarity with
//! multiplier `nu` gives
//!
//! ```text
//! T_n(nu) = [ (sqrt(w_n c_n / (nu + e_n)) - c_n) / theta ]_0^1
//! ```
//!
//! and `nu` is located by bisection on the nonincreasing map `nu -> sum_n T_n(nu)`.

use crate::caching::CachingProbabilityMatrix;
use crate::error::{Error, Result};
use crate::netmodel::CoefficientTable;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TierSurrogate<S> {
    pub tier: usize,
    /// `theta[m][m]`.
    pub theta_own: S,
    /// `c_n`: the tier's denominator with its own caching removed.
    pub offset: Vec<S>,
    /// `w_n`: popularity weight of the kept fractional term.
    pub weight: Vec<S>,
    /// `e_n`: slope of the linearized part.
    pub slope: Vec<S>,
}

/// Slope of the linearized cross-tier terms,
/// `sum_{j != m} a_n theta[m][j] T[j][n] / x[j][n]^2`.
pub(crate) fn cross_tier_slope<S: Scalar>(
    a: &[S],
    prev: &CachingProbabilityMatrix<S>,
    denoms: &[Vec<S>],
    coef: &CoefficientTable<S>,
    m: usize,
) -> Vec<S> {
    (0..prev.files())
        .map(|n| {
            (0..prev.tiers())
                .filter(|&j| j != m)
                .fold(S::zero(), |acc, j| {
                    acc + a[n] * coef.theta(m, j) * prev.get(j, n) / (denoms[j][n] * denoms[j][n])
                })
        })
        .collect()
}

/// `c_n = sum_{l != m} theta[l][m] T[l][n] + eta[m]`.
pub(crate) fn own_offset<S: Scalar>(
    prev: &CachingProbabilityMatrix<S>,
    coef: &CoefficientTable<S>,
    m: usize,
) -> Vec<S> {
    (0..prev.files())
        .map(|n| {
            (0..prev.tiers())
                .filter(|&l| l != m)
                .fold(coef.eta(m), |acc, l| acc + coef.theta(l, m) * prev.get(l, n))
        })
        .collect()
}

impl<S: Scalar> TierSurrogate<S> {
    /// Best response of one coordinate at multiplier `nu`. Zero-weight
    /// coordinates are linear, so they sit at a bound except exactly at
    /// `nu = -e_n`, where this returns 0.
    #[inline]
    pub fn response(&self, n: usize, nu: S) -> S {
        let den = nu + self.slope[n];
        let w = self.weight[n];
        if w == S::zero() {
            return if den < S::zero() { S::one() } else { S::zero() };
        }
        if den <= S::zero() {
            return S::one();
        }
        let c = self.offset[n];
        let raw = ((w * c / den).sqrt() - c) / self.theta_own;
        raw.max(S::zero()).min(S::one())
    }

    pub fn total_response(&self, nu: S) -> S {
        (0..self.offset.len()).map(|n| self.response(n, nu)).sum()
    }

    /// Surrogate value without the constant.
    pub fn objective(&self, row: &[S]) -> S {
        row.iter()
            .enumerate()
            .map(|(n, &t)| {
                let frac = if self.weight[n] == S::zero() {
                    S::zero()
                } else {
                    self.weight[n] * t / (self.theta_own * t + self.offset[n])
                };
                frac - self.slope[n] * t
            })
            .sum()
    }

    pub fn gradient(&self, row: &[S]) -> Vec<S> {
        row.iter()
            .enumerate()
            .map(|(n, &t)| {
                let den = self.theta_own * t + self.offset[n];
                self.weight[n] * self.offset[n] / (den * den) - self.slope[n]
            })
            .collect()
    }

    /// Diagonal of the Hessian; off-diagonal entries vanish.
    pub fn hessian_diag(&self, row: &[S]) -> Vec<S> {
        row.iter()
            .enumerate()
            .map(|(n, &t)| {
                let den = self.theta_own * t + self.offset[n];
                -S::lit(2.0) * self.weight[n] * self.offset[n] * self.theta_own / (den * den * den)
            })
            .collect()
    }

    /// Exact maximizer over `{0 <= T <= 1, sum T = budget}` and its multiplier.
    pub fn maximize(&self, budget: usize) -> Result<(Vec<S>, S)> {
        let n_files = self.offset.len();
        if budget > n_files {
            return Err(Error::BracketFailure { tier: self.tier });
        }
        if !(self.theta_own > S::zero()) {
            return Err(Error::Domain(format!(
                "tier {}: own-tier coefficient {} must be positive",
                self.tier, self.theta_own
            )));
        }
        let k = S::from_usize_lossy(budget);
        let one = S::one();

        // At `lo` every coordinate is saturated at 1, at `hi` every coordinate is 0.
        let mut lo = S::infinity();
        let mut hi = S::neg_infinity();
        for n in 0..n_files {
            let (w, c, e) = (self.weight[n], self.offset[n], self.slope[n]);
            lo = lo.min(-e);
            hi = hi.max(-e);
            if w > S::zero() {
                let full = self.theta_own + c;
                lo = lo.min(w * c / (full * full) - e);
                if c > S::zero() {
                    hi = hi.max(w / c - e);
                }
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::BracketFailure { tier: self.tier });
        }
        let pad = one.max(lo.abs()).max(hi.abs()) * S::lit(1e-3);
        lo = lo - pad;
        hi = hi + pad;
        let tol = S::tol(1e-12, k.f64());
        if self.total_response(lo) < k - tol || self.total_response(hi) > k + tol {
            return Err(Error::BracketFailure { tier: self.tier });
        }

        for _ in 0..400 {
            let mid = (lo + hi) * S::lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.total_response(mid) > k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let nu = (lo + hi) * S::lit(0.5);

        // Linear coordinates whose switching point lies inside the final
        // bracket absorb the remaining budget, in file order.
        let mut row = Vec::with_capacity(n_files);
        let mut tied = Vec::new();
        for n in 0..n_files {
            let switch = -self.slope[n];
            if self.weight[n] == S::zero() && switch >= lo && switch <= hi {
                tied.push(n);
                row.push(S::zero());
            } else {
                row.push(self.response(n, nu));
            }
        }
        let mut remaining = k - row.iter().copied().sum::<S>();
        if !tied.is_empty() {
            for &n in &tied {
                let add = remaining.max(S::zero()).min(one);
                row[n] = add;
                remaining = remaining - add;
            }
            let nu = tied.first().map(|&n| -self.slope[n]).unwrap_or(nu);
            return Ok((row, nu));
        }
        if remaining != S::zero() {
            let free: Vec<usize> = (0..n_files)
                .filter(|&n| row[n] > S::zero() && row[n] < one)
                .collect();
            if !free.is_empty() {
                let share = remaining / S::from_usize_lossy(free.len());
                for n in free {
                    row[n] = (row[n] + share).max(S::zero()).min(one);
                }
            }
        }
        Ok((row, nu))
    }
}
