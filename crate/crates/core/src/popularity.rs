//! File popularity: known distributions, box-simplex uncertainty sets, and the
//! per-slot request stream observed when the distribution is unknown.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A probability distribution over the `N` files of the catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityVector<S> {
    values: Vec<S>,
}

impl<S: Scalar> PopularityVector<S> {
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidPopularity("empty vector".into()));
        }
        for (n, &v) in values.iter().enumerate() {
            if !(v >= S::zero() && v <= S::one()) {
                return Err(Error::InvalidPopularity(format!("entry {n} = {v} is outside [0, 1]")));
            }
        }
        let total: S = values.iter().copied().sum();
        let tol = S::tol(1e-12, values.len() as f64);
        if (total - S::one()).abs() > tol {
            return Err(Error::InvalidPopularity(format!("entries sum to {total}, expected 1")));
        }
        Ok(Self { values })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[S]) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= S::zero()) || !w.is_finite()) {
            return Err(Error::InvalidPopularity("weights must be finite and nonnegative".into()));
        }
        let total: S = weights.iter().copied().sum();
        if !(total > S::zero()) {
            return Err(Error::InvalidPopularity("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|&w| w / total).collect())
    }

    /// Point mass on `file`.
    pub fn point_mass(len: usize, file: usize) -> Result<Self> {
        if file >= len {
            return Err(Error::InvalidPopularity(format!("file {file} out of range for {len} files")));
        }
        let mut values = vec![S::zero(); len];
        values[file] = S::one();
        Self::new(values)
    }

    pub fn uniform(len: usize) -> Result<Self> {
        Self::from_weights(&vec![S::one(); len])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, n: usize) -> S {
        self.values[n]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> S {
        self.values
            .iter()
            .filter(|&&v| v > S::zero())
            .map(|&v| -v * v.ln())
            .sum()
    }

    pub fn convert<T: Scalar>(&self) -> PopularityVector<T> {
        PopularityVector {
            values: self.values.iter().map(|v| T::lit(v.f64())).collect(),
        }
    }
}

/// Zipf popularity `a_n = n^-gamma / sum_k k^-gamma` over files `1..=n_files`.
pub fn zipf<S: Scalar>(n_files: usize, gamma: S) -> Result<PopularityVector<S>> {
    if n_files == 0 {
        return Err(Error::InvalidPopularity("catalog must hold at least one file".into()));
    }
    if !(gamma >= S::zero()) {
        return Err(Error::InvalidPopularity(format!("Zipf exponent {gamma} must be nonnegative")));
    }
    let weights: Vec<S> = (1..=n_files)
        .map(|n| S::from_usize_lossy(n).powf(-gamma))
        .collect();
    PopularityVector::from_weights(&weights)
}

/// Box-constrained simplex of popularity vectors around an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySet<S> {
    estimate: PopularityVector<S>,
    error_bounds: Vec<S>,
    lower: Vec<S>,
    upper: Vec<S>,
}

impl<S: Scalar> UncertaintySet<S> {
    /// `lower_n = max(est_n - eps_n, 0)`, `upper_n = min(est_n + eps_n, 1)`.
    pub fn from_estimate(estimate: PopularityVector<S>, error_bounds: Vec<S>) -> Result<Self> {
        if error_bounds.len() != estimate.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} error bounds for {} files",
                error_bounds.len(),
                estimate.len()
            )));
        }
        if error_bounds.iter().any(|e| !(*e >= S::zero())) {
            return Err(Error::Domain("error bounds must be nonnegative".into()));
        }
        let lower: Vec<S> = estimate
            .as_slice()
            .iter()
            .zip(&error_bounds)
            .map(|(&a, &e)| (a - e).max(S::zero()))
            .collect();
        let upper: Vec<S> = estimate
            .as_slice()
            .iter()
            .zip(&error_bounds)
            .map(|(&a, &e)| (a + e).min(S::one()))
            .collect();
        let set = Self {
            estimate,
            error_bounds,
            lower,
            upper,
        };
        set.check_nonempty()?;
        Ok(set)
    }

    /// Relative bounds `eps_n = eps * est_n`.
    pub fn relative(estimate: PopularityVector<S>, eps: S) -> Result<Self> {
        let bounds = estimate.as_slice().iter().map(|&a| eps * a).collect();
        Self::from_estimate(estimate, bounds)
    }

    /// Builds a set from explicit bounds. The reported estimate is the lower
    /// bound plus an equal share of each file's slack.
    pub fn from_bounds(lower: Vec<S>, upper: Vec<S>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::DimensionMismatch("lower and upper bounds disagree in length".into()));
        }
        for (n, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo >= S::zero() && lo <= hi && hi <= S::one()) {
                return Err(Error::Domain(format!("file {n}: bounds [{lo}, {hi}] are not nested in [0, 1]")));
            }
        }
        let lower_sum: S = lower.iter().copied().sum();
        let upper_sum: S = upper.iter().copied().sum();
        if lower_sum > S::one() || upper_sum < S::one() {
            return Err(Error::InfeasibleSet {
                lower_sum: lower_sum.f64(),
                upper_sum: upper_sum.f64(),
            });
        }
        let slack = upper_sum - lower_sum;
        let share = if slack > S::zero() {
            (S::one() - lower_sum) / slack
        } else {
            S::zero()
        };
        let mid: Vec<S> = lower
            .iter()
            .zip(&upper)
            .map(|(&lo, &hi)| (lo + share * (hi - lo)).min(hi))
            .collect();
        let total: S = mid.iter().copied().sum();
        let estimate = PopularityVector::new(mid.iter().map(|&v| v / total).collect())?;
        let error_bounds = estimate
            .as_slice()
            .iter()
            .zip(lower.iter().zip(&upper))
            .map(|(&a, (&lo, &hi))| (a - lo).max(hi - a))
            .collect();
        Ok(Self {
            estimate,
            error_bounds,
            lower,
            upper,
        })
    }

    pub(crate) fn check_nonempty(&self) -> Result<()> {
        let lower_sum: S = self.lower.iter().copied().sum();
        let upper_sum: S = self.upper.iter().copied().sum();
        let tol = S::tol(1e-12, self.lower.len() as f64);
        if lower_sum > S::one() + tol || upper_sum < S::one() - tol {
            return Err(Error::InfeasibleSet {
                lower_sum: lower_sum.f64(),
                upper_sum: upper_sum.f64(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn estimate(&self) -> &PopularityVector<S> {
        &self.estimate
    }

    pub fn error_bounds(&self) -> &[S] {
        &self.error_bounds
    }

    pub fn lower(&self) -> &[S] {
        &self.lower
    }

    pub fn upper(&self) -> &[S] {
        &self.upper
    }

    pub fn contains(&self, a: &PopularityVector<S>) -> bool {
        let tol = S::tol(1e-12, 1.0);
        a.len() == self.len()
            && a
                .as_slice()
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo - tol && v <= hi + tol)
    }
}

/// Generator of per-slot requests from a fixed set of `observers` users.
#[derive(Debug, Clone)]
pub struct RequestStreamConfig<S> {
    popularity: PopularityVector<S>,
    observers: usize,
    request_prob: f64,
    seed: u64,
    cdf: Vec<f64>,
}

impl<S: Scalar> RequestStreamConfig<S> {
    pub fn new(
        popularity: PopularityVector<S>,
        observers: usize,
        request_prob: f64,
        seed: u64,
    ) -> Result<Self> {
        if observers == 0 {
            return Err(Error::Domain("observation set must be nonempty".into()));
        }
        if !(request_prob > 0.0 && request_prob <= 1.0) {
            return Err(Error::Domain(format!("request probability {request_prob} must lie in (0, 1]")));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = popularity
            .as_slice()
            .iter()
            .map(|p| {
                acc += p.f64();
                acc
            })
            .collect();
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        *cdf.last_mut().expect("nonempty popularity") = 1.0;
        Ok(Self {
            popularity,
            observers,
            request_prob,
            seed,
            cdf,
        })
    }

    pub fn popularity(&self) -> &PopularityVector<S> {
        &self.popularity
    }

    pub fn observers(&self) -> usize {
        self.observers
    }

    pub fn request_prob(&self) -> f64 {
        self.request_prob
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same popularity and request model with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Same popularity and seed with a different observation-set size.
    pub fn with_observers(&self, observers: usize) -> Result<Self> {
        Self::new(self.popularity.clone(), observers, self.request_prob, self.seed)
    }

    /// Requests of slot `slot`. Pure in `(seed, slot)`: observer `s` of slot `t`
    /// always consumes words `2s` and `2s + 1` of the ChaCha stream `t`.
    pub fn sample_requests(&self, slot: u64) -> RequestBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(slot);
        let mut counts = vec![0u64; self.cdf.len()];
        let mut active = 0u64;
        for _ in 0..self.observers {
            let gate = unit_f64(rng.next_u64());
            let pick = unit_f64(rng.next_u64());
            if gate < self.request_prob {
                let n = self.cdf.partition_point(|&c| c <= pick).min(self.cdf.len() - 1);
                counts[n] += 1;
                active += 1;
            }
        }
        RequestBatch {
            slot,
            counts,
            active,
        }
    }
}

#[inline]
pub(crate) fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One slot of observed requests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestBatch {
    pub slot: u64,
    pub counts: Vec<u64>,
    pub active: u64,
}

impl RequestBatch {
    /// Empirical request shares `xi_n = c_n / active`, or `None` for an empty slot.
    pub fn shares<S: Scalar>(&self) -> Option<PopularityVector<S>> {
        if self.active == 0 {
            return None;
        }
        let total = S::lit(self.active as f64);
        let values = self.counts.iter().map(|&c| S::lit(c as f64) / total).collect();
        Some(PopularityVector { values })
    }
}

/// Pools request counts over several slots: `a_n = sum_t c_n / sum_t active`.
pub fn empirical_popularity<S: Scalar>(batches: &[RequestBatch]) -> Result<PopularityVector<S>> {
    let first = batches.first().ok_or(Error::NoObservations)?;
    let mut counts = vec![0u64; first.counts.len()];
    let mut active = 0u64;
    for b in batches {
        if b.counts.len() != counts.len() {
            return Err(Error::DimensionMismatch("batches disagree in catalog size".into()));
        }
        counts.iter_mut().zip(&b.counts).for_each(|(acc, c)| *acc += c);
        active += b.active;
    }
    if active == 0 {
        return Err(Error::NoObservations);
    }
    RequestBatch {
        slot: first.slot,
        counts,
        active,
    }
    .shares()
    .ok_or(Error::NoObservations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zipf_small_cases() {
        let u = zipf::<f64>(3, 0.0).unwrap();
        for n in 0..3 {
            assert!((u.get(n) - 1.0 / 3.0).abs() < 1e-15);
        }
        let z = zipf::<f64>(3, 1.0).unwrap();
        let want = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
        for n in 0..3 {
            assert!((z.get(n) - want[n]).abs() < 1e-15);
        }
    }

    #[test]
    fn zipf_reference_head() {
        // Direct 30-digit summation of n^-0.55 over 1..=500.
        let z = zipf::<f64>(500, 0.55).unwrap();
        assert!((z.get(0) - 0.028_771_739_045_653_54).abs() < 1e-14);
        assert!(z.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn relative_bounds() {
        let est = PopularityVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let set = UncertaintySet::<f64>::relative(est, 0.25).unwrap();
        let lo = [0.375, 0.225, 0.15];
        let hi = [0.625, 0.375, 0.25];
        for n in 0..3 {
            assert!((set.lower()[n] - lo[n]).abs() < 1e-15);
            assert!((set.upper()[n] - hi[n]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_error_collapses_to_estimate() {
        let est = zipf::<f64>(5, 0.8).unwrap();
        let set = UncertaintySet::from_estimate(est.clone(), vec![0.0; 5]).unwrap();
        assert_eq!(set.lower(), est.as_slice());
        assert_eq!(set.upper(), est.as_slice());
        assert!(set.contains(&est));
    }

    #[test]
    fn bounds_are_clipped() {
        let est = PopularityVector::new(vec![0.9, 0.1]).unwrap();
        let set = UncertaintySet::<f64>::from_estimate(est, vec![0.2, 0.2]).unwrap();
        assert_eq!(set.upper()[0], 1.0);
        assert!((set.lower()[0] - 0.7).abs() < 1e-15);
        assert_eq!(set.lower()[1], 0.0);
    }

    #[test]
    fn explicit_bounds_reject_empty_sets() {
        assert!(matches!(
            UncertaintySet::<f64>::from_bounds(vec![0.6, 0.5], vec![0.7, 0.6]),
            Err(Error::InfeasibleSet { .. })
        ));
        assert!(matches!(
            UncertaintySet::<f64>::from_bounds(vec![0.1, 0.1], vec![0.3, 0.3]),
            Err(Error::InfeasibleSet { .. })
        ));
        let set = UncertaintySet::<f64>::from_bounds(vec![0.1, 0.2], vec![0.6, 0.8]).unwrap();
        assert!(set.contains(set.estimate()));
    }

    #[test]
    fn single_file_stream_is_degenerate() {
        let stream = RequestStreamConfig::new(PopularityVector::<f64>::point_mass(1, 0).unwrap(), 50, 1.0, 3).unwrap();
        for t in 1..5 {
            let b = stream.sample_requests(t);
            assert_eq!(b.active, 50);
            assert_eq!(b.shares::<f64>().unwrap().as_slice(), &[1.0]);
        }
    }

    #[test]
    fn batches_are_reproducible() {
        let stream = RequestStreamConfig::new(zipf::<f64>(20, 0.7).unwrap(), 300, 0.9, 42).unwrap();
        assert_eq!(stream.sample_requests(7), stream.sample_requests(7));
        assert_ne!(stream.sample_requests(7), stream.sample_requests(8));
        assert_ne!(stream.sample_requests(7), stream.with_seed(43).sample_requests(7));
    }

    #[test]
    fn large_batch_concentrates() {
        let a = zipf::<f64>(3, 1.0).unwrap();
        let u = 1_000_000;
        let stream = RequestStreamConfig::new(a.clone(), u, 1.0, 11).unwrap();
        let xi = stream.sample_requests(1).shares::<f64>().unwrap();
        for n in 0..3 {
            let se = (a.get(n) * (1.0 - a.get(n)) / u as f64).sqrt();
            assert!((xi.get(n) - a.get(n)).abs() <= 3.0 * se, "file {n}");
        }
    }

    #[test]
    fn empty_slot_has_no_shares() {
        let b = RequestBatch {
            slot: 1,
            counts: vec![0, 0],
            active: 0,
        };
        assert!(b.shares::<f64>().is_none());
        assert_eq!(empirical_popularity::<f64>(&[b]), Err(Error::NoObservations));
        assert_eq!(empirical_popularity::<f64>(&[]), Err(Error::NoObservations));
    }

    #[test]
    fn pooled_counts() {
        let one = RequestBatch {
            slot: 1,
            counts: vec![2, 1, 1],
            active: 4,
        };
        assert_eq!(empirical_popularity::<f64>(&[one]).unwrap().as_slice(), &[0.5, 0.25, 0.25]);
        let a = RequestBatch {
            slot: 1,
            counts: vec![1, 0],
            active: 1,
        };
        let b = RequestBatch {
            slot: 2,
            counts: vec![0, 1],
            active: 1,
        };
        assert_eq!(empirical_popularity::<f64>(&[a, b]).unwrap().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn pooled_estimate_converges() {
        let a = zipf::<f64>(10, 0.55).unwrap();
        let stream = RequestStreamConfig::new(a.clone(), 200, 0.9, 5).unwrap();
        let batches: Vec<_> = (1..=500).map(|t| stream.sample_requests(t)).collect();
        let total: u64 = batches.iter().map(|b| b.active).sum();
        let est = empirical_popularity::<f64>(&batches).unwrap();
        for n in 0..10 {
            let se = (a.get(n) * (1.0 - a.get(n)) / total as f64).sqrt();
            assert!((est.get(n) - a.get(n)).abs() <= 3.0 * se, "file {n}");
        }
    }
}
