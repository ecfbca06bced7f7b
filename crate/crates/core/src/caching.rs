//! The caching decision variable `T` (tier x file marginal storage
//! probabilities), its feasible set, and the realization of marginals as a
//! distribution over cache contents.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::netmodel::NetworkConfig;
use crate::popularity::PopularityVector;
use crate::scalar::Scalar;

/// `T[m][n]`: probability that a tier-`m` base station stores file `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CachingProbabilityMatrix<S> {
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> CachingProbabilityMatrix<S> {
    /// Wraps rows without checking feasibility (see [`validate`]).
    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let n = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("caching matrix rows must be nonempty and equal length".into()));
        }
        Ok(Self { rows })
    }

    /// `T[m][n] = K_m / N`.
    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<S>>) -> Self {
        Self { rows }
    }

    pub fn uniform(cfg: &NetworkConfig<S>) -> Self {
        let n = cfg.catalog_size;
        let rows = cfg
            .cache_sizes
            .iter()
            .map(|&k| vec![S::from_usize_lossy(k) / S::from_usize_lossy(n); n])
            .collect();
        Self { rows }
    }

    /// Each row proportional to `popularity`, projected onto the feasible set.
    pub fn popularity_proportional(cfg: &NetworkConfig<S>, popularity: &PopularityVector<S>) -> Result<Self> {
        if popularity.len() != cfg.catalog_size {
            return Err(Error::DimensionMismatch(format!(
                "popularity has {} files, network has {}",
                popularity.len(),
                cfg.catalog_size
            )));
        }
        let rows = cfg
            .cache_sizes
            .iter()
            .map(|&k| {
                let kk = S::from_usize_lossy(k);
                let scaled: Vec<S> = popularity.as_slice().iter().map(|&a| a * kk).collect();
                project_capped_simplex(&scaled, kk)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    #[inline]
    pub fn tiers(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn files(&self) -> usize {
        self.rows[0].len()
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> S {
        self.rows[m][n]
    }

    pub fn row(&self, m: usize) -> &[S] {
        &self.rows[m]
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<S>> {
        self.rows
    }

    pub fn set_row(&mut self, m: usize, row: Vec<S>) {
        assert_eq!(row.len(), self.files(), "row length");
        self.rows[m] = row;
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> S {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .fold(S::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn convert<T: Scalar>(&self) -> CachingProbabilityMatrix<T> {
        CachingProbabilityMatrix {
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|v| T::lit(v.f64())).collect())
                .collect(),
        }
    }

    /// CSV with header `file_1,...,file_N` and one row per tier, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.files()).map(|n| format!("file_{n}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_sig12(v.f64())).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::DimensionMismatch("empty caching CSV".into()))?;
        let n = header.split(',').count();
        for (i, name) in header.split(',').enumerate() {
            if name.trim() != format!("file_{}", i + 1) {
                return Err(Error::DimensionMismatch(format!("unexpected header cell {name:?}")));
            }
        }
        let mut rows = Vec::new();
        for (m, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|cell| {
                    cell.trim()
                        .parse::<f64>()
                        .map(S::lit)
                        .map_err(|_| Error::DimensionMismatch(format!("tier {m}: bad number {cell:?}")))
                })
                .collect::<Result<Vec<S>>>()?;
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "tier {m} has {} entries, header has {n}",
                    row.len()
                )));
            }
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

/// Formats with 12 significant digits, plain notation where reasonable.
pub fn format_sig12(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let mut s = format!("{v:.decimals$}");
        if s.contains('.') {
            let trimmed = s.trim_end_matches('0').trim_end_matches('.').len();
            s.truncate(trimmed);
        }
        s
    } else {
        let mut s = String::new();
        write!(s, "{v:.11e}").expect("write to string");
        let (mantissa, exponent) = s.split_once('e').expect("exponent");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    }
}

/// Checks the box constraint and the per-tier budget `sum_n T[m][n] = K_m`.
pub fn validate<S: Scalar>(t: &CachingProbabilityMatrix<S>, cache_sizes: &[usize]) -> Result<()> {
    if t.tiers() != cache_sizes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} tiers in T, {} cache sizes",
            t.tiers(),
            cache_sizes.len()
        )));
    }
    let box_tol = S::tol(1e-12, 1.0);
    for (m, row) in t.rows().iter().enumerate() {
        for (n, &v) in row.iter().enumerate() {
            if !(v >= -box_tol && v <= S::one() + box_tol) {
                return Err(Error::BoxViolation {
                    tier: m,
                    file: n,
                    value: v.f64(),
                });
            }
        }
    }
    for (m, row) in t.rows().iter().enumerate() {
        let k = cache_sizes[m] as f64;
        let sum: S = row.iter().copied().sum();
        if (sum - S::lit(k)).abs() > S::tol(1e-9, k) {
            return Err(Error::RowSumViolation {
                tier: m,
                sum: sum.f64(),
                expected: k,
            });
        }
    }
    Ok(())
}

/// Euclidean projection of `v` onto `{0 <= x <= 1, sum x = k}`.
///
/// The projection is `clamp(v_n - s, 0, 1)` for the shift `s` that meets the
/// budget; `s` is found by bisection.
pub fn project_capped_simplex<S: Scalar>(v: &[S], k: S) -> Result<Vec<S>> {
    let n = S::from_usize_lossy(v.len());
    if !(k >= S::zero() && k <= n) {
        return Err(Error::InfeasibleMarginals(format!("budget {k} outside [0, {n}]")));
    }
    let sum_at = |s: S| -> S { v.iter().map(|&x| (x - s).max(S::zero()).min(S::one())).sum() };
    let (min, max) = v
        .iter()
        .fold((S::infinity(), S::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    // sum_at(min - 1) = N >= k and sum_at(max) = 0 <= k.
    let (mut lo, mut hi) = (min - S::one(), max);
    for _ in 0..200 {
        let mid = (lo + hi) * S::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if sum_at(mid) > k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = (lo + hi) * S::lit(0.5);
    let mut x: Vec<S> = v.iter().map(|&x| (x - s).max(S::zero()).min(S::one())).collect();
    // Absorb the bisection residual in the free coordinates.
    let residual = k - x.iter().copied().sum::<S>();
    if residual != S::zero() {
        let free: Vec<usize> = (0..x.len())
            .filter(|&i| x[i] > S::zero() && x[i] < S::one())
            .collect();
        if !free.is_empty() {
            let share = residual / S::from_usize_lossy(free.len());
            for i in free {
                x[i] = (x[i] + share).max(S::zero()).min(S::one());
            }
        }
    }
    Ok(x)
}

/// Distribution over cache contents for one tier: each entry is a set of
/// distinct file indices (ascending) and its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationDistribution<S> {
    cache_size: usize,
    entries: Vec<(Vec<usize>, S)>,
    cumulative: Vec<f64>,
}

impl<S: Scalar> CombinationDistribution<S> {
    pub fn new(cache_size: usize, entries: Vec<(Vec<usize>, S)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InfeasibleMarginals("empty combination distribution".into()));
        }
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(entries.len());
        for (files, p) in &entries {
            if files.len() != cache_size {
                return Err(Error::InfeasibleMarginals(format!(
                    "combination {files:?} does not hold {cache_size} files"
                )));
            }
            if !(*p >= S::zero()) {
                return Err(Error::InfeasibleMarginals(format!("negative probability {p}")));
            }
            acc += p.f64();
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > 1e-9 {
            return Err(Error::InfeasibleMarginals(format!("probabilities sum to {acc}")));
        }
        Ok(Self {
            cache_size,
            entries,
            cumulative,
        })
    }

    pub fn cache_size(&self) -> usize {
        self.cache_size
    }

    pub fn entries(&self) -> &[(Vec<usize>, S)] {
        &self.entries
    }

    pub fn support(&self) -> usize {
        self.entries.len()
    }

    /// Per-file inclusion probabilities over `n_files` files.
    pub fn marginals(&self, n_files: usize) -> Vec<S> {
        let mut t = vec![S::zero(); n_files];
        for (files, p) in &self.entries {
            for &f in files {
                t[f] = t[f] + *p;
            }
        }
        t
    }

    /// Draws one cache content.
    pub fn sample_cache<R: Rng + ?Sized>(&self, rng: &mut R) -> &[usize] {
        let total = *self.cumulative.last().expect("nonempty");
        let u: f64 = rng.random::<f64>() * total;
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.entries.len() - 1);
        &self.entries[i].0
    }

    pub fn contains_file(files: &[usize], file: usize) -> bool {
        files.binary_search(&file).is_ok()
    }
}

/// Interval construction: lay the segments `T_1, ..., T_N` end to end over
/// `K` unit columns; every vertical cut through the columns picks `K`
/// distinct files, and the cut positions between segment boundaries give
/// the combination probabilities.
pub fn to_combinations<S: Scalar>(row: &[S], cache_size: usize) -> Result<CombinationDistribution<S>> {
    let k = cache_size as f64;
    let tol: f64 = 1e-9;
    let mut sum = 0.0;
    for (n, v) in row.iter().enumerate() {
        let v = v.f64();
        if !(v >= -1e-12 && v <= 1.0 + 1e-12) {
            return Err(Error::InfeasibleMarginals(format!("file {n}: marginal {v} outside [0, 1]")));
        }
        sum += v;
    }
    if cache_size == 0 || cache_size > row.len() || (sum - k).abs() > tol.max(1e-12 * k) {
        return Err(Error::InfeasibleMarginals(format!(
            "marginals sum to {sum}, cache size is {cache_size}"
        )));
    }

    // Rescale so the lengths sum to K; saturated entries stay at 1 so no
    // segment ever covers more than one column.
    let mut len: Vec<f64> = row.iter().map(|v| v.f64().clamp(0.0, 1.0)).collect();
    for _ in 0..row.len() {
        let (full, rest): (Vec<f64>, Vec<f64>) = len.iter().partition(|&&v| v >= 1.0);
        let rest_sum: f64 = rest.iter().sum();
        if rest_sum <= 0.0 {
            break;
        }
        let scale = (k - full.len() as f64) / rest_sum;
        let mut saturated = false;
        for v in len.iter_mut().filter(|v| **v < 1.0) {
            *v *= scale;
            if *v >= 1.0 {
                *v = 1.0;
                saturated = true;
            }
        }
        if !saturated {
            break;
        }
    }
    let mut ends = Vec::with_capacity(row.len());
    let mut acc = 0.0;
    for v in &len {
        acc += v;
        ends.push(acc);
    }
    *ends.last_mut().expect("nonempty row") = k;
    // Slivers below this width are rounding artifacts of the end points.
    let sliver = 64.0 * f64::EPSILON * k.max(1.0);

    let mut cuts: Vec<f64> = std::iter::once(0.0)
        .chain(ends.iter().map(|&e| e - e.floor()))
        .chain(std::iter::once(1.0))
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cut"));
    cuts.dedup_by(|a, b| (*a - *b).abs() <= sliver);

    let mut entries = Vec::new();
    for w in cuts.windows(2) {
        let width = w[1] - w[0];
        if width <= sliver {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let mut files: Vec<usize> = (0..cache_size)
            .map(|col| {
                let pos = mid + col as f64;
                ends.partition_point(|&e| e <= pos).min(row.len() - 1)
            })
            .collect();
        files.sort_unstable();
        files.dedup();
        if files.len() != cache_size {
            return Err(Error::InfeasibleMarginals("a cut selected a file twice".into()));
        }
        entries.push((files, S::lit(width)));
    }
    CombinationDistribution::new(cache_size, entries)
}

/// Combination distributions for every tier of `t`.
pub fn tier_combinations<S: Scalar>(
    t: &CachingProbabilityMatrix<S>,
    cache_sizes: &[usize],
) -> Result<Vec<CombinationDistribution<S>>> {
    validate(t, cache_sizes)?;
    t.rows()
        .iter()
        .zip(cache_sizes)
        .map(|(row, &k)| to_combinations(row, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(k: Vec<usize>, n: usize) -> NetworkConfig<f64> {
        let m = k.len();
        NetworkConfig::new(3.0, vec![1.0; m], vec![1.0; m], vec![1.0; m], k, n).unwrap()
    }

    #[test]
    fn uniform_is_valid() {
        let c = cfg(vec![3, 2], 7);
        validate(&CachingProbabilityMatrix::uniform(&c), &c.cache_sizes).unwrap();
    }

    #[test]
    fn detects_violations() {
        let t = CachingProbabilityMatrix::from_rows(vec![vec![1.0, 0.75, 0.75]]).unwrap();
        assert!(matches!(validate(&t, &[2]), Err(Error::RowSumViolation { tier: 0, .. })));
        let t = CachingProbabilityMatrix::from_rows(vec![vec![1.2, 0.4, 0.4]]).unwrap();
        assert!(matches!(validate(&t, &[2]), Err(Error::BoxViolation { tier: 0, file: 0, .. })));
        let t = CachingProbabilityMatrix::from_rows(vec![vec![1.0, 1.0, -0.0]]).unwrap();
        validate(&t, &[2]).unwrap();
    }

    #[test]
    fn three_file_example() {
        let d = to_combinations(&[1.0, 0.5, 0.5], 2).unwrap();
        assert_eq!(d.entries(), &[(vec![0, 1], 0.5), (vec![0, 2], 0.5)]);
    }

    #[test]
    fn deterministic_row_is_one_combination() {
        let d = to_combinations(&[0.0, 1.0, 1.0, 0.0, 1.0], 3).unwrap();
        assert_eq!(d.entries(), &[(vec![1, 2, 4], 1.0)]);
    }

    #[test]
    fn rejects_bad_marginals() {
        assert!(to_combinations(&[1.0, 0.5, 0.4], 2).is_err());
        assert!(to_combinations(&[1.2, 0.4, 0.4], 2).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let d = to_combinations(&[1.0, 0.5, 0.5], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 100_000;
        let mut first = 0usize;
        for _ in 0..draws {
            let c = d.sample_cache(&mut rng);
            assert!(CombinationDistribution::<f64>::contains_file(c, 0));
            if c == [0, 1] {
                first += 1;
            }
        }
        let freq = first as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.005, "{freq}");
        let single = to_combinations(&[0.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(single.sample_cache(&mut rng), &[1, 2]);
    }

    #[test]
    fn saturated_entry_with_short_row_sum() {
        // Rescaling to K used to push the saturated entry past 1.
        let row: [f64; 4] = [1.0, 0.3, 0.3, 0.4 - 5e-10];
        let d = to_combinations(&row, 2).unwrap();
        for (got, want) in d.marginals(4).iter().zip(&row) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = CachingProbabilityMatrix::from_rows(vec![vec![0.123456789012345, 1.0, 0.0], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]).unwrap();
        let text = t.to_csv();
        assert!(text.starts_with("file_1,file_2,file_3\n"));
        assert!(text.contains("0.123456789012,1,0\n"));
        let back = CachingProbabilityMatrix::<f64>::from_csv(&text).unwrap();
        assert!(back.max_abs_diff(&t) < 1e-12);
    }

    #[test]
    fn sig12_formatting() {
        assert_eq!(format_sig12(0.0), "0");
        assert_eq!(format_sig12(1.0), "1");
        assert_eq!(format_sig12(0.5602), "0.5602");
        assert_eq!(format_sig12(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_sig12(-12.5), "-12.5");
        assert_eq!(format_sig12(1.5e-9), "1.5e-9");
        assert_eq!(format_sig12(-2e15), "-2e15");
        assert_eq!(format_sig12(1.0 / 3.0 * 1e-7), "3.33333333333e-8");
    }

    #[test]
    fn projection_is_feasible() {
        let x = project_capped_simplex(&[3.0, -1.0, 0.2, 0.7], 2.0).unwrap();
        assert!((x.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(x.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(x[0], 1.0);
        assert_eq!(x[1], 0.0);
    }
}
