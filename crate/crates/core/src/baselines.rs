//! Reference placements: cache the most popular files, or draw files i.i.d.
//! by popularity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::caching::CachingProbabilityMatrix;
use crate::error::{Error, Result};
use crate::netmodel::NetworkConfig;
use crate::popularity::PopularityVector;
use crate::scalar::Scalar;

/// Every tier caches its `K_m` most popular files (ties by file index).
pub fn most_popular<S: Scalar>(pop: &PopularityVector<S>, cfg: &NetworkConfig<S>) -> Result<CachingProbabilityMatrix<S>> {
    check(pop, cfg)?;
    let a = pop.as_slice();
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].partial_cmp(&a[i]).expect("finite popularity").then(i.cmp(&j)));
    let rows = cfg
        .cache_sizes
        .iter()
        .map(|&k| {
            let mut row = vec![S::zero(); a.len()];
            for &n in &order[..k] {
                row[n] = S::one();
            }
            row
        })
        .collect();
    CachingProbabilityMatrix::from_rows(rows)
}

/// Inclusion frequencies of caches built by `K_m` successive
/// popularity-weighted draws without replacement, estimated from `samples`
/// placements per tier. Zero-popularity files are drawn uniformly once the
/// positive ones run out.
pub fn iid_popularity<S: Scalar>(
    pop: &PopularityVector<S>,
    cfg: &NetworkConfig<S>,
    samples: usize,
    seed: u64,
) -> Result<CachingProbabilityMatrix<S>> {
    check(pop, cfg)?;
    if samples == 0 {
        return Err(Error::Domain("need at least one sampled placement".into()));
    }
    let weights: Vec<f64> = pop.as_slice().iter().map(|v| v.f64()).collect();
    let rows: Vec<Vec<S>> = cfg
        .cache_sizes
        .par_iter()
        .enumerate()
        .map(|(m, &k)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            let mut counts = vec![0u64; weights.len()];
            let mut keys = vec![(0.0f64, 0.0f64, 0usize); weights.len()];
            for _ in 0..samples {
                draw_without_replacement(&weights, k, &mut rng, &mut keys);
                for &(_, _, n) in &keys[..k] {
                    counts[n] += 1;
                }
            }
            let total: u64 = counts.iter().sum();
            let scale = k as f64 / total as f64;
            counts
                .iter()
                .map(|&c| S::lit((c as f64 * scale).min(1.0)))
                .collect()
        })
        .collect();
    CachingProbabilityMatrix::from_rows(rows)
}

/// Leaves the `k` selected files in `keys[..k]`. Weighted sampling without
/// replacement via exponential keys: file `n` gets `ln(u) / w_n` and the `k`
/// largest keys win, which matches successive weighted draws.
fn draw_without_replacement<R: Rng>(weights: &[f64], k: usize, rng: &mut R, keys: &mut [(f64, f64, usize)]) {
    for (n, &w) in weights.iter().enumerate() {
        let u: f64 = rng.random();
        keys[n] = if w > 0.0 {
            (1.0, (1.0 - u).ln() / w, n)
        } else {
            (0.0, u, n)
        };
    }
    keys.select_nth_unstable_by(k.saturating_sub(1).min(keys.len() - 1), |x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap()
            .then(y.1.partial_cmp(&x.1).unwrap())
    });
}

fn check<S: Scalar>(pop: &PopularityVector<S>, cfg: &NetworkConfig<S>) -> Result<()> {
    cfg.validate()?;
    if pop.len() != cfg.catalog_size {
        return Err(Error::DimensionMismatch(format!(
            "popularity has {} files, catalog has {}",
            pop.len(),
            cfg.catalog_size
        )));
    }
    Ok(())
}
