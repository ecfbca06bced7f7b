//! Independent oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use rand::Rng;
use tiercache::{CoefficientTable, Network, Placement, Popularity};

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Random network with `m` tiers and `n` files; cache sizes in `1..n`.
pub fn random_network<R: Rng>(rng: &mut R, m: usize, n: usize) -> Network {
    let alpha = rng.random_range(2.5..5.0);
    let densities = (0..m).map(|_| log_uniform(rng, 1e-6, 1e-3)).collect();
    let powers = (0..m).map(|_| log_uniform(rng, 1.0, 1e3)).collect();
    let thresholds = (0..m).map(|_| log_uniform(rng, 0.03, 10.0)).collect();
    let sizes = (0..m).map(|_| rng.random_range(1..n)).collect();
    Network::new(alpha, densities, powers, thresholds, sizes, n).unwrap()
}

/// Popularity with entries bounded away from zero.
pub fn random_popularity<R: Rng>(rng: &mut R, n: usize) -> Popularity {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    Popularity::from_weights(&w).unwrap()
}

/// Euclidean projection onto `{0 <= v <= 1, sum v = k}`: the shift `tau`
/// with `sum clamp(v - tau, 0, 1) = k`, found on the piecewise linear
/// breakpoints `v_n` and `v_n - 1`.
pub fn project(v: &[f64], k: f64) -> Vec<f64> {
    let total = |tau: f64| v.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).sum::<f64>();
    let mut points: Vec<f64> = v.iter().flat_map(|&x| [x, x - 1.0]).collect();
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // total is nonincreasing in tau: find adjacent breakpoints around k.
    let mut tau = points[0];
    for w in points.windows(2) {
        let (lo, hi) = (total(w[0]), total(w[1]));
        if lo >= k && hi <= k {
            tau = if lo == hi { w[0] } else { w[0] + (lo - k) / (lo - hi) * (w[1] - w[0]) };
            break;
        }
    }
    v.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).collect()
}

pub fn random_placement<R: Rng>(rng: &mut R, cache_sizes: &[usize], n: usize) -> Placement {
    let rows = cache_sizes
        .iter()
        .map(|&k| {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..1.5)).collect();
            let mut row = project(&v, k as f64);
            // Exact row sums for the strict validator.
            let s: f64 = row.iter().sum();
            let fix = row.iter().position(|&x| x > 1e-3 && x < 1.0 - 1e-3);
            if let Some(i) = fix {
                row[i] += k as f64 - s;
            }
            row
        })
        .collect();
    Placement::from_rows(rows).unwrap()
}

/// Gradient of tier `m`'s surrogate at row `r`, written from its definition:
/// `sum_n w_n r_n / x_mn(r) + lin . r`, where only the own-tier denominator
/// moves with `r`, and `lin` collects the linearized cross-tier terms and any
/// extra linear part.
pub struct SurrogateDef {
    pub theta_own: f64,
    pub others: Vec<f64>,
    pub weight: Vec<f64>,
    pub linear: Vec<f64>,
}

impl SurrogateDef {
    /// Deterministic surrogate around `prev` with popularity weights `w`.
    pub fn deterministic(w: &[f64], prev: &Placement, coef: &CoefficientTable<f64>, m: usize) -> Self {
        let tiers = prev.tiers();
        let files = prev.files();
        let x = |j: usize, n: usize| (0..tiers).map(|l| coef.theta(l, j) * prev.get(l, n)).sum::<f64>() + coef.eta(j);
        let others = (0..files)
            .map(|n| {
                (0..tiers)
                    .filter(|&l| l != m)
                    .map(|l| coef.theta(l, m) * prev.get(l, n))
                    .sum::<f64>()
                    + coef.eta(m)
            })
            .collect();
        // d/dT_mn of sum_{j != m} w_n T_jn / x_jn.
        let linear = (0..files)
            .map(|n| {
                -(0..tiers)
                    .filter(|&j| j != m)
                    .map(|j| w[n] * prev.get(j, n) * coef.theta(m, j) / (x(j, n) * x(j, n)))
                    .sum::<f64>()
            })
            .collect();
        SurrogateDef {
            theta_own: coef.theta(m, m),
            others,
            weight: w.to_vec(),
            linear,
        }
    }

    /// `rho * deterministic(xi) + (1 - rho) f_m . r`.
    pub fn stochastic(xi: &[f64], f_m: &[f64], rho: f64, prev: &Placement, coef: &CoefficientTable<f64>, m: usize) -> Self {
        let mut d = Self::deterministic(xi, prev, coef, m);
        d.weight.iter_mut().for_each(|w| *w *= rho);
        for (l, &f) in d.linear.iter_mut().zip(f_m) {
            *l = rho * *l + (1.0 - rho) * f;
        }
        d
    }

    pub fn value(&self, r: &[f64]) -> f64 {
        (0..r.len())
            .map(|n| {
                self.weight[n] * r[n] / (self.theta_own * r[n] + self.others[n]) + self.linear[n] * r[n]
            })
            .sum()
    }

    pub fn gradient(&self, r: &[f64]) -> Vec<f64> {
        (0..r.len())
            .map(|n| {
                let x = self.theta_own * r[n] + self.others[n];
                self.weight[n] * self.others[n] / (x * x) + self.linear[n]
            })
            .collect()
    }

    /// Largest curvature over the unit box (attained at `r = 0`).
    fn lipschitz(&self) -> f64 {
        (0..self.weight.len())
            .map(|n| 2.0 * self.weight[n] * self.theta_own / (self.others[n] * self.others[n]))
            .fold(1e-12, f64::max)
    }

    /// Maximizer over `{0 <= r <= 1, sum r = k}` by accelerated projected
    /// gradient ascent with gradient restarts.
    pub fn maximize(&self, k: usize) -> Vec<f64> {
        self.maximize_counted(k).0
    }

    pub fn maximize_counted(&self, k: usize) -> (Vec<f64>, usize) {
        let n = self.weight.len();
        let step = 1.0 / self.lipschitz();
        let mut r = project(&vec![k as f64 / n as f64; n], k as f64);
        let mut y = r.clone();
        let mut t = 1.0f64;
        let mut iters = 0;
        for _ in 0..200_000 {
            iters += 1;
            let g = self.gradient(&y);
            let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a + step * b).collect();
            let next = project(&z, k as f64);
            let moved: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            // Restart when the momentum points downhill.
            let downhill: f64 = g.iter().zip(next.iter().zip(&r)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let t_next = if downhill < 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let beta = if downhill < 0.0 { 0.0 } else { (t - 1.0) / t_next };
            y = next.iter().zip(&r).map(|(a, b)| a + beta * (a - b)).collect();
            r = next;
            t = t_next;
            if moved < 1e-13 {
                break;
            }
        }
        (r, iters)
    }
}

/// `min sum a_n g_n` over `lower <= a <= upper`, `sum a = 1` by enumerating
/// every vertex: all coordinates at a bound except at most one.
pub fn lp_by_vertices(g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let n = g.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        let at = |i: usize| if mask >> i & 1 == 1 { upper[i] } else { lower[i] };
        for free in 0..=n {
            let mut a: Vec<f64> = (0..n).map(at).collect();
            if free < n {
                a[free] = 1.0 - (0..n).filter(|&i| i != free).map(|i| a[i]).sum::<f64>();
                if a[free] < lower[free] - 1e-12 || a[free] > upper[free] + 1e-12 {
                    continue;
                }
            } else if (a.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                continue;
            }
            best = best.min(a.iter().zip(g).map(|(x, y)| x * y).sum());
        }
    }
    best
}
