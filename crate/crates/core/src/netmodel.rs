//! Physical network model and the interference coefficients derived from it.
//!
//! Every STP expression in this crate is a rational function of the caching
//! probabilities whose coefficients depend only on the tier densities, powers,
//! SIR thresholds and the path-loss exponent:
//!
//! ```text
//! theta[l][m] = (lam_l/lam_m) (P_l/P_m)^d * (1 + d tau_m^d (B'(d, 1-d, 1/(1+tau_m)) - B(d, 1-d)))
//! eta[m]      = sum_l (lam_l/lam_m) (P_l/P_m)^d * d tau_m^d B(d, 1-d)
//! ```
//!
//! with `d = 2/alpha`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tier and catalog description of an M-tier cache-enabled network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig<S> {
    /// Path-loss exponent, strictly greater than 2.
    pub alpha: S,
    /// Base-station density per tier.
    pub densities: Vec<S>,
    /// Transmit power per tier (relative units).
    pub powers: Vec<S>,
    /// SIR decoding threshold per tier. Zero is admitted.
    pub sir_thresholds: Vec<S>,
    /// Cache size (in files) per tier.
    pub cache_sizes: Vec<usize>,
    /// Number of files in the catalog.
    pub catalog_size: usize,
}

impl<S: Scalar> NetworkConfig<S> {
    pub fn new(
        alpha: S,
        densities: Vec<S>,
        powers: Vec<S>,
        sir_thresholds: Vec<S>,
        cache_sizes: Vec<usize>,
        catalog_size: usize,
    ) -> Result<Self> {
        let cfg = Self {
            alpha,
            densities,
            powers,
            sir_thresholds,
            cache_sizes,
            catalog_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Three-tier macro/pico/femto layout used throughout the experiments:
    /// `alpha = 3`, `tau = (1, 10^-0.6, 10^-1.4)`, `lambda = (3.2e-7, 8e-6, 8e-4)`,
    /// `P = (10^3, 10^1.4, 1)`.
    pub fn reference_three_tier(cache_sizes: [usize; 3], catalog_size: usize) -> Result<Self> {
        Self::new(
            S::lit(3.0),
            vec![S::lit(3.2e-7), S::lit(8e-6), S::lit(8e-4)],
            vec![S::lit(1e3), S::lit(10f64.powf(1.4)), S::one()],
            vec![S::one(), S::lit(10f64.powf(-0.6)), S::lit(10f64.powf(-1.4))],
            cache_sizes.to_vec(),
            catalog_size,
        )
    }

    pub fn tier_count(&self) -> usize {
        self.densities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.densities.len();
        if m == 0 {
            return Err(Error::InvalidConfig("at least one tier is required".into()));
        }
        if self.powers.len() != m || self.sir_thresholds.len() != m || self.cache_sizes.len() != m
        {
            return Err(Error::InvalidConfig(format!(
                "per-tier vectors disagree in length: densities {}, powers {}, thresholds {}, cache sizes {}",
                m,
                self.powers.len(),
                self.sir_thresholds.len(),
                self.cache_sizes.len()
            )));
        }
        if !(self.alpha > S::lit(2.0)) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "path-loss exponent must exceed 2, got {}",
                self.alpha
            )));
        }
        if self.catalog_size == 0 {
            return Err(Error::InvalidConfig("catalog must hold at least one file".into()));
        }
        for tier in 0..m {
            let (lam, p, tau) = (
                self.densities[tier],
                self.powers[tier],
                self.sir_thresholds[tier],
            );
            if !(lam > S::zero()) || !lam.is_finite() {
                return Err(Error::InvalidConfig(format!("tier {tier}: density {lam} must be positive")));
            }
            if !(p > S::zero()) || !p.is_finite() {
                return Err(Error::InvalidConfig(format!("tier {tier}: power {p} must be positive")));
            }
            if !(tau >= S::zero()) || !tau.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "tier {tier}: SIR threshold {tau} must be nonnegative"
                )));
            }
            let k = self.cache_sizes[tier];
            if k == 0 || k > self.catalog_size {
                return Err(Error::InvalidConfig(format!(
                    "tier {tier}: cache size {k} must lie in 1..={}",
                    self.catalog_size
                )));
            }
        }
        Ok(())
    }
}

/// Interference coefficients `theta` (indexed `[l][m]`) and `eta` (indexed `[m]`).
///
/// Immutable once computed.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable<S> {
    theta: Vec<Vec<S>>,
    eta: Vec<S>,
}

impl<S: Scalar> CoefficientTable<S> {
    /// Builds a table from explicit values. `theta[l][m]` must be `M x M`.
    pub fn from_parts(theta: Vec<Vec<S>>, eta: Vec<S>) -> Result<Self> {
        let m = eta.len();
        if m == 0 || theta.len() != m || theta.iter().any(|row| row.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "theta must be {m}x{m} to match eta"
            )));
        }
        if theta.iter().flatten().chain(eta.iter()).any(|v| !(*v >= S::zero())) {
            return Err(Error::Domain("coefficients must be nonnegative".into()));
        }
        Ok(Self { theta, eta })
    }

    pub fn tier_count(&self) -> usize {
        self.eta.len()
    }

    /// `theta_{l,m}`: weight of tier-`l` caching in the tier-`m` denominator.
    #[inline]
    pub fn theta(&self, l: usize, m: usize) -> S {
        self.theta[l][m]
    }

    #[inline]
    pub fn eta(&self, m: usize) -> S {
        self.eta[m]
    }

    pub fn theta_matrix(&self) -> &[Vec<S>] {
        &self.theta
    }

    pub fn eta_vector(&self) -> &[S] {
        &self.eta
    }
}

/// Computes the coefficient table for a validated configuration.
pub fn compute_coefficients<S: Scalar>(cfg: &NetworkConfig<S>) -> Result<CoefficientTable<S>> {
    cfg.validate()?;
    let m_count = cfg.tier_count();
    let d = S::lit(2.0) / cfg.alpha;
    let full = beta(d, S::one() - d)?;

    let mut theta = vec![vec![S::zero(); m_count]; m_count];
    let mut eta = vec![S::zero(); m_count];
    for m in 0..m_count {
        let tau = cfg.sir_thresholds[m];
        let tail = beta_complementary(d, S::one() - d, S::one() / (S::one() + tau))?;
        let tau_d = tau.powf(d);
        let mut eta_m = S::zero();
        for l in 0..m_count {
            let ratio = (cfg.densities[l] / cfg.densities[m])
                * (cfg.powers[l] / cfg.powers[m]).powf(d);
            theta[l][m] = ratio * (S::one() + d * tau_d * (tail - full));
            eta_m = eta_m + ratio * d * tau_d * full;
        }
        eta[m] = eta_m;
    }
    CoefficientTable::from_parts(theta, eta)
}

/// Beta function `B(x, y)` for `x, y` in `(0, 1)`.
pub fn beta<S: Scalar>(x: S, y: S) -> Result<S> {
    check_open_unit("x", x)?;
    check_open_unit("y", y)?;
    let half = S::lit(0.5);
    Ok(head_integral(x, y, S::zero(), half) + head_integral(y, x, S::zero(), half))
}

/// Complementary incomplete Beta function `B'(x, y, z) = int_z^1 u^(x-1) (1-u)^(y-1) du`.
pub fn beta_complementary<S: Scalar>(x: S, y: S, z: S) -> Result<S> {
    check_open_unit("x", x)?;
    check_open_unit("y", y)?;
    if !(z >= S::zero() && z <= S::one()) {
        return Err(Error::Domain(format!("z = {z} must lie in [0, 1]")));
    }
    let half = S::lit(0.5);
    if z <= half {
        Ok(head_integral(x, y, z, half) + head_integral(y, x, S::zero(), half))
    } else {
        // int_z^1 in u equals int_0^(1-z) in v = 1 - u with the exponents swapped.
        Ok(head_integral(y, x, S::zero(), S::one() - z))
    }
}

fn check_open_unit<S: Scalar>(name: &str, v: S) -> Result<()> {
    if v > S::zero() && v < S::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must lie in (0, 1)")))
    }
}

/// `int_lo^hi u^(x-1) (1-u)^(y-1) du` for `0 <= lo <= hi <= 1/2`.
///
/// Substituting `s = u^x` removes the endpoint singularity at zero:
/// the integral becomes `(1/x) int (1 - s^(1/x))^(y-1) ds` over `[lo^x, hi^x]`,
/// whose integrand is bounded since `u <= 1/2`.
fn head_integral<S: Scalar>(x: S, y: S, lo: S, hi: S) -> S {
    if hi <= lo {
        return S::zero();
    }
    let inv_x = S::one() / x;
    let ym1 = y - S::one();
    let f = |s: S| (S::one() - s.powf(inv_x)).powf(ym1);
    let a = lo.powf(x);
    let b = hi.powf(x);
    integrate(&f, a, b, S::tol(1e-14, 1.0)) * inv_x
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Returns the 15-point Kronrod estimate and the embedded 7-point Gauss estimate.
fn gauss_kronrod<S: Scalar, F: Fn(S) -> S>(f: &F, a: S, b: S) -> (S, S) {
    let half = S::lit(0.5);
    let center = (a + b) * half;
    let radius = (b - a) * half;
    let fc = f(center);
    let mut kronrod = fc * S::lit(WGK[7]);
    let mut gauss = fc * S::lit(WG[3]);
    for (j, (&node, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = radius * S::lit(node);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * S::lit(wk);
        if j % 2 == 1 {
            gauss = gauss + pair * S::lit(WG[j / 2]);
        }
    }
    (kronrod * radius, gauss * radius)
}

/// Adaptive Gauss-Kronrod quadrature to absolute tolerance `tol`.
pub(crate) fn integrate<S: Scalar, F: Fn(S) -> S>(f: &F, a: S, b: S, tol: S) -> S {
    let width = b - a;
    let mut total = S::zero();
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (k, g) = gauss_kronrod(f, lo, hi);
        let local_tol = tol * (hi - lo) / width;
        if (k - g).abs() <= local_tol || depth >= 60 {
            total = total + k;
        } else {
            let mid = (lo + hi) * S::lit(0.5);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}
