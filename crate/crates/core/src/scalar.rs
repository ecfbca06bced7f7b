use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the analytic model and the closed-form solvers run on.
///
/// Implemented for `f32` and `f64`. The robust solver and the simulator work
/// in `f64` only.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Never fails for finite input.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize fits the scalar range")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// A tolerance no tighter than what the type can represent around `scale`.
    #[inline]
    fn tol(requested: f64, scale: f64) -> Self {
        let floor = 64.0 * Self::epsilon().f64() * scale.abs().max(1.0);
        Self::lit(requested.max(floor))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
