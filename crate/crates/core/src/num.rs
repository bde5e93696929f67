//! Scalar abstraction for the numeric core.
//!
//! Every algorithm that only does arithmetic (the solver, retention and
//! metric computations, quantiles, clustering) is generic over [`Real`] so
//! it runs identically on `f32` and `f64`. The crate root exports concrete
//! `f64` aliases for the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn c(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}
