//! Scalar abstraction for the numeric core.
//!
//! Everything downstream is generic over [`Float`] so the same code runs in
//! `f32` and `f64`. Leakage tolerances in the test suites assume `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used throughout the crate.
pub trait Float:
    num_traits::Float + num_traits::FromPrimitive + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossy numeric cast; panics only when the source has no
    /// representation at all in `Self`, which the provided impls never hit
    /// for finite inputs.
    fn cast<P: num_traits::ToPrimitive>(p: P) -> Self {
        num_traits::NumCast::from(p).expect("numeric cast")
    }
}

impl Float for f32 {}
impl Float for f64 {}
