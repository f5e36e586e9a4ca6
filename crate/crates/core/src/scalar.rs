//! Numeric traits shared by the diffusion and network code.
//!
//! Transition-matrix algebra only needs field operations, so it is written
//! against [`Prob`], which exact rationals satisfy as well as floats. The
//! schedule and the network need transcendental functions and use [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Exact rational probability, used by tests and by the closed-form checks.
pub type Ratio = num_rational::Ratio<i64>;

/// A probability-like scalar: anything with exact field arithmetic and an order.
pub trait Prob: LinalgScalar + PartialOrd + Debug {}

impl<T> Prob for T where T: LinalgScalar + PartialOrd + Debug {}

/// Floating-point scalar for the schedule and the denoiser.
pub trait Real:
    Prob + Float + FromPrimitive + NumAssign + ScalarOperand + Sum + Display + Default + Send + Sync
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
