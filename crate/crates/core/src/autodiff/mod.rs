//! Forward-over-reverse automatic differentiation.
//!
//! Input derivatives (∂/∂t, ∂/∂x, ∂²/∂x²) are propagated forward as [`Jet`]s
//! whose slots live on a reverse-mode [`Tape`], so a loss built from residuals
//! can be differentiated with respect to every network weight and every model
//! parameter in one backward sweep.

mod jet;
mod mat;
mod tape;

use std::ops::{Add, Div, Mul, Neg, Sub};

pub use jet::{DerivativeOrder, Jet};
pub use mat::Mat;
pub use tape::{Tape, Var};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("derivative order {0} is not supported (maximum is 2)")]
    UnsupportedOrder(u8),
    #[error("non-finite primal value produced by `{op}` at node {index}")]
    NonFinite { index: usize, op: &'static str },
    #[error("loss is not finite ({0})")]
    NonFiniteLoss(f64),
    #[error("loss must be a 1x1 node, got shape {0:?}")]
    NotScalar((usize, usize)),
}

/// Arithmetic shared by plain `f64` and tape variables, so model equations
/// are written once and evaluated either numerically or on a tape.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn clamp_to(self, lo: f64, hi: f64) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
}

impl Real for f64 {
    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        self.min(hi).max(lo)
    }

    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }
}

impl Real for Var<'_> {
    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        self.clamp(lo, hi)
    }

    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }

    fn exp(self) -> Self {
        Var::exp(self)
    }
}
