//! Truncated Taylor jets in the network inputs, built from tape operations.
//!
//! A [`Jet`] carries a value together with its first time derivative, first
//! spatial derivative and second spatial derivative. Each slot is itself a
//! tape node, so parameter gradients flow through the input derivatives.
//! `None` stands for an identically zero slot.

use super::{AutodiffError, Var};

/// Highest input-derivative order propagated through the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DerivativeOrder {
    Value,
    First,
    Second,
}

impl TryFrom<u8> for DerivativeOrder {
    type Error = AutodiffError;

    fn try_from(order: u8) -> Result<Self, Self::Error> {
        match order {
            0 => Ok(DerivativeOrder::Value),
            1 => Ok(DerivativeOrder::First),
            2 => Ok(DerivativeOrder::Second),
            n => Err(AutodiffError::UnsupportedOrder(n)),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Jet<'t> {
    pub value: Var<'t>,
    pub dt: Option<Var<'t>>,
    pub dx: Option<Var<'t>>,
    pub dxx: Option<Var<'t>>,
}

fn add_opt<'t>(a: Option<Var<'t>>, b: Option<Var<'t>>) -> Option<Var<'t>> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a + b),
        (a, None) => a,
        (None, b) => b,
    }
}

impl<'t> Jet<'t> {
    /// A jet with all derivative slots zero.
    pub fn constant(value: Var<'t>) -> Self {
        Jet {
            value,
            dt: None,
            dx: None,
            dxx: None,
        }
    }

    /// Zero-filled node shaped like the value, used when a slot is `None`.
    fn zeros_like(&self) -> Var<'t> {
        self.value * 0.0
    }

    pub fn dt_or_zero(&self) -> Var<'t> {
        self.dt.unwrap_or_else(|| self.zeros_like())
    }

    pub fn dx_or_zero(&self) -> Var<'t> {
        self.dx.unwrap_or_else(|| self.zeros_like())
    }

    pub fn dxx_or_zero(&self) -> Var<'t> {
        self.dxx.unwrap_or_else(|| self.zeros_like())
    }

    pub fn scale(&self, k: f64) -> Jet<'t> {
        Jet {
            value: self.value * k,
            dt: self.dt.map(|d| d * k),
            dx: self.dx.map(|d| d * k),
            dxx: self.dxx.map(|d| d * k),
        }
    }

    pub fn add(&self, other: &Jet<'t>) -> Jet<'t> {
        Jet {
            value: self.value + other.value,
            dt: add_opt(self.dt, other.dt),
            dx: add_opt(self.dx, other.dx),
            dxx: add_opt(self.dxx, other.dxx),
        }
    }

    /// Affine layer `W·a + b`; derivative slots are mapped by `W` only.
    pub fn affine(&self, weights: Var<'t>, bias: Var<'t>) -> Jet<'t> {
        Jet {
            value: weights.matmul(self.value) + bias,
            dt: self.dt.map(|d| weights.matmul(d)),
            dx: self.dx.map(|d| weights.matmul(d)),
            dxx: self.dxx.map(|d| weights.matmul(d)),
        }
    }

    /// Elementwise `tanh` with the chain rule up to second order:
    /// `y' = s z'`, `y'' = s z'' − 2 y s (z')²` where `s = 1 − y²`.
    /// The second-order slot is only propagated when it is tracked
    /// (`Some`) on the input.
    pub fn tanh(&self) -> Jet<'t> {
        let y = self.value.tanh();
        let needs_slope = self.dt.is_some() || self.dx.is_some() || self.dxx.is_some();
        if !needs_slope {
            return Jet::constant(y);
        }
        let s = 1.0 - y * y;
        let dxx = self.dxx.map(|zxx| match self.dx {
            Some(zx) => s * zxx + (y * s) * (zx * zx) * -2.0,
            None => s * zxx,
        });
        Jet {
            value: y,
            dt: self.dt.map(|d| s * d),
            dx: self.dx.map(|d| s * d),
            dxx,
        }
    }

    /// Row `r` of every slot.
    pub fn row(&self, r: usize) -> Jet<'t> {
        Jet {
            value: self.value.row(r),
            dt: self.dt.map(|d| d.row(r)),
            dx: self.dx.map(|d| d.row(r)),
            dxx: self.dxx.map(|d| d.row(r)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Mat, Tape};

    /// Jet of the scalar input x itself at the given points.
    fn identity_jet<'t>(tape: &'t Tape, xs: &[f64]) -> Jet<'t> {
        Jet {
            value: tape.var(Mat::row_vector(xs.to_vec())),
            dt: None,
            dx: Some(tape.var(Mat::filled(1, xs.len(), 1.0))),
            dxx: Some(tape.var(Mat::zeros(1, xs.len()))),
        }
    }

    #[test]
    fn tanh_jet_matches_closed_form() {
        let tape = Tape::new();
        let xs = [-0.8, 0.1, 0.9];
        let j = identity_jet(&tape, &xs).scale(1.7).tanh();
        for (i, &x) in xs.iter().enumerate() {
            let y = (1.7 * x).tanh();
            let s = 1.0 - y * y;
            assert!((j.value.value().get(0, i) - y).abs() < 1e-15);
            assert!((j.dx.unwrap().value().get(0, i) - 1.7 * s).abs() < 1e-14);
            let d2 = -2.0 * y * s * 1.7 * 1.7;
            assert!((j.dxx.unwrap().value().get(0, i) - d2).abs() < 1e-14);
        }
    }

    #[test]
    fn linearity_of_slots() {
        let tape = Tape::new();
        let xs = [0.2, 0.4];
        let f = identity_jet(&tape, &xs).tanh();
        let g = identity_jet(&tape, &xs).scale(2.0).tanh();
        let combo = f.scale(3.0).add(&g.scale(-0.5));
        for i in 0..2 {
            let lhs = combo.dxx.unwrap().value().get(0, i);
            let rhs = 3.0 * f.dxx.unwrap().value().get(0, i) - 0.5 * g.dxx.unwrap().value().get(0, i);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn order_above_two_is_rejected() {
        assert!(DerivativeOrder::try_from(3).is_err());
        assert_eq!(DerivativeOrder::try_from(2).unwrap(), DerivativeOrder::Second);
    }
}
