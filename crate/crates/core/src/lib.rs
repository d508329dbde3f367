//! Inverse problems for ODE/PDE models with physics-informed neural networks
//! trained as constrained optimisation problems (modified differential
//! method of multipliers), plus the weighted-sum PINN and Nelder–Mead
//! baselines they are compared against.

pub mod autodiff;
pub mod error;
pub mod network;
pub mod problems;
pub mod sampling;
pub mod losses;
pub mod optim;
pub mod metrics;
pub mod train;
pub mod baselines;
pub mod experiment;

pub use error::{Error, Result};
