//! Adan, the learning-rate schedule, and the modified differential method of
//! multipliers on an augmented Lagrangian.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};

/// Decay coefficients in the "weight on new information" convention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdanConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdanConfig {
    fn default() -> Self {
        AdanConfig { beta1: 0.02, beta2: 0.08, beta3: 0.01, eps: 1e-8, weight_decay: 0.0 }
    }
}

impl AdanConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::Config(format!("adan.{name} = {b} must lie in (0, 1]")));
            }
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("adan.eps must be positive and adan.weight_decay nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdanState {
    pub config: AdanConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub n: Vec<f64>,
    pub prev_grad: Vec<f64>,
    pub step: u64,
}

impl AdanState {
    pub fn new(len: usize, config: AdanConfig) -> Self {
        AdanState {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            n: vec![0.0; len],
            prev_grad: vec![0.0; len],
            step: 0,
        }
    }

    /// Advances the moment estimates with `grad` and returns the step to add
    /// to the parameters (before weight decay, see [`AdanState::apply`]).
    ///
    /// The gradient difference is zero on the first step.
    pub fn update(&mut self, grad: &[f64], lr: f64) -> Vec<f64> {
        assert_eq!(grad.len(), self.m.len(), "gradient length changed");
        let AdanConfig { beta1, beta2, beta3, eps, .. } = self.config;
        self.step += 1;
        let k = self.step as i32;
        let bc1 = 1.0 - (1.0 - beta1).powi(k);
        let bc2 = 1.0 - (1.0 - beta2).powi(k);
        let bc3 = 1.0 - (1.0 - beta3).powi(k);
        let first = self.step == 1;
        let mut delta = vec![0.0; grad.len()];
        for i in 0..grad.len() {
            let g = grad[i];
            let diff = if first { 0.0 } else { g - self.prev_grad[i] };
            self.m[i] = (1.0 - beta1) * self.m[i] + beta1 * g;
            self.v[i] = (1.0 - beta2) * self.v[i] + beta2 * diff;
            let c = g + (1.0 - beta2) * diff;
            self.n[i] = (1.0 - beta3) * self.n[i] + beta3 * c * c;
            let num = self.m[i] / bc1 + (1.0 - beta2) * self.v[i] / bc2;
            delta[i] = -lr * num / ((self.n[i] / bc3).sqrt() + eps);
            self.prev_grad[i] = g;
        }
        delta
    }

    /// Updates `params` in place: Adan step followed by decoupled weight decay.
    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        let delta = self.update(grad, lr);
        let shrink = 1.0 / (1.0 + lr * self.config.weight_decay);
        for (p, d) in params.iter_mut().zip(delta) {
            *p = (*p + d) * shrink;
        }
    }
}

/// Linear decay from `initial` to `floor`, then constant for the last
/// `constant_tail` epochs. Runs no longer than the tail decay over their
/// whole length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub initial: f64,
    pub floor: f64,
    pub constant_tail: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { initial: 1e-2, floor: 1e-4, constant_tail: 30_000 }
    }
}

impl LrSchedule {
    pub fn rate(&self, epoch: usize, total_epochs: usize) -> f64 {
        let span = if total_epochs > self.constant_tail {
            total_epochs - self.constant_tail
        } else {
            total_epochs
        };
        if span == 0 {
            return self.floor;
        }
        if epoch >= span {
            return self.floor;
        }
        let frac = epoch as f64 / span as f64;
        self.initial + (self.floor - self.initial) * frac
    }
}

/// Learning rate under the default schedule.
pub fn lr_schedule(epoch: usize, total_epochs: usize) -> f64 {
    LrSchedule::default().rate(epoch, total_epochs)
}

/// Signed bound violation `clamp(η; lower, upper) − η`.
pub fn infeasibility<T: Real>(eta: T, lower: f64, upper: f64) -> T {
    eta.clamp_to(lower, upper) - eta
}

/// Lagrange multipliers and penalty coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierState {
    /// Equality-constraint multipliers λ_i.
    pub lambda: Vec<f64>,
    /// Bound multipliers χ_j.
    pub chi: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl MultiplierState {
    pub fn new(constraints: usize, bounds: usize, penalty: f64) -> Self {
        MultiplierState {
            lambda: vec![0.0; constraints],
            chi: vec![0.0; bounds],
            c: vec![penalty; constraints],
            d: vec![penalty; bounds],
        }
    }

    /// Plain ascent `λ_i += α L_i`, `χ_j += α V_j`.
    pub fn ascend(&mut self, constraints: &[f64], infeasibilities: &[f64], lr: f64) {
        for (l, v) in self.lambda.iter_mut().zip(constraints) {
            *l += lr * v;
        }
        for (x, v) in self.chi.iter_mut().zip(infeasibilities) {
            *x += lr * v;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.lambda.iter().chain(&self.chi).copied().collect()
    }
}

/// `L_A = f + Σ (λ_i L_i + c_i/2 L_i²) + Σ (χ_j V_j + d_j/2 V_j²)`.
pub fn augmented_lagrangian<T: Real>(objective: T, constraints: &[T], infeasibilities: &[T], mult: &MultiplierState) -> T {
    assert_eq!(constraints.len(), mult.lambda.len(), "constraint count mismatch");
    assert_eq!(infeasibilities.len(), mult.chi.len(), "bound count mismatch");
    let mut total = objective;
    for (i, &l) in constraints.iter().enumerate() {
        total = total + l * mult.lambda[i] + l * l * (0.5 * mult.c[i]);
    }
    for (j, &v) in infeasibilities.iter().enumerate() {
        total = total + v * mult.chi[j] + v * v * (0.5 * mult.d[j]);
    }
    total
}

/// Values and primal gradient of an augmented Lagrangian at one iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianEval {
    pub objective: f64,
    pub constraints: Vec<f64>,
    pub infeasibilities: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// A problem `min f(p)` subject to `L_i(p) = 0` and bound infeasibilities
/// `V_j(p) = 0`, differentiated through its augmented Lagrangian.
pub trait ConstrainedProblem {
    fn num_constraints(&self) -> usize;
    fn num_bounds(&self) -> usize;
    fn evaluate(&mut self, primal: &[f64], mult: &MultiplierState) -> Result<LagrangianEval>;
}

#[derive(Clone, Debug)]
pub struct MdmmState {
    pub primal: Vec<f64>,
    pub multipliers: MultiplierState,
    pub adan: AdanState,
}

impl MdmmState {
    pub fn new(primal: Vec<f64>, multipliers: MultiplierState, adan: AdanConfig) -> Self {
        let len = primal.len();
        MdmmState { primal, multipliers, adan: AdanState::new(len, adan) }
    }
}

/// One simultaneous update: Adan descent on the primal variables and plain
/// ascent on the multipliers, both from the same pre-step evaluation, which
/// is returned. A non-finite gradient leaves the state untouched.
pub fn mdmm_step<P: ConstrainedProblem>(problem: &mut P, state: &mut MdmmState, lr: f64) -> Result<LagrangianEval> {
    let eval = problem.evaluate(&state.primal, &state.multipliers)?;
    if let Some(i) = eval.gradient.iter().position(|g| !g.is_finite()) {
        return Err(Error::StepRejected {
            epoch: state.adan.step as usize,
            reason: format!("non-finite gradient entry {i}"),
        });
    }
    state.adan.apply(&mut state.primal, &eval.gradient, lr);
    state.multipliers.ascend(&eval.constraints, &eval.infeasibilities, lr);
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infeasibility_examples() {
        assert_eq!(infeasibility(0.3, 0.0, 0.7), 0.0);
        assert!((infeasibility(0.8, 0.0, 0.7) + 0.1).abs() < 1e-15);
        assert_eq!(infeasibility(-0.2, 0.0, 0.7), 0.2);
    }

    #[test]
    fn lagrangian_examples() {
        let mut mult = MultiplierState::new(2, 1, 1.0);
        assert_eq!(augmented_lagrangian(0.5, &[0.0, 0.0], &[0.0], &mult), 0.5);
        mult.lambda = vec![1.0, 1.0];
        let v = augmented_lagrangian(0.5, &[0.2, 0.1], &[0.0], &mult);
        assert!((v - 0.825).abs() < 1e-15);
        let mut doubled = mult.clone();
        doubled.c[0] = 2.0;
        let w = augmented_lagrangian(0.5, &[0.2, 0.1], &[0.0], &doubled);
        assert!((w - v - 0.5 * 0.2 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn schedule_examples() {
        let total = 100_000;
        assert_eq!(lr_schedule(0, total), 1e-2);
        assert!((lr_schedule(total - 30_000, total) - 1e-4).abs() < 1e-18);
        assert!((lr_schedule(35_000, total) - 5.05e-3).abs() < 1e-15);
        assert_eq!(lr_schedule(total - 1, total), 1e-4);
        let short = 20_000;
        assert_eq!(lr_schedule(0, short), 1e-2);
        assert!((lr_schedule(10_000, short) - 5.05e-3).abs() < 1e-15);
    }

    #[test]
    fn adan_zero_gradient_is_zero_step() {
        let mut s = AdanState::new(3, AdanConfig::default());
        for _ in 0..10 {
            assert_eq!(s.update(&[0.0; 3], 1e-2), vec![0.0; 3]);
        }
    }

    #[test]
    fn adan_constant_gradient_descends() {
        let mut s = AdanState::new(3, AdanConfig::default());
        let g = [0.5, -2.0, 1e-3];
        for _ in 0..200 {
            let d = s.update(&g, 1e-2);
            for (di, gi) in d.iter().zip(g) {
                assert_eq!(di.signum(), -gi.signum());
            }
        }
    }

    /// `min x² + y²` subject to `x + y = 1` and `0 ≤ x ≤ 0.4`.
    struct Toy;

    impl ConstrainedProblem for Toy {
        fn num_constraints(&self) -> usize {
            1
        }
        fn num_bounds(&self) -> usize {
            1
        }
        fn evaluate(&mut self, p: &[f64], mult: &MultiplierState) -> Result<LagrangianEval> {
            let (x, y) = (p[0], p[1]);
            let f = x * x + y * y;
            let g = x + y - 1.0;
            let v = infeasibility(x, 0.0, 0.4);
            let value = augmented_lagrangian(f, &[g], &[v], mult);
            let dg = mult.lambda[0] + mult.c[0] * g;
            // dV/dx = -1 outside the box, 0 inside
            let dv = if v != 0.0 { -(mult.chi[0] + mult.d[0] * v) } else { 0.0 };
            Ok(LagrangianEval {
                objective: f,
                constraints: vec![g],
                infeasibilities: vec![v],
                value,
                gradient: vec![2.0 * x + dg + dv, 2.0 * y + dg],
            })
        }
    }

    #[test]
    fn mdmm_reaches_kkt_point() {
        let mut st = MdmmState::new(vec![2.0, -1.0], MultiplierState::new(1, 1, 1.0), AdanConfig::default());
        let schedule = LrSchedule { initial: 1e-2, floor: 1e-4, constant_tail: 5_000 };
        for k in 0..30_000 {
            mdmm_step(&mut Toy, &mut st, schedule.rate(k, 30_000)).unwrap();
        }
        let (x, y) = (st.primal[0], st.primal[1]);
        assert!((x - 0.4).abs() < 1e-2 && (y - 0.6).abs() < 1e-2, "{x} {y}");
        assert!((st.multipliers.lambda[0] + 1.2).abs() < 5e-2, "{:?}", st.multipliers);
    }

    #[test]
    fn rejected_step_leaves_state() {
        struct Bad;
        impl ConstrainedProblem for Bad {
            fn num_constraints(&self) -> usize {
                0
            }
            fn num_bounds(&self) -> usize {
                0
            }
            fn evaluate(&mut self, _: &[f64], _: &MultiplierState) -> Result<LagrangianEval> {
                Ok(LagrangianEval {
                    objective: 0.0,
                    constraints: vec![],
                    infeasibilities: vec![],
                    value: 0.0,
                    gradient: vec![f64::NAN],
                })
            }
        }
        let mut st = MdmmState::new(vec![1.0], MultiplierState::new(0, 0, 1.0), AdanConfig::default());
        assert!(matches!(mdmm_step(&mut Bad, &mut st, 1e-2), Err(Error::StepRejected { .. })));
        assert_eq!(st.primal, vec![1.0]);
        assert_eq!(st.adan.step, 0);
    }

    #[test]
    fn multiplier_ascent() {
        let mut m = MultiplierState::new(2, 0, 1.0);
        m.ascend(&[0.2, 0.0], &[], 0.01);
        assert!((m.lambda[0] - 0.002).abs() < 1e-18);
        assert_eq!(m.lambda[1], 0.0);
    }
}
