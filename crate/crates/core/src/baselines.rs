//! Classical baseline: bounded Nelder–Mead over the forward solver.
//!
//! The weighted-sum network baseline lives in [`crate::train::train_pinn`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossVector;
use crate::metrics::{beta, forward_predictions, gamma};
use crate::optim::infeasibility;
use crate::problems::{Dataset, MisfitKind, ProblemSpec};
use crate::train::{Method, TrainStatus, TrainSummary};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadOptions {
    pub xatol: f64,
    pub fatol: f64,
    /// Iteration cap per parameter; the limit is `max_iter_per_param · p`.
    pub max_iter_per_param: usize,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Relative perturbation of nonzero coordinates in the initial simplex.
    pub initial_step: f64,
    /// Absolute perturbation used for zero coordinates.
    pub zero_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            xatol: 1e-8,
            fatol: 1e-8,
            max_iter_per_param: 400,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 0.05,
            zero_step: 0.00025,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after every iteration.
    pub best_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    fn clip(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }
}

struct Simplex<'f, F> {
    f: &'f mut F,
    bounds: Option<&'f Bounds>,
    evaluations: usize,
}

impl<F: FnMut(&[f64]) -> f64> Simplex<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn clip(&self, mut x: Vec<f64>) -> Vec<f64> {
        if let Some(b) = self.bounds {
            b.clip(&mut x);
        }
        x
    }
}

fn sort_simplex(sim: &mut Vec<Vec<f64>>, fsim: &mut Vec<f64>) {
    let mut idx: Vec<usize> = (0..fsim.len()).collect();
    idx.sort_by(|&a, &b| fsim[a].total_cmp(&fsim[b]));
    *sim = idx.iter().map(|&i| sim[i].clone()).collect();
    *fsim = idx.iter().map(|&i| fsim[i]).collect();
}

/// Bounded Nelder–Mead minimisation. Trial points are clipped to `bounds`;
/// non-finite objective values count as `+∞`.
pub fn nelder_mead<F>(mut objective: F, start: &[f64], bounds: Option<&Bounds>, opts: &NelderMeadOptions) -> Result<NelderMeadResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let p = start.len();
    if p == 0 {
        return Err(Error::InvalidInput("Nelder–Mead needs at least one coordinate".into()));
    }
    if let Some(b) = bounds {
        if b.lower.len() != p || b.upper.len() != p {
            return Err(Error::Shape("bounds do not match start point".into()));
        }
        if b.lower.iter().zip(&b.upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(Error::InvalidInput("bounds must be finite with lower ≤ upper".into()));
        }
    }
    let NelderMeadOptions { reflection: rho, expansion: chi, contraction: psi, shrink: sigma, .. } = *opts;
    let mut s = Simplex { f: &mut objective, bounds, evaluations: 0 };

    let x0 = s.clip(start.to_vec());
    let mut sim = vec![x0.clone()];
    for k in 0..p {
        let mut y = x0.clone();
        y[k] = if y[k] != 0.0 { (1.0 + opts.initial_step) * y[k] } else { opts.zero_step };
        if let Some(b) = bounds {
            // reflect perturbations that left the box back inside it
            if y[k] > b.upper[k] {
                y[k] = 2.0 * b.upper[k] - y[k];
            }
        }
        sim.push(s.clip(y));
    }
    let mut fsim: Vec<f64> = sim.iter().map(|x| s.eval(x)).collect();
    if !fsim[0].is_finite() {
        return Err(Error::InvalidInput("objective is not finite at the start point".into()));
    }
    sort_simplex(&mut sim, &mut fsim);

    let max_iter = opts.max_iter_per_param * p;
    let mut iterations = 0;
    let mut converged = false;
    let mut best_history = Vec::new();
    let affine = |a: f64, xbar: &[f64], b: f64, worst: &[f64]| -> Vec<f64> {
        xbar.iter().zip(worst).map(|(x, w)| a * x + b * w).collect()
    };

    while iterations < max_iter {
        let xspread = sim[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&sim[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let fspread = fsim[1..].iter().map(|f| (fsim[0] - f).abs()).fold(0.0, f64::max);
        if xspread <= opts.xatol && fspread <= opts.fatol {
            converged = true;
            break;
        }

        let mut xbar = vec![0.0; p];
        for v in &sim[..p] {
            for (c, x) in xbar.iter_mut().zip(v) {
                *c += x;
            }
        }
        xbar.iter_mut().for_each(|c| *c /= p as f64);
        let worst = sim[p].clone();

        let xr = s.clip(affine(1.0 + rho, &xbar, -rho, &worst));
        let fxr = s.eval(&xr);
        let mut shrink = false;
        if fxr < fsim[0] {
            let xe = s.clip(affine(1.0 + rho * chi, &xbar, -rho * chi, &worst));
            let fxe = s.eval(&xe);
            if fxe < fxr {
                sim[p] = xe;
                fsim[p] = fxe;
            } else {
                sim[p] = xr;
                fsim[p] = fxr;
            }
        } else if fxr < fsim[p - 1] {
            sim[p] = xr;
            fsim[p] = fxr;
        } else if fxr < fsim[p] {
            let xc = s.clip(affine(1.0 + psi * rho, &xbar, -psi * rho, &worst));
            let fxc = s.eval(&xc);
            if fxc <= fxr {
                sim[p] = xc;
                fsim[p] = fxc;
            } else {
                shrink = true;
            }
        } else {
            let xcc = s.clip(affine(1.0 - psi, &xbar, psi, &worst));
            let fxcc = s.eval(&xcc);
            if fxcc < fsim[p] {
                sim[p] = xcc;
                fsim[p] = fxcc;
            } else {
                shrink = true;
            }
        }
        if shrink {
            for j in 1..=p {
                let y: Vec<f64> = sim[0].iter().zip(&sim[j]).map(|(b, v)| b + sigma * (v - b)).collect();
                sim[j] = s.clip(y);
                fsim[j] = s.eval(&sim[j]);
            }
        }
        iterations += 1;
        sort_simplex(&mut sim, &mut fsim);
        best_history.push(fsim[0]);
    }

    Ok(NelderMeadResult {
        x: sim[0].clone(),
        value: fsim[0],
        evaluations: s.evaluations,
        iterations,
        converged,
        best_history,
    })
}

/// `η ↦ γ(η)`: misfit between the forward solution at `η` and the data.
/// Solver failures map to `+∞`.
pub fn forward_objective<'a>(problem: &'a ProblemSpec, dataset: &'a Dataset, kind: MisfitKind) -> impl Fn(&[f64]) -> f64 + 'a {
    move |eta: &[f64]| {
        forward_predictions(problem, eta, dataset)
            .and_then(|pred| gamma(dataset, &pred, kind))
            .unwrap_or(f64::INFINITY)
    }
}

/// Nelder–Mead from `(1+ξ)η_true` inside the problem bounds, using the
/// benchmark's misfit kind.
pub fn estimate_nelder_mead(problem: &ProblemSpec, dataset: &Dataset, xi: f64, opts: &NelderMeadOptions) -> Result<NelderMeadResult> {
    let start: Vec<f64> = problem.eta_true.iter().map(|e| (1.0 + xi) * e).collect();
    let bounds = Bounds { lower: problem.eta_lower.clone(), upper: problem.eta_upper.clone() };
    let objective = forward_objective(problem, dataset, problem.data_loss);
    nelder_mead(objective, &start, Some(&bounds), opts)
}

/// The estimate in the same JSON shape as the network trainers report.
/// Residual losses are zero: the forward solver satisfies the equations.
pub fn nelder_mead_summary(problem: &ProblemSpec, result: &NelderMeadResult, seed: u64) -> Result<TrainSummary> {
    Ok(TrainSummary {
        method: Method::NelderMead,
        benchmark: problem.benchmark,
        eta_est: result.x.clone(),
        eta_true: problem.eta_true.clone(),
        beta: beta(&problem.eta_true, &result.x)?,
        final_losses: LossVector {
            data: result.value,
            de: 0.0,
            ic: 0.0,
            bc: problem.boundary.map(|_| 0.0),
        },
        infeasibility: result
            .x
            .iter()
            .enumerate()
            .map(|(j, &e)| infeasibility(e, problem.eta_lower[j], problem.eta_upper[j]))
            .collect(),
        epochs: result.iterations,
        seed,
        status: TrainStatus::Completed,
    })
}
