//! The four benchmark systems: residual operators, initial and boundary
//! conditions, parameter bounds, ground truth, and classical forward solvers.

mod dataset;
pub mod ode;
mod pde;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::network::SpaceTimePoint;

pub use dataset::{generate_dataset, Dataset, Observation};
pub use ode::{dopri5, OdeOptions, OdeSolution};
pub use pde::{pde_grid, solve_pde, solve_pde_from};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    Reaction,
    #[serde(rename = "fhn", alias = "fitzhugh-nagumo")]
    FitzHughNagumo,
    FisherKpp,
    Burgers,
}

impl Benchmark {
    pub const ALL: [Benchmark; 4] = [
        Benchmark::Reaction,
        Benchmark::FitzHughNagumo,
        Benchmark::FisherKpp,
        Benchmark::Burgers,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Benchmark::Reaction => "reaction",
            Benchmark::FitzHughNagumo => "fhn",
            Benchmark::FisherKpp => "fisher-kpp",
            Benchmark::Burgers => "burgers",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reaction" => Ok(Benchmark::Reaction),
            "fhn" | "fitzhugh-nagumo" => Ok(Benchmark::FitzHughNagumo),
            "fisher-kpp" | "fisher" => Ok(Benchmark::FisherKpp),
            "burgers" => Ok(Benchmark::Burgers),
            other => Err(Error::Config(format!("unknown benchmark `{other}`"))),
        }
    }
}

/// How data misfits are normalised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MisfitKind {
    Absolute,
    /// Residuals divided element-wise by the datum.
    Relative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryCondition {
    /// Zero flux, `∂u/∂x = 0`.
    Neumann,
    /// `u = value`.
    Dirichlet(f64),
}

/// Values of the state and its input derivatives at a batch of points, one
/// entry per state component. Spatial entries are empty for ODEs.
#[derive(Clone, Debug)]
pub struct StateFields<T> {
    pub u: Vec<T>,
    pub u_t: Vec<T>,
    pub u_x: Vec<T>,
    pub u_xx: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub benchmark: Benchmark,
    pub state_dim: usize,
    pub param_names: Vec<&'static str>,
    pub eta_true: Vec<f64>,
    pub eta_lower: Vec<f64>,
    pub eta_upper: Vec<f64>,
    pub horizon: f64,
    /// Spatial interval for PDEs.
    pub space: Option<(f64, f64)>,
    pub boundary: Option<BoundaryCondition>,
    pub observation_times: Vec<f64>,
    /// Observed positions at each observation time (PDEs only).
    pub observation_xs: Vec<f64>,
    pub observed_components: Vec<usize>,
    pub data_loss: MisfitKind,
    /// Nodes of the method-of-lines reference mesh (PDEs only).
    pub grid_nodes: usize,
    pub ode_options: OdeOptions,
}

fn uniform(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

impl ProblemSpec {
    pub fn new(benchmark: Benchmark) -> Self {
        match benchmark {
            Benchmark::Reaction => Self::reaction(),
            Benchmark::FitzHughNagumo => Self::fitzhugh_nagumo(),
            Benchmark::FisherKpp => Self::fisher_kpp(),
            Benchmark::Burgers => Self::burgers(),
        }
    }

    /// A ⇌ B + C, C ⇌ D with rates (k1, k2, k3, k4).
    pub fn reaction() -> Self {
        let horizon = 10.0;
        ProblemSpec {
            benchmark: Benchmark::Reaction,
            state_dim: 4,
            param_names: vec!["k1", "k2", "k3", "k4"],
            eta_true: vec![1.5, 0.5, 1.0, 0.1],
            eta_lower: vec![0.0; 4],
            eta_upper: vec![10.0, 4.0, 7.0, 0.7],
            horizon,
            space: None,
            boundary: None,
            observation_times: (1..=10).map(|k| k as f64 * horizon / 10.0).collect(),
            observation_xs: vec![],
            observed_components: vec![0, 1, 2, 3],
            data_loss: MisfitKind::Relative,
            grid_nodes: 0,
            ode_options: OdeOptions::default(),
        }
    }

    /// FitzHugh–Nagumo with parameters (a, b, r).
    pub fn fitzhugh_nagumo() -> Self {
        let horizon = 40.0;
        ProblemSpec {
            benchmark: Benchmark::FitzHughNagumo,
            state_dim: 2,
            param_names: vec!["a", "b", "r"],
            eta_true: vec![0.7, 0.8, 12.5],
            eta_lower: vec![0.0; 3],
            eta_upper: vec![10.0, 10.0, 100.0],
            horizon,
            space: None,
            boundary: None,
            observation_times: (1..=7).map(|k| k as f64 * horizon / 7.0).collect(),
            observation_xs: vec![],
            observed_components: vec![0, 1],
            data_loss: MisfitKind::Relative,
            grid_nodes: 0,
            ode_options: OdeOptions::default(),
        }
    }

    /// Fisher–KPP on [0, 10] with zero-flux boundaries, parameters (D, ρ).
    pub fn fisher_kpp() -> Self {
        ProblemSpec {
            benchmark: Benchmark::FisherKpp,
            state_dim: 1,
            param_names: vec!["D", "rho"],
            eta_true: vec![0.5, 1.0],
            eta_lower: vec![0.1, 0.5],
            eta_upper: vec![0.5, 6.0],
            horizon: 2.0,
            space: Some((0.0, 10.0)),
            boundary: Some(BoundaryCondition::Neumann),
            observation_times: vec![1.0, 2.0],
            observation_xs: uniform(9, 0.0, 10.0),
            observed_components: vec![0],
            data_loss: MisfitKind::Absolute,
            grid_nodes: 1001,
            ode_options: OdeOptions::default(),
        }
    }

    /// Viscous Burgers on [−1, 1] with homogeneous Dirichlet boundaries.
    pub fn burgers() -> Self {
        ProblemSpec {
            benchmark: Benchmark::Burgers,
            state_dim: 1,
            param_names: vec!["nu"],
            eta_true: vec![0.01],
            eta_lower: vec![0.0],
            eta_upper: vec![0.07],
            horizon: 0.5,
            space: Some((-1.0, 1.0)),
            boundary: Some(BoundaryCondition::Dirichlet(0.0)),
            observation_times: vec![0.2, 0.4],
            // 7 interior points of 9 equispaced nodes
            observation_xs: uniform(9, -1.0, 1.0)[1..8].to_vec(),
            observed_components: vec![0],
            data_loss: MisfitKind::Absolute,
            grid_nodes: 2001,
            ode_options: OdeOptions::default(),
        }
    }

    pub fn param_dim(&self) -> usize {
        self.eta_true.len()
    }

    pub fn is_pde(&self) -> bool {
        self.space.is_some()
    }

    /// Number of equality constraints (DE, IC and BC when present).
    pub fn num_constraints(&self) -> usize {
        if self.boundary.is_some() {
            3
        } else {
            2
        }
    }

    /// Initial state h(x).
    pub fn initial_state(&self, x: f64) -> Vec<f64> {
        match self.benchmark {
            Benchmark::Reaction => vec![1.0, 0.0, 0.2, 0.0],
            Benchmark::FitzHughNagumo => vec![0.0, 0.0],
            Benchmark::FisherKpp => vec![0.1 * (-x).exp()],
            Benchmark::Burgers => vec![-(PI * x).sin()],
        }
    }

    /// Fails for parameter vectors the residual cannot be evaluated at.
    pub fn check_eta(&self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.param_dim() {
            return Err(Error::Shape(format!(
                "{} expects {} parameters, got {}",
                self.benchmark,
                self.param_dim(),
                eta.len()
            )));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        if self.benchmark == Benchmark::FitzHughNagumo && eta[2] == 0.0 {
            return Err(Error::SingularParameter("FitzHugh–Nagumo time-scale r must be nonzero".into()));
        }
        Ok(())
    }

    /// Residual operator F, one entry per state component.
    pub fn residual<T: Real>(&self, f: &StateFields<T>, eta: &[T]) -> Vec<T> {
        match self.benchmark {
            Benchmark::Reaction => {
                let rhs = reaction_rhs(&f.u, eta);
                (0..4).map(|i| rhs[i] - f.u_t[i]).collect()
            }
            Benchmark::FitzHughNagumo => {
                let rhs = fhn_rhs(&f.u, eta);
                (0..2).map(|i| rhs[i] - f.u_t[i]).collect()
            }
            Benchmark::FisherKpp => vec![fisher_kpp_generic(f.u[0], eta[0], eta[1], f.u_t[0], f.u_xx[0])],
            Benchmark::Burgers => vec![burgers_generic(f.u[0], eta[0], f.u_t[0], f.u_x[0], f.u_xx[0])],
        }
    }

    /// Right-hand side of the ODE systems, `du/dt = rhs(u; η)`.
    pub fn ode_rhs(&self, u: &[f64], eta: &[f64], du: &mut [f64]) {
        match self.benchmark {
            Benchmark::Reaction => du.copy_from_slice(&reaction_rhs(u, eta)),
            Benchmark::FitzHughNagumo => du.copy_from_slice(&fhn_rhs(u, eta)),
            _ => panic!("{} is not an ODE benchmark", self.benchmark),
        }
    }

    /// Space-time locations of the observations, one per time × position.
    pub fn observation_points(&self) -> Vec<SpaceTimePoint> {
        if self.is_pde() {
            self.observation_times
                .iter()
                .flat_map(|&t| self.observation_xs.iter().map(move |&x| SpaceTimePoint::new(x, t)))
                .collect()
        } else {
            self.observation_times.iter().map(|&t| SpaceTimePoint::at_time(t)).collect()
        }
    }

    /// Forward solve at `eta`, reporting the state at `t_eval`.
    pub fn solve(&self, eta: &[f64], t_eval: &[f64]) -> Result<ReferenceSolution> {
        if self.is_pde() {
            solve_pde(self, eta, t_eval)
        } else {
            solve_ode(self, eta, t_eval)
        }
    }
}

pub(crate) fn reaction_rhs<T: Real>(u: &[T], k: &[T]) -> [T; 4] {
    let (a, b, c, d) = (u[0], u[1], u[2], u[3]);
    let forward = k[0] * a;
    let backward = k[1] * b * c;
    let net = forward - backward;
    [-net, net, net - k[2] * c + k[3] * d, k[2] * c - k[3] * d]
}

pub(crate) fn fhn_rhs<T: Real>(u: &[T], eta: &[T]) -> [T; 2] {
    let (v1, v2) = (u[0], u[1]);
    let (a, b, r) = (eta[0], eta[1], eta[2]);
    [v1 - v1 * v1 * v1 / 3.0 - v2, (v1 + a - b * v2) / r]
}

fn fisher_kpp_generic<T: Real>(u: T, d: T, rho: T, u_t: T, u_xx: T) -> T {
    d * u_xx + rho * (u - u * u) - u_t
}

fn burgers_generic<T: Real>(u: T, nu: T, u_t: T, u_x: T, u_xx: T) -> T {
    u_t + u * u_x - nu * u_xx
}

/// `rhs(u; k) − u_t` for the reaction network, u = ([A], [B], [C], [D]).
pub fn reaction_residual(u: [f64; 4], eta: [f64; 4], u_t: [f64; 4]) -> [f64; 4] {
    let rhs = reaction_rhs(&u, &eta);
    std::array::from_fn(|i| rhs[i] - u_t[i])
}

/// `(u − u³/3 − v − u_t, (u + a − b v)/r − v_t)`.
pub fn fhn_residual(u: [f64; 2], eta: [f64; 3], u_t: [f64; 2]) -> Result<[f64; 2]> {
    if eta[2] == 0.0 {
        return Err(Error::SingularParameter("FitzHugh–Nagumo time-scale r must be nonzero".into()));
    }
    let rhs = fhn_rhs(&u, &eta);
    Ok([rhs[0] - u_t[0], rhs[1] - u_t[1]])
}

/// `D u_xx + ρ u (1 − u) − u_t`.
pub fn fisher_residual(u: f64, eta: [f64; 2], u_t: f64, u_xx: f64) -> f64 {
    fisher_kpp_generic(u, eta[0], eta[1], u_t, u_xx)
}

/// `u_t + u u_x − ν u_xx`.
pub fn burgers_residual(u: f64, nu: f64, u_t: f64, u_x: f64, u_xx: f64) -> f64 {
    burgers_generic(u, nu, u_t, u_x, u_xx)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverKind {
    DormandPrince54,
    /// Central differences in space on `nodes` points, Dormand–Prince in time.
    MethodOfLines { nodes: usize },
}

/// Forward solution sampled at requested times.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub kind: SolverKind,
    pub options: OdeOptions,
    pub times: Vec<f64>,
    /// Spatial nodes (empty for ODEs).
    pub grid: Vec<f64>,
    pub state_dim: usize,
    /// `values[i]` is the state at `times[i]`; for PDEs laid out node-major,
    /// `values[i][node * state_dim + component]`.
    pub values: Vec<Vec<f64>>,
}

impl ReferenceSolution {
    /// State at time index `ti`, linearly interpolated in `x` for PDEs.
    pub fn state_at(&self, ti: usize, x: f64) -> Vec<f64> {
        let v = &self.values[ti];
        if self.grid.is_empty() {
            return v.clone();
        }
        let m = self.state_dim;
        let n = self.grid.len();
        let (x0, x1) = (self.grid[0], self.grid[n - 1]);
        let pos = ((x - x0) / (x1 - x0) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let w = pos - i as f64;
        (0..m)
            .map(|c| {
                let a = v[i * m + c];
                if w == 0.0 {
                    a
                } else {
                    a + w * (v[(i + 1) * m + c] - a)
                }
            })
            .collect()
    }

    /// Component `c` at time index `ti` and node `node`.
    pub fn node_value(&self, ti: usize, node: usize, c: usize) -> f64 {
        self.values[ti][node * self.state_dim + c]
    }
}

/// Dormand–Prince reference for the ODE benchmarks.
pub fn solve_ode(spec: &ProblemSpec, eta: &[f64], t_eval: &[f64]) -> Result<ReferenceSolution> {
    spec.check_eta(eta)?;
    if spec.is_pde() {
        return Err(Error::InvalidInput(format!("{} is a PDE benchmark", spec.benchmark)));
    }
    let y0 = spec.initial_state(0.0);
    let sol = dopri5(|_, u, du| spec.ode_rhs(u, eta, du), 0.0, &y0, t_eval, &spec.ode_options)?;
    Ok(ReferenceSolution {
        kind: SolverKind::DormandPrince54,
        options: spec.ode_options,
        times: sol.t,
        grid: vec![],
        state_dim: spec.state_dim,
        values: sol.y,
    })
}
