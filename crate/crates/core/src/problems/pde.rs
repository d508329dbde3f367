//! Method-of-lines reference solver: second-order central differences in
//! space, Dormand–Prince in time.

use super::{dopri5, Benchmark, BoundaryCondition, ProblemSpec, ReferenceSolution, SolverKind};
use crate::error::{Error, Result};

/// Largest admissible cell Péclet number `max|u|·dx/ν`.
const MAX_PECLET: f64 = 2.0;

/// Uniform mesh of `spec.grid_nodes` nodes over the spatial domain.
pub fn pde_grid(spec: &ProblemSpec) -> Result<Vec<f64>> {
    let (x0, x1) = spec
        .space
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a PDE benchmark", spec.benchmark)))?;
    let n = spec.grid_nodes;
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 grid nodes, got {n}")));
    }
    let dx = (x1 - x0) / (n - 1) as f64;
    Ok((0..n).map(|i| x0 + dx * i as f64).collect())
}

pub fn solve_pde(spec: &ProblemSpec, eta: &[f64], t_eval: &[f64]) -> Result<ReferenceSolution> {
    let grid = pde_grid(spec)?;
    let u0: Vec<f64> = grid.iter().map(|&x| spec.initial_state(x)[0]).collect();
    solve_pde_from(spec, eta, &u0, t_eval)
}

/// Like [`solve_pde`] but starting from explicit nodal values `u0`.
pub fn solve_pde_from(spec: &ProblemSpec, eta: &[f64], u0: &[f64], t_eval: &[f64]) -> Result<ReferenceSolution> {
    spec.check_eta(eta)?;
    let grid = pde_grid(spec)?;
    let n = grid.len();
    if u0.len() != n {
        return Err(Error::Shape(format!("initial state has {} nodes, mesh has {n}", u0.len())));
    }
    let dx = grid[1] - grid[0];

    let sol = match spec.benchmark {
        Benchmark::FisherKpp => {
            let (d, rho) = (eta[0], eta[1]);
            let bc = spec.boundary.unwrap_or(BoundaryCondition::Neumann);
            let inv_dx2 = 1.0 / (dx * dx);
            dopri5(
                |_, u, du| {
                    for i in 0..n {
                        // ghost nodes mirror the first interior neighbour
                        let left = if i == 0 { u[1] } else { u[i - 1] };
                        let right = if i == n - 1 { u[n - 2] } else { u[i + 1] };
                        let uxx = (left - 2.0 * u[i] + right) * inv_dx2;
                        du[i] = d * uxx + rho * u[i] * (1.0 - u[i]);
                    }
                    if let BoundaryCondition::Dirichlet(_) = bc {
                        du[0] = 0.0;
                        du[n - 1] = 0.0;
                    }
                },
                0.0,
                u0,
                t_eval,
                &spec.ode_options,
            )?
        }
        Benchmark::Burgers => {
            let nu = eta[0];
            let umax = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let peclet = if nu > 0.0 { umax * dx / nu } else { f64::INFINITY };
            if peclet > MAX_PECLET {
                return Err(Error::MeshTooCoarse { peclet });
            }
            let inv_dx2 = 1.0 / (dx * dx);
            let inv_2dx = 0.5 / dx;
            dopri5(
                |_, u, du| {
                    du[0] = 0.0;
                    du[n - 1] = 0.0;
                    for i in 1..n - 1 {
                        let flux = 0.5 * (u[i + 1] * u[i + 1] - u[i - 1] * u[i - 1]) * inv_2dx;
                        let uxx = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv_dx2;
                        du[i] = nu * uxx - flux;
                    }
                },
                0.0,
                u0,
                t_eval,
                &spec.ode_options,
            )?
        }
        _ => unreachable!("space is only set for PDE benchmarks"),
    };

    Ok(ReferenceSolution {
        kind: SolverKind::MethodOfLines { nodes: n },
        options: spec.ode_options,
        times: sol.t,
        grid,
        state_dim: 1,
        values: sol.y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_initial_state_stays_zero() {
        let mut spec = ProblemSpec::fisher_kpp();
        spec.grid_nodes = 101;
        let sol = solve_pde_from(&spec, &[0.5, 1.0], &[0.0; 101], &[0.5, 2.0]).unwrap();
        assert!(sol.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn burgers_peclet_guard() {
        let mut spec = ProblemSpec::burgers();
        spec.grid_nodes = 21;
        match solve_pde(&spec, &[0.01], &[0.1]) {
            Err(Error::MeshTooCoarse { peclet }) => assert!((peclet - 10.0).abs() < 1e-9),
            other => panic!("expected mesh error, got {other:?}"),
        }
        assert!(matches!(solve_pde(&spec, &[0.0], &[0.1]), Err(Error::MeshTooCoarse { .. })));
    }

    #[test]
    fn ode_benchmark_rejected() {
        let spec = ProblemSpec::reaction();
        assert!(solve_pde(&spec, &spec.eta_true, &[1.0]).is_err());
    }
}
