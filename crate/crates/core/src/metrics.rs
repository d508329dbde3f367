//! Accuracy metrics and the power-law convergence fit.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};
use crate::losses::data_loss;
use crate::network::SpaceTimePoint;
use crate::problems::{Dataset, MisfitKind, ProblemSpec};

/// Default probe resolution for [`mu`].
pub const PROBE_POINTS: usize = 1001;

/// Relative RMSE between true and estimated parameters.
pub fn beta(eta_true: &[f64], eta_est: &[f64]) -> Result<f64> {
    if eta_true.len() != eta_est.len() || eta_true.is_empty() {
        return Err(Error::Shape(format!("{} true vs {} estimated parameters", eta_true.len(), eta_est.len())));
    }
    if let Some(j) = eta_true.iter().position(|&v| v == 0.0) {
        return Err(Error::InvalidInput(format!("true parameter {j} is zero; relative error undefined")));
    }
    let s: f64 = eta_true
        .iter()
        .zip(eta_est)
        .map(|(&t, &e)| {
            let r = (t - e) / t;
            r * r
        })
        .sum();
    Ok((s / eta_true.len() as f64).sqrt())
}

/// Misfit of predictions at the data points; the same definition as the
/// training data loss.
pub fn gamma(dataset: &Dataset, predictions: &[f64], kind: MisfitKind) -> Result<f64> {
    data_loss(predictions, &dataset.values(), kind)
}

/// Forward-solve predictions at every observation of `dataset`.
pub fn forward_predictions(problem: &ProblemSpec, eta: &[f64], dataset: &Dataset) -> Result<Vec<f64>> {
    let mut times: Vec<f64> = dataset.observations.iter().map(|o| o.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let sol = problem.solve(eta, &times)?;
    Ok(dataset
        .observations
        .iter()
        .map(|o| {
            let ti = times.partition_point(|&t| t < o.t);
            sol.state_at(ti, o.x)[o.component]
        })
        .collect())
}

/// Probe grid for [`mu`]: `n` times on `[0, T]` for ODEs; the measurement
/// times × `n` positions across the domain for PDEs.
pub fn probe_points(problem: &ProblemSpec, n: usize) -> Vec<SpaceTimePoint> {
    let lin = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    match problem.space {
        None => (0..n).map(|i| SpaceTimePoint::at_time(lin(0.0, problem.horizon, i))).collect(),
        Some((x0, x1)) => problem
            .observation_times
            .iter()
            .flat_map(|&t| (0..n).map(move |i| SpaceTimePoint::new(lin(x0, x1, i), t)))
            .collect(),
    }
}

/// Forward solution at `eta` on the probe grid as an `m × P` matrix.
pub fn solution_on_probe(problem: &ProblemSpec, eta: &[f64], n: usize) -> Result<Mat> {
    let pts = probe_points(problem, n);
    let mut times: Vec<f64> = pts.iter().map(|p| p.t).collect();
    times.dedup();
    let sol = problem.solve(eta, &times)?;
    let m = problem.state_dim;
    let mut out = Mat::zeros(m, pts.len());
    let mut ti = 0;
    for (j, p) in pts.iter().enumerate() {
        while times[ti] != p.t {
            ti += 1;
        }
        for (c, v) in sol.state_at(ti, p.x).into_iter().enumerate() {
            out.set(c, j, v);
        }
    }
    Ok(out)
}

/// Maximum absolute deviation between two solutions on the same probe grid.
pub fn mu(candidate: &Mat, reference: &Mat) -> Result<f64> {
    if candidate.shape() != reference.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", candidate.shape(), reference.shape())));
    }
    Ok(candidate
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Decay exponent, `L ∝ epoch^(−a)`.
    pub a: f64,
    pub std_err: f64,
    pub points: usize,
}

/// Least-squares fit of `log L` against `log epoch` over epochs after
/// `burn_in`. Non-positive losses are dropped with a warning.
pub fn fit_power_law(series: &[(usize, f64)], burn_in: usize) -> Result<PowerLawFit> {
    let window: Vec<(usize, f64)> = series.iter().copied().filter(|&(e, _)| e > burn_in).collect();
    let dropped = window.iter().filter(|&&(_, l)| !(l > 0.0 && l.is_finite())).count();
    if dropped > 0 {
        log::warn!("power-law fit: dropped {dropped} non-positive or non-finite losses");
    }
    let pts: Vec<(f64, f64)> = window
        .into_iter()
        .filter(|&(_, l)| l > 0.0 && l.is_finite())
        .map(|(e, l)| ((e as f64).ln(), l.ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("power-law fit needs at least 3 points after epoch {burn_in}, got {n}")));
    }
    // centring on the first value keeps a constant series exactly flat
    let y0 = pts[0].1;
    let pts: Vec<(f64, f64)> = pts.into_iter().map(|(x, y)| (x, y - y0)).collect();
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("power-law fit needs distinct epochs".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let std_err = (sse / (nf - 2.0) / sxx).sqrt();
    Ok(PowerLawFit { a: -slope, std_err, points: n })
}

pub const RESULTS_HEADER: &str = "method,zeta,xi,seed,beta,gamma_abs,gamma_rel,mu,runtime_s,status";

/// One grid cell × method outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub method: String,
    pub zeta: f64,
    pub xi: f64,
    pub seed: u64,
    pub beta: f64,
    pub gamma_abs: f64,
    pub gamma_rel: f64,
    pub mu: f64,
    pub runtime_s: f64,
    /// `ok`, or a short failure description.
    pub status: String,
}

impl ScenarioResult {
    pub fn failed(method: &str, zeta: f64, xi: f64, seed: u64, runtime_s: f64, reason: &str) -> Self {
        ScenarioResult {
            method: method.to_string(),
            zeta,
            xi,
            seed,
            beta: f64::NAN,
            gamma_abs: f64::NAN,
            gamma_rel: f64::NAN,
            mu: f64::NAN,
            runtime_s,
            status: reason.replace([',', '\n', '\r'], ";"),
        }
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{:.3},{}",
            self.method,
            self.zeta,
            self.xi,
            self.seed,
            self.beta,
            self.gamma_abs,
            self.gamma_rel,
            self.mu,
            self.runtime_s,
            self.status
        );
        s
    }
}

/// Appends rows to a results CSV, writing the header if the file is new.
pub fn append_results(path: &Path, rows: &[ScenarioResult]) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{RESULTS_HEADER}")?;
    }
    for r in rows {
        writeln!(f, "{}", r.csv_row())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_examples() {
        let t = [1.5, 0.5, 1.0, 0.1];
        assert_eq!(beta(&t, &t).unwrap(), 0.0);
        assert_eq!(beta(&[3.0], &[6.0]).unwrap(), 1.0);
        let b = beta(&t, &[1.5, 0.5, 1.0, 0.2]).unwrap();
        assert!((b - 0.5).abs() < 1e-12);
        assert!(beta(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn mu_examples() {
        let a = Mat::from_vec(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(mu(&a, &a).unwrap(), 0.0);
        let shifted = a.map(|v| v + 0.3);
        assert!((mu(&shifted, &a).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn power_law_examples() {
        let exact: Vec<(usize, f64)> = (1..5000).map(|e| (e, (e as f64).powf(-1.5))).collect();
        let fit = fit_power_law(&exact, 1000).unwrap();
        assert!((fit.a - 1.5).abs() < 1e-10);
        let flat: Vec<(usize, f64)> = (1..5000).map(|e| (e, 0.7)).collect();
        assert_eq!(fit_power_law(&flat, 1000).unwrap().a, 0.0);
        let with_zero: Vec<(usize, f64)> = (1..5000).map(|e| (e, if e == 2000 { 0.0 } else { 1.0 / e as f64 })).collect();
        let fit = fit_power_law(&with_zero, 1000).unwrap();
        assert_eq!(fit.points, 3998);
        assert!((fit.a - 1.0).abs() < 1e-10);
    }

    #[test]
    fn results_row_format() {
        let r = ScenarioResult {
            method: "pinnverse".into(),
            zeta: 0.25,
            xi: 0.75,
            seed: 7,
            beta: 0.5,
            gamma_abs: 0.1,
            gamma_rel: 0.2,
            mu: 0.05,
            runtime_s: 1.23456,
            status: "ok".into(),
        };
        assert_eq!(r.csv_row(), "pinnverse,0.25,0.75,7,0.5,0.1,0.2,0.05,1.235,ok");
    }
}
