//! Synthetic observations with heteroscedastic Gaussian noise.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ProblemSpec;
use crate::error::{Error, Result};
use crate::network::SpaceTimePoint;

const CSV_HEADER: &str = "x,t,component_index,value,sigma";

/// One scalar measurement. `x` is 0 for ODE benchmarks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub x: f64,
    pub t: f64,
    pub component: usize,
    pub value: f64,
    /// Standard deviation of the noise that was applied, `ζ·|y|`.
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub noise_level: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.value).collect()
    }

    /// Distinct space-time points in first-seen order, and for every
    /// observation the index of its point.
    pub fn unique_points(&self) -> (Vec<SpaceTimePoint>, Vec<usize>) {
        let mut points: Vec<SpaceTimePoint> = Vec::new();
        let mut index = Vec::with_capacity(self.len());
        for o in &self.observations {
            let pos = points.iter().position(|p| p.x == o.x && p.t == o.t);
            let i = pos.unwrap_or_else(|| {
                points.push(SpaceTimePoint::new(o.x, o.t));
                points.len() - 1
            });
            index.push(i);
        }
        (points, index)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for o in &self.observations {
            let _ = writeln!(out, "{},{},{},{},{}", o.x, o.t, o.component, o.value, o.sigma);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the CSV layout written by [`Dataset::to_csv`]. Noise level and
    /// seed are not stored in the file and are set to zero.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => return Err(Error::InvalidInput(format!("unexpected dataset header {other:?}"))),
        }
        let mut observations = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::InvalidInput(format!("dataset row {row}: expected 5 fields")));
            }
            let num = |i: usize| {
                fields[i]
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("dataset row {row}, field {i}: {e}")))
            };
            let component = fields[2]
                .parse::<usize>()
                .map_err(|e| Error::InvalidInput(format!("dataset row {row}: {e}")))?;
            observations.push(Observation { x: num(0)?, t: num(1)?, component, value: num(3)?, sigma: num(4)? });
        }
        Ok(Dataset { observations, noise_level: 0.0, seed: 0 })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

/// Solves the forward problem at `eta` on the observation schedule and adds
/// noise `ζ·|y|·N(0, 1)` to every observed value.
pub fn generate_dataset(spec: &ProblemSpec, eta: &[f64], noise_level: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&noise_level) {
        return Err(Error::InvalidInput(format!("noise level {noise_level} outside [0, 1]")));
    }
    let reference = spec.solve(eta, &spec.observation_times)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = if spec.is_pde() { spec.observation_xs.clone() } else { vec![0.0] };
    let mut observations = Vec::new();
    for (ti, &t) in spec.observation_times.iter().enumerate() {
        for &x in &xs {
            let state = reference.state_at(ti, x);
            for &c in &spec.observed_components {
                let y = state[c];
                let sigma = noise_level * y.abs();
                let z: f64 = StandardNormal.sample(&mut rng);
                observations.push(Observation { x, t, component: c, value: y + sigma * z, sigma });
            }
        }
    }
    Ok(Dataset { observations, noise_level, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_data_is_reference() {
        let spec = ProblemSpec::reaction();
        let d = generate_dataset(&spec, &spec.eta_true, 0.0, 1).unwrap();
        let r = spec.solve(&spec.eta_true, &spec.observation_times).unwrap();
        assert_eq!(d.len(), 40);
        for (k, o) in d.observations.iter().enumerate() {
            assert_eq!(o.value, r.values[k / 4][k % 4]);
            assert_eq!(o.sigma, 0.0);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = ProblemSpec::fitzhugh_nagumo();
        let a = generate_dataset(&spec, &spec.eta_true, 0.15, 9).unwrap();
        let b = generate_dataset(&spec, &spec.eta_true, 0.15, 9).unwrap();
        let c = generate_dataset(&spec, &spec.eta_true, 0.15, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn csv_round_trip() {
        let spec = ProblemSpec::reaction();
        let d = generate_dataset(&spec, &spec.eta_true, 0.25, 3).unwrap();
        let back = Dataset::from_csv(&d.to_csv()).unwrap();
        assert_eq!(back.observations, d.observations);
        assert!(Dataset::from_csv("a,b\n").is_err());
    }

    #[test]
    fn unique_points_group_components() {
        let spec = ProblemSpec::reaction();
        let d = generate_dataset(&spec, &spec.eta_true, 0.0, 1).unwrap();
        let (pts, idx) = d.unique_points();
        assert_eq!(pts.len(), 10);
        assert_eq!(&idx[..8], &[0, 0, 0, 0, 1, 1, 1, 1]);
    }
}
