//! Sobol low-discrepancy points and the collocation sets built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::SpaceTimePoint;
use crate::problems::ProblemSpec;

const BITS: usize = 32;

fn direction_numbers(dim: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    match dim {
        0 => {
            for (k, vk) in v.iter_mut().enumerate() {
                *vk = 1 << (BITS - 1 - k);
            }
        }
        1 => {
            // primitive polynomial x + 1 (s = 1, a = 0), m1 = 1
            let mut m = 1u32;
            for (k, vk) in v.iter_mut().enumerate() {
                if k > 0 {
                    m ^= m << 1;
                }
                *vk = m << (BITS - 1 - k);
            }
        }
        _ => unreachable!(),
    }
    v
}

/// First `n` points of the unscrambled Sobol sequence in `[0, 1)^dim`
/// (`dim` ≤ 2) after discarding `skip` points. Gray-code ordering.
pub fn sobol(dim: usize, n: usize, skip: usize) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || dim > 2 {
        return Err(Error::InvalidInput(format!("Sobol dimension {dim} unsupported (1 or 2)")));
    }
    let total = skip + n;
    if total as u64 > 1u64 << BITS {
        return Err(Error::InvalidInput("too many Sobol points".into()));
    }
    let dirs: Vec<[u32; BITS]> = (0..dim).map(direction_numbers).collect();
    let mut state = vec![0u32; dim];
    let scale = 1.0 / (1u64 << BITS) as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..total {
        if i >= skip {
            out.push(state.iter().map(|&s| s as f64 * scale).collect());
        }
        let c = (!i).trailing_zeros() as usize;
        if c < BITS {
            for (s, d) in state.iter_mut().zip(&dirs) {
                *s ^= d[c];
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollocationCounts {
    pub interior: usize,
    pub initial: usize,
    /// Split evenly between the two boundary faces.
    pub boundary: usize,
    pub skip: usize,
}

impl Default for CollocationCounts {
    fn default() -> Self {
        CollocationCounts { interior: 16384, initial: 1024, boundary: 1024, skip: 1 }
    }
}

impl CollocationCounts {
    pub fn for_spec(spec: &ProblemSpec) -> Self {
        let mut c = Self::default();
        if spec.benchmark == crate::problems::Benchmark::FitzHughNagumo {
            c.interior = 10000;
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<SpaceTimePoint>,
    pub initial: Vec<SpaceTimePoint>,
    pub boundary: Vec<SpaceTimePoint>,
}

fn lerp(lo: f64, hi: f64, s: f64) -> f64 {
    lo + (hi - lo) * s
}

/// Maps Sobol points onto the space-time domain of `spec`.
///
/// ODEs have a single initial point (every initial point would coincide) and
/// no boundary points. Boundary faces take consecutive, disjoint runs of the
/// 1-D sequence for their times.
pub fn build_collocation(spec: &ProblemSpec, counts: &CollocationCounts) -> Result<CollocationSet> {
    if counts.interior == 0 {
        return Err(Error::InvalidInput("interior collocation count must be positive".into()));
    }
    let horizon = spec.horizon;
    let Some((x0, x1)) = spec.space else {
        let interior = sobol(1, counts.interior, counts.skip)?
            .into_iter()
            .map(|p| SpaceTimePoint::at_time(horizon * p[0]))
            .collect();
        return Ok(CollocationSet { interior, initial: vec![SpaceTimePoint::at_time(0.0)], boundary: vec![] });
    };
    if counts.initial == 0 || counts.boundary < 2 {
        return Err(Error::InvalidInput("PDE benchmarks need initial and boundary points".into()));
    }
    let interior = sobol(2, counts.interior, counts.skip)?
        .into_iter()
        .map(|p| SpaceTimePoint::new(lerp(x0, x1, p[0]), horizon * p[1]))
        .collect();
    let initial = sobol(1, counts.initial, counts.skip)?
        .into_iter()
        .map(|p| SpaceTimePoint::new(lerp(x0, x1, p[0]), 0.0))
        .collect();
    let per_face = counts.boundary / 2;
    let times = sobol(1, 2 * per_face, counts.skip)?;
    let boundary = times
        .iter()
        .enumerate()
        .map(|(i, p)| SpaceTimePoint::new(if i < per_face { x0 } else { x1 }, horizon * p[0]))
        .collect();
    Ok(CollocationSet { interior, initial, boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemSpec;

    #[test]
    fn first_points_match_reference_table() {
        // unscrambled scipy.stats.qmc.Sobol(d=2), rows 1..=8
        let expected = [
            [0.5, 0.5],
            [0.75, 0.25],
            [0.25, 0.75],
            [0.375, 0.375],
            [0.875, 0.875],
            [0.625, 0.125],
            [0.125, 0.625],
            [0.1875, 0.3125],
        ];
        let pts = sobol(2, 8, 1).unwrap();
        for (p, e) in pts.iter().zip(&expected) {
            assert_eq!(p.as_slice(), e.as_slice());
        }
        let far = sobol(2, 1024, 0).unwrap();
        assert_eq!(far[1000], vec![0.2197265625, 0.0966796875]);
        assert_eq!(far[1023], vec![0.0009765625, 0.7529296875]);
    }

    #[test]
    fn one_dimensional_prefix() {
        assert_eq!(sobol(1, 1, 1).unwrap(), vec![vec![0.5]]);
        assert_eq!(sobol(1, 3, 1).unwrap(), vec![vec![0.5], vec![0.75], vec![0.25]]);
        assert!(sobol(3, 4, 1).is_err());
    }

    #[test]
    fn ode_collocation() {
        let spec = ProblemSpec::reaction();
        let set = build_collocation(&spec, &CollocationCounts { interior: 64, ..Default::default() }).unwrap();
        assert_eq!(set.interior.len(), 64);
        assert!(set.interior.iter().all(|p| p.t > 0.0 && p.t < spec.horizon));
        assert_eq!(set.initial, vec![SpaceTimePoint::at_time(0.0)]);
        assert!(set.boundary.is_empty());
    }

    #[test]
    fn burgers_boundary_split() {
        let spec = ProblemSpec::burgers();
        let set = build_collocation(&spec, &CollocationCounts { interior: 256, ..Default::default() }).unwrap();
        let left = set.boundary.iter().filter(|p| p.x == -1.0).count();
        let right = set.boundary.iter().filter(|p| p.x == 1.0).count();
        assert_eq!((left, right), (512, 512));
        assert!(set.initial.iter().all(|p| p.t == 0.0 && p.x >= -1.0 && p.x < 1.0));
        assert!(set.interior.iter().all(|p| p.x > -1.0 && p.x < 1.0 && p.t > 0.0 && p.t < spec.horizon));
    }
}
