//! Data, residual, initial- and boundary-condition losses.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{DerivativeOrder, Mat, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::network::{eval_jet, NetworkSpec, ParamVars, SpaceTimePoint};
use crate::problems::{Benchmark, BoundaryCondition, Dataset, MisfitKind, ProblemSpec, StateFields};
use crate::sampling::CollocationSet;

/// The four loss terms. `bc` is `None` for problems without boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms<T> {
    pub data: T,
    pub de: T,
    pub ic: T,
    pub bc: Option<T>,
}

pub type LossVector = LossTerms<f64>;

impl<T: Copy> LossTerms<T> {
    /// Constraint losses in multiplier order: DE, IC, then BC if present.
    pub fn constraints(&self) -> Vec<T> {
        let mut out = vec![self.de, self.ic];
        out.extend(self.bc);
        out
    }
}

impl LossVector {
    pub fn bc_or_zero(&self) -> f64 {
        self.bc.unwrap_or(0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.is_finite() && self.de.is_finite() && self.ic.is_finite() && self.bc_or_zero().is_finite()
    }
}

impl LossTerms<Var<'_>> {
    pub fn values(&self) -> LossVector {
        LossTerms {
            data: self.data.item(),
            de: self.de.item(),
            ic: self.ic.item(),
            bc: self.bc.map(|v| v.item()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub data: f64,
    pub de: f64,
    pub ic: f64,
    pub bc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { data: 1.0, de: 1.0, ic: 1.0, bc: 1.0 }
    }
}

/// Weighted sum `ω_data L_data + ω_de L_de + ω_ic L_ic + ω_bc L_bc`.
pub fn pinn_loss<T: Real>(losses: &LossTerms<T>, w: &LossWeights) -> T {
    let mut total = losses.data * w.data + losses.de * w.de + losses.ic * w.ic;
    if let Some(bc) = losses.bc {
        total = total + bc * w.bc;
    }
    total
}

/// Root-mean-square misfit over scalar observations; the relative kind
/// divides each residual by its datum.
pub fn data_loss(predictions: &[f64], data: &[f64], kind: MisfitKind) -> Result<f64> {
    if predictions.len() != data.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} data",
            predictions.len(),
            data.len()
        )));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("no data".into()));
    }
    check_relative(data, kind)?;
    let sum: f64 = predictions
        .iter()
        .zip(data)
        .map(|(&p, &d)| {
            let r = match kind {
                MisfitKind::Absolute => p - d,
                MisfitKind::Relative => (p - d) / d,
            };
            r * r
        })
        .sum();
    Ok((sum / data.len() as f64).sqrt())
}

fn check_relative(data: &[f64], kind: MisfitKind) -> Result<()> {
    if kind == MisfitKind::Relative {
        if let Some(index) = data.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDatum { index });
        }
    }
    Ok(())
}

/// Precomputed targets for the data misfit: one column per scalar
/// observation.
#[derive(Clone, Debug)]
struct DataTargets {
    points: Vec<SpaceTimePoint>,
    /// Per state component, a 0/1 row selecting the columns observing it.
    masks: Vec<Option<Mat>>,
    values: Mat,
    denominators: Mat,
}

impl DataTargets {
    fn new(problem: &ProblemSpec, dataset: &Dataset, kind: MisfitKind) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        let values = dataset.values();
        check_relative(&values, kind)?;
        let k = values.len();
        let mut masks = vec![None; problem.state_dim];
        for (j, o) in dataset.observations.iter().enumerate() {
            if o.component >= problem.state_dim {
                return Err(Error::Shape(format!(
                    "observation {j} refers to component {} of a {}-component state",
                    o.component, problem.state_dim
                )));
            }
            masks[o.component].get_or_insert_with(|| Mat::zeros(1, k)).set(0, j, 1.0);
        }
        let denominators = match kind {
            MisfitKind::Absolute => Mat::filled(1, k, 1.0),
            MisfitKind::Relative => Mat::row_vector(values.clone()),
        };
        Ok(DataTargets {
            points: dataset.observations.iter().map(|o| SpaceTimePoint::new(o.x, o.t)).collect(),
            masks,
            values: Mat::row_vector(values),
            denominators,
        })
    }
}

/// Everything the losses need besides the trainable variables.
#[derive(Clone, Debug)]
pub struct LossContext {
    pub problem: ProblemSpec,
    pub net: NetworkSpec,
    pub collocation: CollocationSet,
    pub data_kind: MisfitKind,
    data: DataTargets,
    ic_targets: Mat,
}

impl LossContext {
    pub fn new(problem: &ProblemSpec, net: &NetworkSpec, collocation: &CollocationSet, dataset: &Dataset) -> Result<Self> {
        Self::with_kind(problem, net, collocation, dataset, problem.data_loss)
    }

    pub fn with_kind(
        problem: &ProblemSpec,
        net: &NetworkSpec,
        collocation: &CollocationSet,
        dataset: &Dataset,
        data_kind: MisfitKind,
    ) -> Result<Self> {
        net.validate()?;
        if net.output_dim != problem.state_dim {
            return Err(Error::Shape(format!(
                "network has {} outputs, {} has {} state components",
                net.output_dim, problem.benchmark, problem.state_dim
            )));
        }
        let m = problem.state_dim;
        let n_ic = collocation.initial.len();
        let mut ic_targets = Mat::zeros(m, n_ic);
        for (j, p) in collocation.initial.iter().enumerate() {
            for (c, h) in problem.initial_state(p.x).into_iter().enumerate() {
                ic_targets.set(c, j, h);
            }
        }
        Ok(LossContext {
            problem: problem.clone(),
            net: net.clone(),
            collocation: collocation.clone(),
            data_kind,
            data: DataTargets::new(problem, dataset, data_kind)?,
            ic_targets,
        })
    }

    fn residual_order(&self) -> DerivativeOrder {
        match self.problem.benchmark {
            Benchmark::Reaction | Benchmark::FitzHughNagumo => DerivativeOrder::First,
            Benchmark::FisherKpp | Benchmark::Burgers => DerivativeOrder::Second,
        }
    }

    /// Data misfit of the network outputs at the observation points.
    pub fn data_loss<'t>(&self, tape: &'t Tape, params: &ParamVars<'t>) -> Result<Var<'t>> {
        let d = &self.data;
        let jets = eval_jet(&self.net, params, tape, &d.points, DerivativeOrder::Value)?;
        let mut pred: Option<Var<'t>> = None;
        for (jet, mask) in jets.iter().zip(&d.masks) {
            if let Some(mask) = mask {
                let term = jet.value * tape.var(mask.clone());
                pred = Some(match pred {
                    Some(p) => p + term,
                    None => term,
                });
            }
        }
        let pred = pred.expect("a nonempty dataset observes at least one component");
        let r = (pred - tape.var(d.values.clone())) / tape.var(d.denominators.clone());
        Ok(r.square().mean().sqrt())
    }

    /// Mean over collocation points of the squared residual norm.
    pub fn de_loss<'t>(&self, tape: &'t Tape, params: &ParamVars<'t>, eta: &[Var<'t>]) -> Result<Var<'t>> {
        if eta.len() != self.problem.param_dim() {
            return Err(Error::Shape(format!(
                "{} parameters given, {} expected",
                eta.len(),
                self.problem.param_dim()
            )));
        }
        let jets = eval_jet(&self.net, params, tape, &self.collocation.interior, self.residual_order())?;
        let spatial = self.problem.is_pde();
        let fields = StateFields {
            u: jets.iter().map(|j| j.value).collect(),
            u_t: jets.iter().map(|j| j.dt_or_zero()).collect(),
            u_x: if spatial { jets.iter().map(|j| j.dx_or_zero()).collect() } else { vec![] },
            u_xx: if spatial { jets.iter().map(|j| j.dxx_or_zero()).collect() } else { vec![] },
        };
        let residual = self.problem.residual(&fields, eta);
        Ok(sum_of_squares(&residual).mean())
    }

    /// Mean squared deviation from the initial state at `t = 0`.
    pub fn ic_loss<'t>(&self, tape: &'t Tape, params: &ParamVars<'t>) -> Result<Var<'t>> {
        let jets = eval_jet(&self.net, params, tape, &self.collocation.initial, DerivativeOrder::Value)?;
        let diffs: Vec<Var<'t>> = jets
            .iter()
            .enumerate()
            .map(|(c, j)| j.value - tape.var(Mat::row_vector(self.ic_targets.row(c).to_vec())))
            .collect();
        Ok(sum_of_squares(&diffs).mean())
    }

    /// Mean squared boundary operator on the boundary points; `None` when the
    /// problem has no boundary.
    pub fn bc_loss<'t>(&self, tape: &'t Tape, params: &ParamVars<'t>) -> Result<Option<Var<'t>>> {
        let Some(bc) = self.problem.boundary else {
            return Ok(None);
        };
        if self.collocation.boundary.is_empty() {
            return Err(Error::InvalidInput("boundary loss needs boundary points".into()));
        }
        let pts = &self.collocation.boundary;
        let terms: Vec<Var<'t>> = match bc {
            BoundaryCondition::Neumann => eval_jet(&self.net, params, tape, pts, DerivativeOrder::First)?
                .iter()
                .map(|j| j.dx_or_zero())
                .collect(),
            BoundaryCondition::Dirichlet(g) => eval_jet(&self.net, params, tape, pts, DerivativeOrder::Value)?
                .iter()
                .map(|j| j.value - g)
                .collect(),
        };
        Ok(Some(sum_of_squares(&terms).mean()))
    }

    /// All four losses on one tape.
    pub fn evaluate<'t>(&self, tape: &'t Tape, params: &ParamVars<'t>, eta: &[Var<'t>]) -> Result<LossTerms<Var<'t>>> {
        Ok(LossTerms {
            data: self.data_loss(tape, params)?,
            de: self.de_loss(tape, params, eta)?,
            ic: self.ic_loss(tape, params)?,
            bc: self.bc_loss(tape, params)?,
        })
    }
}

fn sum_of_squares<'t>(terms: &[Var<'t>]) -> Var<'t> {
    let mut acc = terms[0].square();
    for t in &terms[1..] {
        acc = acc + t.square();
    }
    acc
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub losses: LossVector,
    pub learning_rate: f64,
    pub eta: Vec<f64>,
    pub multipliers: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    pub param_names: Vec<String>,
    pub multiplier_names: Vec<String>,
    pub records: Vec<LossRecord>,
}

impl LossLog {
    pub fn new(param_names: &[&str], multiplier_names: &[String]) -> Self {
        LossLog {
            param_names: param_names.iter().map(|s| s.to_string()).collect(),
            multiplier_names: multiplier_names.to_vec(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(epoch, value)` series of one loss term.
    pub fn series(&self, pick: impl Fn(&LossVector) -> f64) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.epoch, pick(&r.losses))).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,L_data,L_de,L_ic,L_bc,lr");
        for p in &self.param_names {
            let _ = write!(out, ",eta_{p}");
        }
        for m in &self.multiplier_names {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        for r in &self.records {
            let l = &r.losses;
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                l.data,
                l.de,
                l.ic,
                l.bc_or_zero(),
                r.learning_rate
            );
            for v in r.eta.iter().chain(&r.multipliers) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_loss_examples() {
        assert_eq!(data_loss(&[1.0, 2.0], &[1.0, 2.0], MisfitKind::Absolute).unwrap(), 0.0);
        assert!((data_loss(&[1.3], &[1.0], MisfitKind::Absolute).unwrap() - 0.3).abs() < 1e-15);
        let rel = data_loss(&[1.1, 2.2], &[1.0, 2.0], MisfitKind::Relative).unwrap();
        assert!((rel - 0.1).abs() < 1e-12);
        assert!(matches!(
            data_loss(&[1.0, 1.0], &[1.0, 0.0], MisfitKind::Relative),
            Err(Error::ZeroDatum { index: 1 })
        ));
    }

    #[test]
    fn pinn_loss_examples() {
        let l = LossTerms { data: 1.0, de: 2.0, ic: 3.0, bc: Some(4.0) };
        assert_eq!(pinn_loss(&l, &LossWeights::default()), 10.0);
        let zero = LossWeights { data: 0.0, de: 0.0, ic: 0.0, bc: 0.0 };
        assert_eq!(pinn_loss(&l, &zero), 0.0);
        let data_only = LossWeights { data: 1.0, de: 0.0, ic: 0.0, bc: 0.0 };
        assert_eq!(pinn_loss(&l, &data_only), 1.0);
    }

    #[test]
    fn log_csv_layout() {
        let mut log = LossLog::new(&["k1"], &["lambda_de".to_string()]);
        log.records.push(LossRecord {
            epoch: 0,
            losses: LossTerms { data: 0.5, de: 0.25, ic: 0.125, bc: None },
            learning_rate: 0.01,
            eta: vec![1.5],
            multipliers: vec![0.0],
        });
        assert_eq!(log.to_csv(), "epoch,L_data,L_de,L_ic,L_bc,lr,eta_k1,lambda_de\n0,0.5,0.25,0.125,0,0.01,1.5,0\n");
    }
}
