//! Network training: the constrained (multiplier) trainer and the
//! weighted-sum baseline, sharing one setup so both see identical inputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::losses::{pinn_loss, LossContext, LossLog, LossRecord, LossTerms, LossVector, LossWeights};
use crate::metrics::beta;
use crate::network::{init_params, FourierConfig, NetworkParams, NetworkSpec};
use crate::optim::{
    augmented_lagrangian, infeasibility, mdmm_step, AdanConfig, AdanState, ConstrainedProblem, LagrangianEval,
    LrSchedule, MdmmState, MultiplierState,
};
use crate::problems::{Benchmark, Dataset, ProblemSpec};
use crate::sampling::{build_collocation, CollocationCounts, CollocationSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pinnverse,
    Pinn,
    NelderMead,
}

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Pinnverse => "pinnverse",
            Method::Pinn => "pinn",
            Method::NelderMead => "nelder-mead",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Number of Fourier harmonics on the spatial input; `None` uses 10 for
    /// Burgers and none elsewhere, `Some(0)` disables them.
    pub fourier_features: Option<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { hidden_layers: 2, hidden_width: 20, fourier_features: None }
    }
}

impl NetworkConfig {
    pub fn build(&self, problem: &ProblemSpec) -> NetworkSpec {
        let mut spec = match problem.space {
            None => NetworkSpec::ode(problem.state_dim, problem.horizon),
            Some(space) => {
                let k = self
                    .fourier_features
                    .unwrap_or(if problem.benchmark == Benchmark::Burgers { 10 } else { 0 });
                let fourier = (k > 0).then(|| FourierConfig::harmonics(k));
                NetworkSpec::pde(problem.state_dim, problem.horizon, space, fourier)
            }
        };
        spec.hidden_layers = self.hidden_layers;
        spec.hidden_width = self.hidden_width;
        spec
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Network initialisation seed.
    pub seed: u64,
    /// Relative offset of the initial parameter guess, `η_start = (1+ξ)η_true`.
    pub xi: f64,
    /// `None` uses the per-benchmark defaults.
    pub collocation: Option<CollocationCounts>,
    pub network: NetworkConfig,
    pub adan: AdanConfig,
    pub schedule: LrSchedule,
    /// Initial penalty coefficients c_i = d_j.
    pub penalty: f64,
    pub weights: LossWeights,
    /// Any loss above this aborts the run.
    pub divergence_threshold: f64,
    /// Consecutive rejected steps tolerated before aborting.
    pub max_rejections: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50_000,
            seed: 0,
            xi: 0.0,
            collocation: None,
            network: NetworkConfig::default(),
            adan: AdanConfig::default(),
            schedule: LrSchedule::default(),
            penalty: 1.0,
            weights: LossWeights::default(),
            divergence_threshold: 1e8,
            max_rejections: 3,
        }
    }
}

impl TrainConfig {
    pub fn collocation_counts(&self, problem: &ProblemSpec) -> CollocationCounts {
        self.collocation.unwrap_or_else(|| CollocationCounts::for_spec(problem))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(self.penalty > 0.0) {
            return Err(Error::Config("penalty must be positive".into()));
        }
        if !(self.xi > -1.0) {
            return Err(Error::Config("xi must exceed -1".into()));
        }
        if self.network.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be positive".into()));
        }
        self.adan.validate()
    }
}

/// Inputs shared by both network trainers for one scenario.
#[derive(Clone, Debug)]
pub struct Session {
    pub problem: ProblemSpec,
    pub net: NetworkSpec,
    pub collocation: CollocationSet,
    pub context: LossContext,
    pub init: NetworkParams,
    pub eta_start: Vec<f64>,
}

impl Session {
    pub fn new(problem: &ProblemSpec, dataset: &Dataset, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let net = config.network.build(problem);
        let collocation = build_collocation(problem, &config.collocation_counts(problem))?;
        let context = LossContext::new(problem, &net, &collocation, dataset)?;
        let init = init_params(&net, config.seed);
        let eta_start = problem.eta_true.iter().map(|e| (1.0 + config.xi) * e).collect();
        Ok(Session { problem: problem.clone(), net, collocation, context, init, eta_start })
    }

    pub fn constraint_names(&self) -> Vec<String> {
        let mut names = vec!["lambda_de".to_string(), "lambda_ic".to_string()];
        if self.problem.boundary.is_some() {
            names.push("lambda_bc".to_string());
        }
        names.extend(self.problem.param_names.iter().map(|p| format!("chi_{p}")));
        names
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainStatus {
    Completed,
    Diverged { epoch: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub method: Method,
    pub benchmark: Benchmark,
    pub eta_est: Vec<f64>,
    pub eta_true: Vec<f64>,
    pub beta: f64,
    pub final_losses: LossVector,
    /// Bound violations `V_j` of the final estimate.
    pub infeasibility: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub status: TrainStatus,
    pub net: NetworkSpec,
    pub params: NetworkParams,
    pub multipliers: Option<MultiplierState>,
    pub log: LossLog,
}

/// The JSON-serialisable part of a [`TrainResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub method: Method,
    pub benchmark: Benchmark,
    pub eta_est: Vec<f64>,
    pub eta_true: Vec<f64>,
    pub beta: f64,
    pub final_losses: LossVector,
    pub infeasibility: Vec<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub status: TrainStatus,
}

impl TrainResult {
    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            method: self.method,
            benchmark: self.benchmark,
            eta_est: self.eta_est.clone(),
            eta_true: self.eta_true.clone(),
            beta: self.beta,
            final_losses: self.final_losses,
            infeasibility: self.infeasibility.clone(),
            epochs: self.epochs,
            seed: self.seed,
            status: self.status.clone(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.summary())?)?;
        Ok(())
    }

    pub fn is_completed(&self) -> bool {
        self.status == TrainStatus::Completed
    }

    /// Errors if training aborted.
    pub fn completed(self) -> Result<Self> {
        match &self.status {
            TrainStatus::Completed => Ok(self),
            TrainStatus::Diverged { epoch, reason } => Err(Error::Diverged { epoch: *epoch, reason: reason.clone() }),
        }
    }
}

fn flatten(grads: &[Mat]) -> Vec<f64> {
    grads.iter().flat_map(|g| g.as_slice().iter().copied()).collect()
}

/// The augmented-Lagrangian view of network training: primal variables are
/// the flat network parameters followed by the raw model parameters.
struct PinnverseProblem<'a> {
    session: &'a Session,
    net_len: usize,
    last: Option<LossVector>,
}

impl PinnverseProblem<'_> {
    fn split<'t>(&self, tape: &'t Tape, primal: &[f64]) -> Result<(crate::network::ParamVars<'t>, Vec<Var<'t>>)> {
        let params = NetworkParams::from_flat(&self.session.net, &primal[..self.net_len])?;
        let vars = params.register(tape);
        let eta = primal[self.net_len..].iter().map(|&e| tape.scalar(e)).collect();
        Ok((vars, eta))
    }
}

impl ConstrainedProblem for PinnverseProblem<'_> {
    fn num_constraints(&self) -> usize {
        self.session.problem.num_constraints()
    }

    fn num_bounds(&self) -> usize {
        self.session.problem.param_dim()
    }

    fn evaluate(&mut self, primal: &[f64], mult: &MultiplierState) -> Result<LagrangianEval> {
        let problem = &self.session.problem;
        let tape = Tape::new();
        let (vars, eta) = self.split(&tape, primal)?;
        let losses = self.session.context.evaluate(&tape, &vars, &eta)?;
        let values = losses.values();
        self.last = Some(values);
        let v: Vec<Var> = eta
            .iter()
            .enumerate()
            .map(|(j, &e)| infeasibility(e, problem.eta_lower[j], problem.eta_upper[j]))
            .collect();
        let la = augmented_lagrangian(losses.data, &losses.constraints(), &v, mult);
        let mut leaves = vars.leaves();
        leaves.extend_from_slice(&eta);
        let gradient = flatten(&tape.gradients(la, &leaves)?);
        Ok(LagrangianEval {
            objective: values.data,
            constraints: values.constraints(),
            infeasibilities: v.iter().map(|x| x.item()).collect(),
            value: la.item(),
            gradient,
        })
    }
}

fn bound_violations(problem: &ProblemSpec, eta: &[f64]) -> Vec<f64> {
    eta.iter()
        .enumerate()
        .map(|(j, &e)| infeasibility(e, problem.eta_lower[j], problem.eta_upper[j]))
        .collect()
}

fn diverged(losses: &LossVector, threshold: f64) -> Option<String> {
    let worst = [losses.data, losses.de, losses.ic, losses.bc_or_zero()]
        .into_iter()
        .fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v) });
    if !worst.is_finite() {
        Some("non-finite loss".into())
    } else if worst > threshold {
        Some(format!("loss {worst:e} exceeds {threshold:e}"))
    } else {
        None
    }
}

/// Constrained training: minimise the data loss subject to vanishing
/// residual/IC/BC losses and parameter bounds, with Adan on the primal
/// variables and multiplier ascent.
pub fn train_pinnverse(problem: &ProblemSpec, dataset: &Dataset, config: &TrainConfig) -> Result<TrainResult> {
    let session = Session::new(problem, dataset, config)?;
    train_pinnverse_session(&session, config)
}

pub fn train_pinnverse_session(session: &Session, config: &TrainConfig) -> Result<TrainResult> {
    let problem = &session.problem;
    let net_len = session.init.num_scalars();
    let mut primal = session.init.to_flat();
    primal.extend_from_slice(&session.eta_start);
    let mults = MultiplierState::new(problem.num_constraints(), problem.param_dim(), config.penalty);
    let mut state = MdmmState::new(primal, mults, config.adan);
    let mut objective = PinnverseProblem { session, net_len, last: None };
    let mut log = LossLog::new(&problem.param_names, &session.constraint_names());
    let mut status = TrainStatus::Completed;
    let mut rejections = 0;
    let mut epochs = 0;

    for epoch in 0..config.epochs {
        let lr = config.schedule.rate(epoch, config.epochs);
        let eta_before = state.primal[net_len..].to_vec();
        let mult_before = state.multipliers.flat();
        match mdmm_step(&mut objective, &mut state, lr) {
            Ok(_) => {
                rejections = 0;
                let losses = objective.last.expect("evaluate records losses");
                log.records.push(LossRecord {
                    epoch,
                    losses,
                    learning_rate: lr,
                    eta: eta_before,
                    multipliers: mult_before,
                });
                epochs = epoch + 1;
                if let Some(reason) = diverged(&losses, config.divergence_threshold) {
                    status = TrainStatus::Diverged { epoch, reason };
                    break;
                }
            }
            Err(Error::StepRejected { reason, .. }) => {
                rejections += 1;
                log::warn!("epoch {epoch}: step rejected ({reason})");
                if rejections > config.max_rejections {
                    status = TrainStatus::Diverged { epoch, reason };
                    break;
                }
            }
            Err(e) => {
                status = TrainStatus::Diverged { epoch, reason: e.to_string() };
                break;
            }
        }
    }

    let eta_est = state.primal[net_len..].to_vec();
    let params = NetworkParams::from_flat(&session.net, &state.primal[..net_len])?;
    let final_losses = match objective.evaluate(&state.primal, &state.multipliers) {
        Ok(e) => LossTerms { data: e.objective, ..objective.last.expect("evaluate records losses") },
        Err(_) => last_logged(&log),
    };
    Ok(TrainResult {
        method: Method::Pinnverse,
        benchmark: problem.benchmark,
        beta: beta(&problem.eta_true, &eta_est)?,
        infeasibility: bound_violations(problem, &eta_est),
        eta_est,
        eta_true: problem.eta_true.clone(),
        final_losses,
        epochs,
        seed: config.seed,
        status,
        net: session.net.clone(),
        params,
        multipliers: Some(state.multipliers),
        log,
    })
}

fn last_logged(log: &LossLog) -> LossVector {
    log.records.last().map(|r| r.losses).unwrap_or(LossTerms {
        data: f64::NAN,
        de: f64::NAN,
        ic: f64::NAN,
        bc: None,
    })
}

/// Weighted-sum training with positivity by `η = exp(φ)` and no bounds.
pub fn train_pinn(problem: &ProblemSpec, dataset: &Dataset, config: &TrainConfig) -> Result<TrainResult> {
    let session = Session::new(problem, dataset, config)?;
    train_pinn_session(&session, config)
}

/// Weighted-sum losses and gradient at `primal = [network…, φ…]`.
fn pinn_evaluate(session: &Session, weights: &LossWeights, primal: &[f64]) -> Result<(LossVector, Vec<f64>)> {
    let net_len = session.init.num_scalars();
    let tape = Tape::new();
    let params = NetworkParams::from_flat(&session.net, &primal[..net_len])?;
    let vars = params.register(&tape);
    let phi: Vec<Var> = primal[net_len..].iter().map(|&p| tape.scalar(p)).collect();
    let eta: Vec<Var> = phi.iter().map(|p| p.exp()).collect();
    let losses = session.context.evaluate(&tape, &vars, &eta)?;
    let total = pinn_loss(&losses, weights);
    let mut leaves = vars.leaves();
    leaves.extend_from_slice(&phi);
    let gradient = flatten(&tape.gradients(total, &leaves)?);
    Ok((losses.values(), gradient))
}

pub fn train_pinn_session(session: &Session, config: &TrainConfig) -> Result<TrainResult> {
    let problem = &session.problem;
    for (j, e) in session.eta_start.iter().enumerate() {
        if !(*e > 0.0) {
            return Err(Error::InvalidInput(format!(
                "log-parameterised start needs positive parameters; {} = {e}",
                problem.param_names[j]
            )));
        }
    }
    let net_len = session.init.num_scalars();
    let mut primal = session.init.to_flat();
    primal.extend(session.eta_start.iter().map(|e| e.ln()));
    let mut adan = AdanState::new(primal.len(), config.adan);
    let mut log = LossLog::new(&problem.param_names, &[]);
    let mut status = TrainStatus::Completed;
    let mut rejections = 0;
    let mut epochs = 0;
    let eta_of = |p: &[f64]| p[net_len..].iter().map(|v| v.exp()).collect::<Vec<f64>>();

    for epoch in 0..config.epochs {
        let lr = config.schedule.rate(epoch, config.epochs);
        let (losses, grad) = match pinn_evaluate(session, &config.weights, &primal) {
            Ok(v) => v,
            Err(e) => {
                status = TrainStatus::Diverged { epoch, reason: e.to_string() };
                break;
            }
        };
        log.records.push(LossRecord {
            epoch,
            losses,
            learning_rate: lr,
            eta: eta_of(&primal),
            multipliers: vec![],
        });
        epochs = epoch + 1;
        if let Some(reason) = diverged(&losses, config.divergence_threshold) {
            status = TrainStatus::Diverged { epoch, reason };
            break;
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            rejections += 1;
            log::warn!("epoch {epoch}: step rejected (non-finite gradient entry {i})");
            if rejections > config.max_rejections {
                status = TrainStatus::Diverged { epoch, reason: format!("non-finite gradient entry {i}") };
                break;
            }
            continue;
        }
        rejections = 0;
        adan.apply(&mut primal, &grad, lr);
    }

    let eta_est = eta_of(&primal);
    let params = NetworkParams::from_flat(&session.net, &primal[..net_len])?;
    let final_losses = pinn_evaluate(session, &config.weights, &primal)
        .map(|(l, _)| l)
        .unwrap_or_else(|_| last_logged(&log));
    Ok(TrainResult {
        method: Method::Pinn,
        benchmark: problem.benchmark,
        beta: beta(&problem.eta_true, &eta_est)?,
        infeasibility: bound_violations(problem, &eta_est),
        eta_est,
        eta_true: problem.eta_true.clone(),
        final_losses,
        epochs,
        seed: config.seed,
        status,
        net: session.net.clone(),
        params,
        multipliers: None,
        log,
    })
}
