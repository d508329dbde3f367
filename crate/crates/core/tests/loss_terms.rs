//! Loss terms against independent re-implementations and constant networks.

use cpinn::autodiff::{DerivativeOrder, Mat, Tape};
use cpinn::losses::LossContext;
use cpinn::network::{eval_jet, init_params, NetworkParams};
use cpinn::problems::{burgers_residual, generate_dataset, reaction_residual, ProblemSpec};
use cpinn::sampling::{build_collocation, CollocationCounts};
use cpinn::train::NetworkConfig;

fn small_counts(interior: usize) -> CollocationCounts {
    CollocationCounts { interior, initial: 8, boundary: 8, skip: 1 }
}

fn context(problem: &ProblemSpec, interior: usize) -> LossContext {
    let net = NetworkConfig::default().build(problem);
    let coll = build_collocation(problem, &small_counts(interior)).unwrap();
    let data = generate_dataset(problem, &problem.eta_true, 0.0, 0).unwrap();
    LossContext::new(problem, &net, &coll, &data).unwrap()
}

/// A network whose output is `values` everywhere: the output layer ignores
/// the hidden state and carries the constants in its bias.
fn constant_params(ctx: &LossContext, values: &[f64]) -> NetworkParams {
    let mut p = init_params(&ctx.net, 0);
    let last = p.layers.last_mut().unwrap();
    let (rows, cols) = last.weights.shape();
    last.weights = Mat::zeros(rows, cols);
    last.bias = Mat::from_vec(rows, 1, values.to_vec());
    p
}

fn losses(ctx: &LossContext, params: &NetworkParams, eta: &[f64]) -> (f64, f64, Option<f64>) {
    let tape = Tape::new();
    let vars = params.register(&tape);
    let eta: Vec<_> = eta.iter().map(|&e| tape.scalar(e)).collect();
    let l = ctx.evaluate(&tape, &vars, &eta).unwrap().values();
    (l.de, l.ic, l.bc)
}

/// Residual loss recomputed point by point from scalar jet values and the
/// plain `f64` residual.
#[test]
fn burgers_residual_loss_matches_pointwise_oracle() {
    let problem = ProblemSpec::burgers();
    let ctx = context(&problem, 16);
    let params = init_params(&ctx.net, 3);
    let (de, _, _) = losses(&ctx, &params, &problem.eta_true);

    let mut sum = 0.0;
    for p in &ctx.collocation.interior {
        let tape = Tape::new();
        let vars = params.register(&tape);
        let jet = &eval_jet(&ctx.net, &vars, &tape, &[*p], DerivativeOrder::Second).unwrap()[0];
        let r = burgers_residual(
            jet.value.item(),
            problem.eta_true[0],
            jet.dt_or_zero().item(),
            jet.dx_or_zero().item(),
            jet.dxx_or_zero().item(),
        );
        sum += r * r;
    }
    let oracle = sum / ctx.collocation.interior.len() as f64;
    assert_eq!(ctx.collocation.interior.len(), 16);
    assert!((de - oracle).abs() <= 1e-12 * oracle.max(1.0), "{de} vs {oracle}");
}

#[test]
fn constant_networks() {
    // Fisher–KPP: u ≡ 1 is a fixed point and satisfies zero flux
    let fisher = ProblemSpec::fisher_kpp();
    let ctx = context(&fisher, 32);
    let (de, _, bc) = losses(&ctx, &constant_params(&ctx, &[1.0]), &fisher.eta_true);
    assert!(de.abs() < 1e-24, "{de}");
    assert_eq!(bc, Some(0.0));

    // Burgers: both faces demand zero, so L_bc = c²
    let burgers = ProblemSpec::burgers();
    let ctx = context(&burgers, 32);
    let (_, _, bc) = losses(&ctx, &constant_params(&ctx, &[0.3]), &burgers.eta_true);
    assert!((bc.unwrap() - 0.09).abs() < 1e-15);

    // reaction: constant at the initial state gives the initial-rate residual everywhere
    let reaction = ProblemSpec::reaction();
    let ctx = context(&reaction, 32);
    let u0 = [1.0, 0.0, 0.2, 0.0];
    let (de, ic, bc) = losses(&ctx, &constant_params(&ctx, &u0), &reaction.eta_true);
    let eta: [f64; 4] = reaction.eta_true.clone().try_into().unwrap();
    let expected: f64 = reaction_residual(u0, eta, [0.0; 4]).iter().map(|r| r * r).sum();
    assert!((de - expected).abs() < 1e-12 * expected, "{de} vs {expected}");
    assert!(ic < 1e-30);
    assert_eq!(bc, None);
}
