//! Network input derivatives against central finite differences of `predict`.

use cpinn::autodiff::{DerivativeOrder, Tape};
use cpinn::network::{eval_jet, init_params, predict, SpaceTimePoint};
use cpinn::problems::ProblemSpec;
use cpinn::train::NetworkConfig;

fn points(problem: &ProblemSpec) -> Vec<SpaceTimePoint> {
    let (x0, x1) = problem.space.unwrap_or((0.0, 0.0));
    (0..7)
        .map(|i| {
            let s = (i as f64 + 0.37) / 7.0;
            SpaceTimePoint::new(x0 + (x1 - x0) * (1.0 - s * s), problem.horizon * s)
        })
        .collect()
}

fn check(problem: &ProblemSpec, seed: u64) {
    let net = NetworkConfig::default().build(problem);
    let params = init_params(&net, seed);
    let pts = points(problem);
    let tape = Tape::new();
    let vars = params.register(&tape);
    let jets = eval_jet(&net, &vars, &tape, &pts, DerivativeOrder::Second).unwrap();
    let shifted = |dx: f64, dt: f64| {
        let p: Vec<_> = pts.iter().map(|p| SpaceTimePoint::new(p.x + dx, p.t + dt)).collect();
        predict(&net, &params, &p).unwrap()
    };
    let base = shifted(0.0, 0.0);
    let ht = 1e-4 * problem.horizon;
    let (tp, tm) = (shifted(0.0, ht), shifted(0.0, -ht));
    for (c, jet) in jets.iter().enumerate() {
        for j in 0..pts.len() {
            assert!((jet.value.value().get(0, j) - base.get(c, j)).abs() < 1e-12);
            let fd = (tp.get(c, j) - tm.get(c, j)) / (2.0 * ht);
            let ad = jet.dt_or_zero().value().get(0, j);
            assert!((fd - ad).abs() < 1e-6 * (1.0 + ad.abs()), "{:?} u_t comp {c} pt {j}: {ad} vs {fd}", problem.benchmark);
        }
    }
    if let Some((x0, x1)) = problem.space {
        let hx = 1e-4 * (x1 - x0);
        let (xp, xm) = (shifted(hx, 0.0), shifted(-hx, 0.0));
        // the first derivative needs a finer step to resolve the highest harmonics
        let h1 = 1e-6 * (x1 - x0);
        let (x1p, x1m) = (shifted(h1, 0.0), shifted(-h1, 0.0));
        for (c, jet) in jets.iter().enumerate() {
            for j in 0..pts.len() {
                let fd1 = (x1p.get(c, j) - x1m.get(c, j)) / (2.0 * h1);
                let fd2 = (xp.get(c, j) - 2.0 * base.get(c, j) + xm.get(c, j)) / (hx * hx);
                let d1 = jet.dx_or_zero().value().get(0, j);
                let d2 = jet.dxx_or_zero().value().get(0, j);
                assert!((fd1 - d1).abs() < 1e-6 * (1.0 + d1.abs()), "u_x: {d1} vs {fd1}");
                assert!((fd2 - d2).abs() < 1e-3 * (1.0 + d2.abs()), "u_xx: {d2} vs {fd2}");
            }
        }
    }
}

#[test]
fn jets_match_finite_differences() {
    for problem in [ProblemSpec::reaction(), ProblemSpec::fitzhugh_nagumo(), ProblemSpec::fisher_kpp(), ProblemSpec::burgers()] {
        for seed in 0..3 {
            check(&problem, seed);
        }
    }
}
