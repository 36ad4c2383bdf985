use cirlab::model::{mean_at, BesselParams};
use cirlab::paths::sample_bm;
use cirlab::sampling::{derive, SeedSpec};
use cirlab::schemes::{reference_solve, solve_path, step, Coefficients, SchemeKind, SolveOptions};
use cirlab::stats::summarize;

fn terminal(kind: SchemeKind, c: &Coefficients, x0: f64, n: usize, seed: u64, rep: u64) -> f64 {
    let mut g = derive(SeedSpec::new(seed, 1, rep));
    let w = sample_bm(&mut g, n, 1.0 / n as f64).unwrap();
    let rng = (!kind.is_pathwise()).then_some(&mut g);
    solve_path(kind, c, x0, &w, SolveOptions::for_kind(kind), rng).unwrap().terminal_value
}

#[test]
fn every_scheme_reproduces_the_mean() {
    let p = BesselParams::new(2.0, 1.0, 1.0).unwrap();
    let c = Coefficients::from(&p);
    let target = mean_at(&p, 1.0);
    for kind in SchemeKind::ALL {
        let xs: Vec<f64> = (0..40_000).map(|i| terminal(kind, &c, 1.0, 64, 3, i)).collect();
        let s = summarize(&xs);
        assert!(
            (s.mean - target).abs() <= 3.5 * s.std_error + 0.01,
            "{kind}: {} vs {target}",
            s.mean
        );
    }
}

#[test]
fn nonnegativity_of_truncating_schemes() {
    let c = Coefficients { a: 0.6, b: 0.5, sigma: 1.5 };
    for kind in SchemeKind::ALL {
        for rep in 0..200 {
            let mut g = derive(SeedSpec::new(9, 2, rep));
            let w = sample_bm(&mut g, 64, 1.0 / 64.0).unwrap();
            let rng = (!kind.is_pathwise()).then_some(&mut g);
            let r = solve_path(kind, &c, 0.1, &w, SolveOptions::for_kind(kind).recording(), rng).unwrap();
            let path = r.path.unwrap();
            assert!(path.values().iter().all(|x| x.is_finite()), "{kind}");
            if kind != SchemeKind::EulerFullTruncation {
                assert!(path.values().iter().all(|&x| x >= 0.0), "{kind}");
            }
        }
    }
}

#[test]
fn truncated_milstein_self_converges() {
    let p = BesselParams::new(1.0, 0.0, 0.0).unwrap();
    let c = Coefficients::from(&p);
    let err = |n: usize| {
        let xs: Vec<f64> = (0..4000)
            .map(|i| {
                let mut g = derive(SeedSpec::new(11, 3, i));
                let w = sample_bm(&mut g, n, 1.0 / n as f64).unwrap();
                let kind = SchemeKind::TruncatedMilstein;
                let coarse = solve_path(kind, &c, 0.0, &w, SolveOptions::for_kind(kind), None).unwrap();
                (coarse.terminal_value - reference_solve(&c, 0.0, &w, 32, &mut g).unwrap()).abs()
            })
            .collect();
        summarize(&xs).mean
    };
    assert!(err(64) < 0.5 * err(4));
}

#[test]
fn truncated_milstein_single_step_formula() {
    let c = Coefficients { a: 1.0, b: 0.0, sigma: 0.5 };
    let x = step(SchemeKind::TruncatedMilstein, &c, 1.0, 0.0, 0.5).unwrap();
    let expected = 1.0 + 0.5 + 0.0625 * (0.0 - 0.5);
    assert!((x - expected).abs() < 1e-15);
}

#[test]
fn drift_implicit_rejects_small_drift() {
    let c = Coefficients { a: 0.1, b: 0.0, sigma: 1.0 };
    assert!(SchemeKind::DriftImplicitSqrt.validate(&c).is_err());
    assert!(step(SchemeKind::DriftImplicitSqrt, &c, 1.0, 0.1, 0.1).is_err());
}
