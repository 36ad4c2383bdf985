use cirlab::model::{mean_at, BesselParams};
use cirlab::sampling::{derive, SeedSpec};
use cirlab::stats::{gamma_cdf, ks_one_sample, ks_two_sample, normal_cdf, summarize};

const SEED: u64 = 77;

#[test]
fn normal_draws_pass_ks() {
    let mut g = derive(SeedSpec::new(SEED, 1, 0));
    let xs: Vec<f64> = (0..50_000).map(|_| g.std_normal()).collect();
    assert!(ks_one_sample(&xs, normal_cdf).passes(0.01));
}

#[test]
fn gamma_draws_pass_ks() {
    let mut g = derive(SeedSpec::new(SEED, 2, 0));
    let xs: Vec<f64> = (0..50_000).map(|_| g.gamma(2.5)).collect();
    assert!(ks_one_sample(&xs, |x| gamma_cdf(2.5, x.max(0.0))).passes(0.01));
}

#[test]
fn noncentral_chisq_mean_and_variance() {
    let (df, lambda) = (0.5, 3.0);
    let mut g = derive(SeedSpec::new(SEED, 3, 0));
    let xs: Vec<f64> = (0..200_000).map(|_| g.noncentral_chisq(df, lambda)).collect();
    let s = summarize(&xs);
    assert!((s.mean - (df + lambda)).abs() <= 3.0 * s.std_error);
    let var = xs.iter().map(|x| (x - s.mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    let target = 2.0 * (df + 2.0 * lambda);
    assert!((var - target).abs() < 0.03 * target, "{var} vs {target}");
}

#[test]
fn chapman_kolmogorov_triples() {
    for (k, &(z, delta, b)) in [(0.0, 1.0, 0.0), (1.0, 0.5, 1.0), (2.0, 1.5, 0.5)].iter().enumerate() {
        let p = BesselParams::new(delta, b, z).unwrap();
        let mut g = derive(SeedSpec::new(SEED, 4, k as u64));
        let one: Vec<f64> = (0..40_000).map(|_| g.exact_bessel_transition(z, &p, 0.4)).collect();
        let two: Vec<f64> = (0..40_000)
            .map(|_| {
                let m = g.exact_bessel_transition(z, &p, 0.2);
                g.exact_bessel_transition(m, &p, 0.2)
            })
            .collect();
        assert!(ks_two_sample(&one, &two).passes(0.01), "triple {k}");
    }
}

#[test]
fn exact_transition_mean() {
    for &(delta, b, z) in &[(0.5, 1.0, 2.0), (1.0, 0.5, 0.3), (3.0, 0.0, 0.0)] {
        let p = BesselParams::new(delta, b, z).unwrap();
        let mut g = derive(SeedSpec::new(SEED, 5, 0));
        let xs: Vec<f64> = (0..100_000).map(|_| g.exact_bessel_transition(z, &p, 0.7)).collect();
        let s = summarize(&xs);
        let target = mean_at(&p, 0.7);
        assert!((s.mean - target).abs() <= 3.5 * s.std_error, "{} vs {target}", s.mean);
    }
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let a: Vec<u64> = { let mut g = derive(SeedSpec::new(1, 2, 3)); (0..8).map(|_| g.next_u64()).collect() };
    let b: Vec<u64> = { let mut g = derive(SeedSpec::new(1, 2, 3)); (0..8).map(|_| g.next_u64()).collect() };
    let c: Vec<u64> = { let mut g = derive(SeedSpec::new(1, 2, 4)); (0..8).map(|_| g.next_u64()).collect() };
    let d: Vec<u64> = { let mut g = derive(SeedSpec::new(1, 3, 3)); (0..8).map(|_| g.next_u64()).collect() };
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_ne!(a, d);
}
