//! Reduced-scale version of the invariant suite, for `cirlab selftest`.

use std::io::Write;

use crate::experiments::{
    build_coupled_drivers, exact_mean, fit_rate, strong_error, CouplingVariant,
};
use crate::model::{chi_moment, mean_at, BesselParams};
use crate::paths::{bridge_cov, sample_bm, sample_bridge};
use crate::sampling::{derive, SeedSpec};
use crate::schemes::{Coefficients, SchemeKind};
use crate::special::integrate;
use crate::stats::{chi_square_cdf, covariance_with_error, ks_one_sample, ks_two_sample};

use super::{EXIT_NUMERICAL, EXIT_OK};

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn closed_form_mean(seed: u64) -> Check {
    let p = BesselParams::new(0.5, 1.0, 2.0).unwrap();
    let s = exact_mean(&p, 1.0, 100_000, seed).unwrap();
    let target = mean_at(&p, 1.0);
    Check {
        name: "exact transition mean matches closed form",
        passed: (s.mean - target).abs() <= 3.0 * s.std_error,
        detail: format!("mc {:.6} ± {:.6}, closed form {:.6}", s.mean, s.std_error, target),
    }
}

fn chi_moment_quadrature() -> Check {
    let mut worst = 0.0f64;
    for &delta in &[0.25, 0.5, 1.0, 1.5, 1.9] {
        let k = delta / 2.0;
        let nu = 1.0 - k;
        // E[X^ν] for X ~ χ²_δ, with x = s² to tame the x^{k−1} singularity
        let ln_norm = k * 2f64.ln() + crate::special::ln_gamma(k);
        let integrand =
            |s: f64| 2.0 * s.powf(2.0 * (nu + k) - 1.0) * (-0.5 * s * s - ln_norm).exp();
        let q = integrate(integrand, 0.0, 20.0, 1e-12);
        worst = worst.max((q - chi_moment(delta).unwrap()).abs());
    }
    Check {
        name: "chi-square fractional moment matches quadrature",
        passed: worst < 1e-8,
        detail: format!("max abs diff {worst:.2e}"),
    }
}

fn exact_sampler_ks(seed: u64) -> Check {
    let p = BesselParams::new(0.5, 0.0, 0.0).unwrap();
    let mut g = derive(SeedSpec::new(seed, 901, 0));
    let xs: Vec<f64> = (0..20_000)
        .map(|_| g.exact_bessel_transition(0.0, &p, 0.01) / 0.01)
        .collect();
    let ks = ks_one_sample(&xs, |x| chi_square_cdf(0.5, x.max(0.0)));
    Check {
        name: "Z_eps/eps from zero is chi-square(delta)",
        passed: ks.passes(0.01),
        detail: format!("KS D = {:.4}, p = {:.3}", ks.statistic, ks.p_value),
    }
}

fn chapman_kolmogorov(seed: u64) -> Check {
    let p = BesselParams::new(0.5, 1.0, 1.0).unwrap();
    let mut g = derive(SeedSpec::new(seed, 902, 0));
    let h = 0.25;
    let one: Vec<f64> = (0..20_000)
        .map(|_| g.exact_bessel_transition(1.0, &p, 2.0 * h))
        .collect();
    let two: Vec<f64> = (0..20_000)
        .map(|_| {
            let mid = g.exact_bessel_transition(1.0, &p, h);
            g.exact_bessel_transition(mid, &p, h)
        })
        .collect();
    let ks = ks_two_sample(&one, &two);
    Check {
        name: "one exact step of 2h equals two steps of h in law",
        passed: ks.passes(0.01),
        detail: format!("KS D = {:.4}, p = {:.3}", ks.statistic, ks.p_value),
    }
}

fn coupling_exactness(seed: u64) -> Check {
    let c = Coefficients::from(&BesselParams::new(0.5, 0.0, 0.0).unwrap());
    let mut failures = 0;
    for i in 0..20u64 {
        let n = 4 + (i as usize % 5) * 3;
        let ff = 8;
        for variant in [
            CouplingVariant::FullConditionalRefill,
            CouplingVariant::SingleCellAfterZeroHit,
        ] {
            let mut g = derive(SeedSpec::new(seed, 903, i));
            let d = build_coupled_drivers(variant, &c, 0.0, n, ff, &mut g).unwrap();
            let a = d.triangle.subsample(ff).unwrap();
            let b = d.boxed.subsample(ff).unwrap();
            if a.values() != b.values() {
                failures += 1;
            }
        }
    }
    Check {
        name: "coupled drivers agree bitwise on the coarse grid",
        passed: failures == 0,
        detail: format!("{failures} failures in 40 configurations"),
    }
}

fn bridge_covariance(seed: u64) -> Check {
    let mut g = derive(SeedSpec::new(seed, 904, 0));
    let draws: Vec<Vec<f64>> = (0..20_000)
        .map(|_| sample_bridge(&mut g, 4).unwrap().values().to_vec())
        .collect();
    let s: Vec<f64> = draws.iter().map(|v| v[1]).collect();
    let t: Vec<f64> = draws.iter().map(|v| v[3]).collect();
    let (cov, se) = covariance_with_error(&s, &t);
    let target = bridge_cov(0.25, 0.75, 1.0);
    Check {
        name: "bridge covariance min(s,t) - st",
        passed: (cov - target).abs() <= 3.0 * se,
        detail: format!("{cov:.5} ± {se:.5} vs {target}"),
    }
}

fn bm_covariance(seed: u64) -> Check {
    let mut g = derive(SeedSpec::new(seed, 905, 0));
    let draws: Vec<Vec<f64>> = (0..20_000)
        .map(|_| sample_bm(&mut g, 4, 0.25).unwrap().into_values())
        .collect();
    let s: Vec<f64> = draws.iter().map(|v| v[1]).collect();
    let t: Vec<f64> = draws.iter().map(|v| v[3]).collect();
    let (cov, se) = covariance_with_error(&s, &t);
    Check {
        name: "Brownian covariance min(s,t)",
        passed: (cov - 0.25).abs() <= 3.0 * se,
        detail: format!("{cov:.5} ± {se:.5} vs 0.25"),
    }
}

fn power_law_fit() -> Check {
    let pts: Vec<(f64, f64)> = [8.0f64, 16.0, 32.0, 64.0]
        .iter()
        .map(|&n| (n, 3.0 * n.powf(-0.25)))
        .collect();
    let fit = fit_rate(&pts).unwrap();
    Check {
        name: "log-log fit recovers an exact power law",
        passed: (fit.slope + 0.25).abs() < 1e-12,
        detail: format!("slope {:.6}", fit.slope),
    }
}

fn thread_independence(seed: u64) -> Check {
    let p = BesselParams::new(0.5, 0.0, 0.0).unwrap();
    let run = |k: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .unwrap()
            .install(|| strong_error(SchemeKind::TruncatedMilstein, &p, 8, 200, 8, seed).unwrap())
    };
    let (a, b) = (run(1), run(3));
    Check {
        name: "estimates independent of worker count",
        passed: a == b,
        detail: format!("{} vs {}", a.mean_abs_error, b.mean_abs_error),
    }
}

/// Runs every check, prints one line each, and returns the exit code.
pub fn run(seed: u64, out: &mut dyn Write) -> i32 {
    let checks = vec![
        closed_form_mean(seed),
        chi_moment_quadrature(),
        exact_sampler_ks(seed),
        chapman_kolmogorov(seed),
        coupling_exactness(seed),
        bridge_covariance(seed),
        bm_covariance(seed),
        power_law_fit(),
        thread_independence(seed),
    ];
    let mut failed = 0;
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{tag}  {}  ({})", c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    let _ = writeln!(out, "{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_NUMERICAL
    }
}
