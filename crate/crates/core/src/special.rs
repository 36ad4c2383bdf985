//! Special functions and quadrature used by the closed-form model quantities.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function via the Lanczos approximation (g = 7, 9 terms) with
/// reflection below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(mid);
    let mut kronrod = GK_KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GK_GAUSS_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += GK_KRONROD_WEIGHTS[j] * pair;
        // odd indices are the embedded Gauss nodes
        if j % 2 == 1 {
            gauss += GK_GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss-Kronrod quadrature of `f` over the finite
/// interval `[lo, hi]` to absolute tolerance `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, abs_tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 2_000;
    let (value, err) = gauss_kronrod(&f, lo, hi);
    let mut intervals = vec![(lo, hi, value, err)];
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= abs_tol || intervals.len() >= MAX_INTERVALS {
            break;
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .expect("non-empty interval list");
        let (a, b, _, _) = intervals.swap_remove(worst);
        let m = 0.5 * (a + b);
        let (v1, e1) = gauss_kronrod(&f, a, m);
        let (v2, e2) = gauss_kronrod(&f, m, b);
        intervals.push((a, m, v1, e1));
        intervals.push((m, b, v2, e2));
    }
    intervals.iter().map(|iv| iv.2).sum()
}
