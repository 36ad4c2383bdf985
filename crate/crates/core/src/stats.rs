//! Summary statistics and goodness-of-fit helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma, Normal};

/// Mean and standard error of a sample, accumulated in index order with
/// Neumaier compensation so the result is independent of how the sample was
/// produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            std_error: f64::NAN,
            count: 0,
        };
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let std_error = if n > 1 {
        let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    } else {
        f64::NAN
    };
    Summary {
        mean,
        std_error,
        count: n,
    }
}

/// Two-sided asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// One-sample KS test of `sample` against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    // Stephens' small-sample correction
    let sqrt_n = n.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d),
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

pub fn chi_square_cdf(df: f64, x: f64) -> f64 {
    ChiSquared::new(df).expect("df > 0").cdf(x)
}

pub fn gamma_cdf(shape: f64, x: f64) -> f64 {
    Gamma::new(shape, 1.0).expect("shape > 0").cdf(x)
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let sx = summarize(x);
    let sy = summarize(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - sx.mean) * (b - sy.mean);
        sxx += (a - sx.mean) * (a - sx.mean);
        syy += (b - sy.mean) * (b - sy.mean);
    }
    sxy / (sxx * syy).sqrt()
}

/// Sample covariance of paired draws with the standard error of the
/// estimate, from the products `(x − x̄)(y − ȳ)`.
pub fn covariance_with_error(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sx = summarize(x);
    let sy = summarize(y);
    let products: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - sx.mean) * (b - sy.mean))
        .collect();
    let s = summarize(&products);
    (s.mean, s.std_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_constant() {
        let s = summarize(&[2.0; 10]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn kolmogorov_critical_value() {
        // K_{0.99} ≈ 1.6276
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn ks_detects_wrong_distribution() {
        let uniform: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_one_sample(&uniform, |x| x.clamp(0.0, 1.0)).passes(0.01));
        assert!(!ks_one_sample(&uniform, |x| (x * x).clamp(0.0, 1.0)).passes(0.01));
        let shifted: Vec<f64> = uniform.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&uniform, &uniform).passes(0.01));
        assert!(!ks_two_sample(&uniform, &shifted).passes(0.01));
    }
}
