//! Discretisation kernels for `dX = (a − bX) dt + σ √X dW`.
//!
//! Squared Bessel parameters map onto the same kernels with `a = δ` and
//! `σ = 2`, so every scheme serves both parameterisations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{BesselParams, CirParams};
use crate::paths::{refine, GridPath};
use crate::sampling::Generator;
use crate::{Error, Result};

/// Drift level, mean-reversion rate and diffusion coefficient of a
/// square-root diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
}

impl Coefficients {
    /// Dimension `4a/σ²` of the associated squared Bessel process.
    pub fn delta(&self) -> f64 {
        4.0 * self.a / (self.sigma * self.sigma)
    }
}

impl From<&BesselParams> for Coefficients {
    fn from(p: &BesselParams) -> Self {
        Self {
            a: p.delta(),
            b: p.b(),
            sigma: 2.0,
        }
    }
}

impl From<&CirParams> for Coefficients {
    fn from(p: &CirParams) -> Self {
        Self {
            a: p.a(),
            b: p.b(),
            sigma: p.sigma(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    EulerFullTruncation,
    DriftImplicitSqrt,
    TruncatedMilstein,
    /// Exact transition law at grid times; ignores the driving increments.
    ExactTransition,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::EulerFullTruncation,
        SchemeKind::DriftImplicitSqrt,
        SchemeKind::TruncatedMilstein,
        SchemeKind::ExactTransition,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::EulerFullTruncation => "euler-ft",
            SchemeKind::DriftImplicitSqrt => "drift-implicit",
            SchemeKind::TruncatedMilstein => "truncated-milstein",
            SchemeKind::ExactTransition => "exact",
        }
    }

    pub fn is_pathwise(&self) -> bool {
        !matches!(self, SchemeKind::ExactTransition)
    }

    /// Level at or below which the solution counts as having hit zero.
    pub fn default_zero_threshold(&self) -> f64 {
        match self {
            SchemeKind::TruncatedMilstein => 0.0,
            _ => 1e-12,
        }
    }

    /// Rejects parameter sets the scheme is not defined for.
    pub fn validate(&self, c: &Coefficients) -> Result<()> {
        if *self == SchemeKind::DriftImplicitSqrt && c.a < 0.25 * c.sigma * c.sigma {
            return Err(Error::ImplicitSchemeIllPosed {
                a: c.a,
                quarter_sigma_sq: 0.25 * c.sigma * c.sigma,
            });
        }
        Ok(())
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::Usage(format!("unknown scheme `{s}`")))
    }
}

#[inline]
fn euler_full_truncation(c: &Coefficients, x: f64, dw: f64, dt: f64) -> f64 {
    let xp = x.max(0.0);
    x + (c.a - c.b * xp) * dt + c.sigma * xp.sqrt() * dw
}

#[inline]
fn truncated_milstein(c: &Coefficients, x: f64, dw: f64, dt: f64) -> f64 {
    let xp = x.max(0.0);
    let next = x
        + (c.a - c.b * xp) * dt
        + c.sigma * xp.sqrt() * dw
        + 0.25 * c.sigma * c.sigma * (dw * dw - dt);
    next.max(0.0)
}

/// Drift-implicit Euler step for `Y = √X`:
/// `(1 + b dt/2) Y'² − (Y + σ dW/2) Y' − (4a − σ²) dt/8 = 0`, positive root.
#[inline]
fn drift_implicit_sqrt(c: &Coefficients, x: f64, dw: f64, dt: f64) -> f64 {
    let y = x.max(0.0).sqrt();
    let lead = 1.0 + 0.5 * c.b * dt;
    let linear = y + 0.5 * c.sigma * dw;
    let constant = (4.0 * c.a - c.sigma * c.sigma) * dt / 8.0;
    let disc = linear * linear + 4.0 * lead * constant;
    let root = (linear + disc.max(0.0).sqrt()) / (2.0 * lead);
    root * root
}

/// One step of a pathwise scheme.
pub fn step(kind: SchemeKind, c: &Coefficients, x: f64, dw: f64, dt: f64) -> Result<f64> {
    kind.validate(c)?;
    match kind {
        SchemeKind::EulerFullTruncation => Ok(euler_full_truncation(c, x, dw, dt)),
        SchemeKind::TruncatedMilstein => Ok(truncated_milstein(c, x, dw, dt)),
        SchemeKind::DriftImplicitSqrt => Ok(drift_implicit_sqrt(c, x, dw, dt)),
        SchemeKind::ExactTransition => Err(Error::NotPathwise(kind.label())),
    }
}

/// Exact transition of the square-root diffusion over `dt`, through the
/// squared Bessel representation `Z = 4X/σ²`.
pub fn exact_step(g: &mut Generator, c: &Coefficients, x: f64, dt: f64) -> f64 {
    let to_bessel = 4.0 / (c.sigma * c.sigma);
    let p = BesselParams::new(c.delta(), c.b, 0.0).expect("validated coefficients");
    g.exact_bessel_transition(x.max(0.0) * to_bessel, &p, dt) / to_bessel
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub record: bool,
    pub zero_threshold: f64,
}

impl SolveOptions {
    pub fn for_kind(kind: SchemeKind) -> Self {
        Self {
            record: false,
            zero_threshold: kind.default_zero_threshold(),
        }
    }

    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub terminal_value: f64,
    pub path: Option<GridPath>,
    /// First grid time with solution ≤ the zero threshold.
    pub zero_hit_time: Option<f64>,
    pub zero_hit_index: Option<usize>,
}

fn run<F: FnMut(f64, f64) -> f64>(
    x0: f64,
    driver: &GridPath,
    opts: SolveOptions,
    mut advance: F,
) -> Result<SolveResult> {
    let w = driver.values();
    let mut recorded = opts.record.then(|| {
        let mut v = Vec::with_capacity(w.len());
        v.push(x0);
        v
    });
    let mut hit = (x0 <= opts.zero_threshold).then_some(0usize);
    let mut x = x0;
    for (i, pair) in w.windows(2).enumerate() {
        x = advance(x, pair[1] - pair[0]);
        if !x.is_finite() {
            return Err(Error::Diverged { step: i + 1 });
        }
        if hit.is_none() && x <= opts.zero_threshold {
            hit = Some(i + 1);
        }
        if let Some(v) = recorded.as_mut() {
            v.push(x);
        }
    }
    let path = match recorded {
        Some(values) => Some(GridPath::new(driver.t0(), driver.dt(), values)?),
        None => None,
    };
    Ok(SolveResult {
        terminal_value: x,
        path,
        zero_hit_time: hit.map(|i| driver.time(i)),
        zero_hit_index: hit,
    })
}

/// Iterates a scheme over the increments of `driver`. `ExactTransition`
/// only uses the driver's mesh and draws from `rng`.
pub fn solve_path(
    kind: SchemeKind,
    c: &Coefficients,
    x0: f64,
    driver: &GridPath,
    opts: SolveOptions,
    rng: Option<&mut Generator>,
) -> Result<SolveResult> {
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "x0",
            value: x0,
            reason: "must be finite and ≥ 0",
        });
    }
    kind.validate(c)?;
    let dt = driver.dt();
    match kind {
        SchemeKind::EulerFullTruncation => {
            run(x0, driver, opts, |x, dw| euler_full_truncation(c, x, dw, dt))
        }
        SchemeKind::TruncatedMilstein => {
            run(x0, driver, opts, |x, dw| truncated_milstein(c, x, dw, dt))
        }
        SchemeKind::DriftImplicitSqrt => {
            run(x0, driver, opts, |x, dw| drift_implicit_sqrt(c, x, dw, dt))
        }
        SchemeKind::ExactTransition => {
            let g = rng.ok_or(Error::NotPathwise(
                "exact (needs its own generator)",
            ))?;
            run(x0, driver, opts, |x, _| exact_step(g, c, x, dt))
        }
    }
}

/// Truncated Milstein solution on a bridge-refined extension of
/// `coarse_driver`, as a proxy for the exact solution given the coarse
/// grid values.
pub fn reference_solve(
    c: &Coefficients,
    x0: f64,
    coarse_driver: &GridPath,
    refine_factor: usize,
    g: &mut Generator,
) -> Result<f64> {
    let fine = refine(g, coarse_driver, refine_factor)?;
    let kind = SchemeKind::TruncatedMilstein;
    Ok(solve_path(kind, c, x0, &fine, SolveOptions::for_kind(kind), None)?.terminal_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::sample_bm;
    use crate::sampling::{derive, SeedSpec};

    fn cir(a: f64, b: f64, sigma: f64) -> Coefficients {
        Coefficients { a, b, sigma }
    }

    #[test]
    fn euler_drift_only_recursion() {
        let c = cir(1.0, 0.0, 0.7);
        let dt = 0.125;
        let mut x = 0.5;
        for k in 1..=8 {
            x = step(SchemeKind::EulerFullTruncation, &c, x, 0.0, dt).unwrap();
            assert_eq!(x, 0.5 + k as f64 * dt);
        }
    }

    #[test]
    fn milstein_drift_only_step() {
        let c = cir(1.0, 0.0, 1.2);
        let x = step(SchemeKind::TruncatedMilstein, &c, 50.0, 0.0, 0.01).unwrap();
        assert!((x - (50.0 + (1.0 - 0.36) * 0.01)).abs() < 1e-12);
    }

    #[test]
    fn milstein_and_implicit_stay_nonnegative() {
        let c = cir(0.3, 1.0, 1.0);
        let ci = cir(0.2, 1.0, 1.0);
        let mut g = derive(SeedSpec::new(1, 0, 0));
        let mut x = 0.1;
        let mut y = 0.1;
        let ci_ok = cir(0.5, 1.0, 1.0);
        for _ in 0..100_000 {
            let dw = 0.1 * g.std_normal();
            x = step(SchemeKind::TruncatedMilstein, &c, x, dw, 0.01).unwrap();
            y = step(SchemeKind::DriftImplicitSqrt, &ci_ok, y, dw, 0.01).unwrap();
            assert!(x >= 0.0 && y >= 0.0);
        }
        assert!(step(SchemeKind::DriftImplicitSqrt, &ci, 0.1, 0.0, 0.01).is_err());
        assert!(step(SchemeKind::ExactTransition, &ci, 0.1, 0.0, 0.01).is_err());
    }

    #[test]
    fn euler_never_takes_sqrt_of_negative() {
        let c = cir(0.1, 0.0, 2.0);
        let x = step(SchemeKind::EulerFullTruncation, &c, 0.01, -1.0, 0.01).unwrap();
        assert!(x < 0.0);
        let y = step(SchemeKind::EulerFullTruncation, &c, x, 1.0, 0.01).unwrap();
        assert!(y.is_finite());
        assert_eq!(y, x + 0.1 * 0.01);
    }

    #[test]
    fn implicit_scheme_solves_its_quadratic() {
        let c = cir(1.5, 0.7, 1.3);
        let (x, dw, dt) = (0.8, 0.05, 0.01);
        let next = step(SchemeKind::DriftImplicitSqrt, &c, x, dw, dt).unwrap();
        let y1 = next.sqrt();
        let rhs = x.sqrt()
            + ((4.0 * c.a - c.sigma * c.sigma) / (8.0 * y1) - 0.5 * c.b * y1) * dt
            + 0.5 * c.sigma * dw;
        assert!((y1 - rhs).abs() < 1e-14);
    }

    #[test]
    fn drift_only_solve() {
        let driver = GridPath::new(0.0, 1.0 / 64.0, vec![0.0; 65]).unwrap();
        let c = cir(1.0, 0.0, 3.0);
        let kind = SchemeKind::EulerFullTruncation;
        let res = solve_path(kind, &c, 0.25, &driver, SolveOptions::for_kind(kind), None).unwrap();
        assert!((res.terminal_value - 1.25).abs() < 1e-14);
        assert_eq!(res.zero_hit_time, None);
    }

    #[test]
    fn solve_is_deterministic_and_records() {
        let mut g = derive(SeedSpec::new(2, 0, 0));
        let driver = sample_bm(&mut g, 256, 1.0 / 256.0).unwrap();
        let c = cir(0.25, 0.0, 2.0);
        let kind = SchemeKind::TruncatedMilstein;
        let opts = SolveOptions::for_kind(kind).recording();
        let a = solve_path(kind, &c, 0.0, &driver, opts, None).unwrap();
        let b = solve_path(kind, &c, 0.0, &driver, opts, None).unwrap();
        assert_eq!(a, b);
        let path = a.path.as_ref().unwrap();
        assert_eq!(path.len(), 257);
        assert!(path.values().iter().all(|&v| v >= 0.0));
        assert_eq!(a.zero_hit_time, Some(0.0));
    }

    #[test]
    fn exact_transition_needs_generator() {
        let driver = GridPath::new(0.0, 0.1, vec![0.0; 11]).unwrap();
        let c = cir(1.0, 1.0, 1.0);
        let kind = SchemeKind::ExactTransition;
        assert!(solve_path(kind, &c, 1.0, &driver, SolveOptions::for_kind(kind), None).is_err());
        let mut g = derive(SeedSpec::new(3, 0, 0));
        let res =
            solve_path(kind, &c, 1.0, &driver, SolveOptions::for_kind(kind), Some(&mut g)).unwrap();
        assert!(res.terminal_value >= 0.0);
    }

    #[test]
    fn scheme_labels_round_trip() {
        for kind in SchemeKind::ALL {
            assert_eq!(kind.label().parse::<SchemeKind>().unwrap(), kind);
        }
        assert!("rk4".parse::<SchemeKind>().is_err());
    }
}
