//! Parameterisations and closed-form quantities.
//!
//! The CIR process `dX = (a − bX) dt + σ √X dW` on `[0, T]` is reduced to the
//! squared Bessel form `dZ = (δ − b' Z) dt + 2 √Z dW` on `[0, 1]` by
//! `Z_t = ρ X_{tT}` with `δ = 4a/σ²`, `b' = T b` and `ρ = 4/(T σ²)`.

use serde::{Deserialize, Serialize};

use crate::special;
use crate::{Error, Result};

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}

/// Parameters of `dX = (a − bX) dt + σ √X dW`, `X_0 = x0`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    a: f64,
    b: f64,
    sigma: f64,
    x0: f64,
    horizon: f64,
}

impl CirParams {
    pub fn new(a: f64, b: f64, sigma: f64, x0: f64, horizon: f64) -> Result<Self> {
        check("a", a, a > 0.0, "must be > 0")?;
        check("b", b, b >= 0.0, "must be ≥ 0")?;
        check("sigma", sigma, sigma > 0.0, "must be > 0")?;
        check("x0", x0, x0 >= 0.0, "must be ≥ 0")?;
        check("T", horizon, horizon > 0.0, "must be > 0")?;
        Ok(Self {
            a,
            b,
            sigma,
            x0,
            horizon,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `4a/σ²`; the strong rate exponent `2a/σ²` is half of it.
    pub fn delta(&self) -> f64 {
        delta_of(self)
    }

    pub fn to_bessel(&self) -> BesselReduction {
        to_bessel(self)
    }
}

/// Parameters of `dZ = (δ − bZ) dt + 2 √Z dW`, `Z_0 = z0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselParams {
    delta: f64,
    b: f64,
    z0: f64,
}

impl BesselParams {
    pub fn new(delta: f64, b: f64, z0: f64) -> Result<Self> {
        check("delta", delta, delta > 0.0, "must be > 0")?;
        check("b", b, b >= 0.0, "must be ≥ 0")?;
        check("z0", z0, z0 >= 0.0, "must be ≥ 0")?;
        Ok(Self { delta, b, z0 })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn with_z0(&self, z0: f64) -> Result<Self> {
        Self::new(self.delta, self.b, z0)
    }

    pub fn with_b(&self, b: f64) -> Result<Self> {
        Self::new(self.delta, b, self.z0)
    }

    pub fn feller_class(&self) -> FellerClass {
        feller_class(self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FellerClass {
    /// `δ < 2`: zero is reached almost surely.
    HitsZeroAlmostSurely,
    /// `δ ≥ 2`: started positive, the process stays positive.
    NeverHitsZero,
}

/// Result of the space-time reduction of a CIR process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselReduction {
    pub params: BesselParams,
    /// `ρ = 4/(Tσ²)`; `Z = ρ X`.
    pub space_scale: f64,
    /// `T`; Bessel time `s` corresponds to CIR time `s T`.
    pub time_scale: f64,
}

impl BesselReduction {
    /// Inverse of [`to_bessel`].
    pub fn to_cir(&self) -> Result<CirParams> {
        let BesselReduction {
            params,
            space_scale,
            time_scale,
        } = *self;
        check("space_scale", space_scale, space_scale > 0.0, "must be > 0")?;
        check("time_scale", time_scale, time_scale > 0.0, "must be > 0")?;
        let sigma_sq = 4.0 / (time_scale * space_scale);
        CirParams::new(
            params.delta * sigma_sq / 4.0,
            params.b / time_scale,
            sigma_sq.sqrt(),
            params.z0 / space_scale,
            time_scale,
        )
    }

    /// Canonical CIR representative of a Bessel parameter set: σ = 2, T = 1,
    /// so that ρ = 1 and both descriptions coincide numerically.
    pub fn identity(params: BesselParams) -> Self {
        Self {
            params,
            space_scale: 1.0,
            time_scale: 1.0,
        }
    }
}

pub fn delta_of(cir: &CirParams) -> f64 {
    4.0 * cir.a / (cir.sigma * cir.sigma)
}

pub fn to_bessel(cir: &CirParams) -> BesselReduction {
    let rho = 4.0 / (cir.horizon * cir.sigma * cir.sigma);
    BesselReduction {
        params: BesselParams {
            delta: delta_of(cir),
            b: cir.horizon * cir.b,
            z0: rho * cir.x0,
        },
        space_scale: rho,
        time_scale: cir.horizon,
    }
}

/// `E[Z_t]` for the squared Bessel process with drift.
pub fn mean_at(p: &BesselParams, t: f64) -> f64 {
    affine_mean(p.z0, p.delta, p.b, t)
}

/// `E[X_t]` for the CIR process; same closed form with `(a, b)`.
pub fn mean_at_cir(p: &CirParams, t: f64) -> f64 {
    affine_mean(p.x0, p.a, p.b, t)
}

fn affine_mean(start: f64, level: f64, rate: f64, t: f64) -> f64 {
    if rate == 0.0 {
        start + level * t
    } else {
        let decay = (-rate * t).exp();
        // -expm1 keeps (1 − e^{−bt})/b accurate for tiny b
        start * decay + level * (-(-rate * t).exp_m1()) / rate
    }
}

/// `E|Z_t^{z1} − Z_t^{z2}|` for two solutions with a common driver.
pub fn l1_distance_exact(z1: f64, z2: f64, b: f64, t: f64) -> f64 {
    (-b * t).exp() * (z1 - z2).abs()
}

pub fn feller_class(delta: f64) -> FellerClass {
    if delta < 2.0 {
        FellerClass::HitsZeroAlmostSurely
    } else {
        FellerClass::NeverHitsZero
    }
}

fn require_hitting_regime(delta: f64, context: &'static str) -> Result<()> {
    if delta > 0.0 && delta < 2.0 {
        Ok(())
    } else {
        Err(Error::DimensionOutOfRange { delta, context })
    }
}

/// `E[(χ²_δ)^{1−δ/2}] = 2^{1−δ/2} / Γ(δ/2)` for `0 < δ < 2`.
pub fn chi_moment(delta: f64) -> Result<f64> {
    require_hitting_regime(delta, "chi_moment")?;
    let nu = 1.0 - delta / 2.0;
    Ok(2f64.powf(nu) / special::gamma(delta / 2.0))
}

/// `z^ν ∫_r^∞ t^{−ν−1} e^{−z/(2t)} dt` with `ν = 1 − δ/2`, the survival
/// shape of the squared Bessel process started at 0 without its
/// normalising constant.
pub fn hitting_tail_shape(z: f64, r: f64, delta: f64) -> Result<f64> {
    require_hitting_regime(delta, "hitting_tail_shape")?;
    check("z", z, z > 0.0, "must be > 0")?;
    check("r", r, r > 0.0, "must be > 0")?;
    let nu = 1.0 - delta / 2.0;
    // u = 1/t gives ∫_0^{1/r} u^{ν−1} e^{−zu/2} du; then u = s^{1/ν}
    // removes the endpoint singularity: (1/ν) ∫_0^{r^{−ν}} e^{−z s^{1/ν}/2} ds.
    let upper = r.powf(-nu);
    let inv_nu = 1.0 / nu;
    let integral = special::integrate(
        |s: f64| (-0.5 * z * s.powf(inv_nu)).exp(),
        0.0,
        upper,
        1e-10 * nu,
    ) / nu;
    Ok(z.powf(nu) * integral)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        let p = CirParams::new(1.0, 0.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(p.delta(), 1.0);
        let p = CirParams::new(0.5, 0.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(p.delta(), 0.5);
        let p = CirParams::new(1.0, 0.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(p.delta(), 4.0);
        assert_eq!(feller_class(p.delta()), FellerClass::NeverHitsZero);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(CirParams::new(0.0, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(CirParams::new(1.0, -1.0, 1.0, 0.0, 1.0).is_err());
        assert!(CirParams::new(1.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(CirParams::new(1.0, 0.0, 1.0, -1.0, 1.0).is_err());
        assert!(CirParams::new(1.0, 0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CirParams::new(f64::NAN, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(BesselParams::new(0.0, 0.0, 0.0).is_err());
        assert!(BesselParams::new(1.0, 0.0, -0.1).is_err());
        // 2a < σ² is a regime, not a validity condition
        assert!(CirParams::new(0.1, 0.0, 5.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn reduction_examples() {
        let r = to_bessel(&CirParams::new(1.0, 0.0, 2.0, 0.0, 1.0).unwrap());
        assert_eq!(r.params, BesselParams::new(1.0, 0.0, 0.0).unwrap());
        assert_eq!(r.space_scale, 1.0);

        let cir = CirParams::new(1.0, 1.0, 2.0, 2.0, 4.0).unwrap();
        let r = to_bessel(&cir);
        assert_eq!(r.params, BesselParams::new(1.0, 4.0, 0.5).unwrap());
        assert_eq!(r.space_scale, 0.25);
        assert_eq!(r.time_scale, 4.0);
        assert_eq!(r.to_cir().unwrap(), cir);
    }

    #[test]
    fn mean_examples() {
        let p = BesselParams::new(1.0, 0.0, 1.0).unwrap();
        assert_eq!(mean_at(&p, 1.0), 2.0);
        let p = BesselParams::new(1.0, 1.0, 0.0).unwrap();
        assert!((mean_at(&p, 1.0) - 0.632_120_558_828_557_7).abs() < 1e-15);
        let p = BesselParams::new(0.5, 1.0, 2.0).unwrap();
        assert!((mean_at(&p, 1.0) - 1.051_819_161_757_163_5).abs() < 1e-15);
    }

    #[test]
    fn mean_continuous_at_zero_rate() {
        for &b in &[1e-12, 1e-8] {
            let p = BesselParams::new(0.7, b, 1.3).unwrap();
            let q = BesselParams::new(0.7, 0.0, 1.3).unwrap();
            for &t in &[0.1, 1.0, 5.0] {
                let rel = (mean_at(&p, t) - mean_at(&q, t)).abs() / mean_at(&q, t);
                assert!(rel < 1e-6, "b = {b}, t = {t}, rel = {rel}");
            }
        }
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_distance_exact(5.0, 5.0, 0.3, 2.0), 0.0);
        assert_eq!(l1_distance_exact(1.0, 0.0, 0.0, 7.0), 1.0);
        assert!((l1_distance_exact(3.0, 1.0, 1.0, 1.0) - 0.735_758_882_342_884_6).abs() < 1e-15);
    }

    #[test]
    fn feller_examples() {
        assert_eq!(feller_class(0.5), FellerClass::HitsZeroAlmostSurely);
        assert_eq!(feller_class(2.0), FellerClass::NeverHitsZero);
        assert_eq!(feller_class(3.0), FellerClass::NeverHitsZero);
    }

    #[test]
    fn chi_moment_examples() {
        let v = chi_moment(1.0).unwrap();
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-13);
        assert!((chi_moment(2.0 - 1e-12).unwrap() - 1.0).abs() < 1e-9);
        // quadrature oracle (scipy.integrate.quad): 0.4638648042895004
        assert!((chi_moment(0.5).unwrap() - 0.463_864_804_289_500_4).abs() < 1e-12);
        assert!(chi_moment(2.0).is_err());
        assert!(chi_moment(3.0).is_err());
    }

    #[test]
    fn hitting_tail_examples() {
        // scipy.integrate.quad of t^{-3/2} e^{-1/(2t)} over [1, ∞): 1.7112487837843136
        let v = hitting_tail_shape(1.0, 1.0, 1.0).unwrap();
        assert!((v - 1.711_248_783_784_313_6).abs() < 1e-9, "{v}");
        assert!(hitting_tail_shape(1e-12, 1.0, 1.0).unwrap() < 1e-5);
        assert!(hitting_tail_shape(1.0, 1.0, 2.0).is_err());
        assert!(hitting_tail_shape(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn hitting_tail_monotone_and_bounded() {
        let delta = 0.6;
        let nu = 1.0 - delta / 2.0;
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let r = 0.05 * k as f64;
            let v = hitting_tail_shape(0.8, r, delta).unwrap();
            assert!(v < prev);
            assert!(v <= 0.8f64.powf(nu) * r.powf(-nu) / nu);
            prev = v;
        }
        let mut prev = 0.0;
        for k in 1..20 {
            let v = hitting_tail_shape(0.1 * k as f64, 0.5, delta).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }
}
