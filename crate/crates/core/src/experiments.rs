//! Monte Carlo estimators and rate fits.
//!
//! Every estimator runs its replications as independent work items on the
//! current rayon pool. Replication `i` derives its own generator from
//! `(root seed, experiment stream, i)` and per-replication results are
//! collected in index order before a compensated summation, so the numbers
//! do not depend on the number of worker threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::BesselParams;
use crate::paths::{
    concat_with_cell, next_cell_start, refine, sample_bm, sample_bridge, CellMarker, GridPath,
};
use crate::sampling::{derive, Generator, SeedSpec};
use crate::schemes::{reference_solve, solve_path, Coefficients, SchemeKind, SolveOptions, SolveResult};
use crate::stats::{summarize, Summary};
use crate::{Error, Result};

/// Mean absolute error of one grid size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub n_grid: usize,
    pub mean_abs_error: f64,
    pub std_error: f64,
    pub reps: usize,
    pub seed: u64,
}

impl ErrorEstimate {
    fn from_samples(n_grid: usize, samples: &[f64], seed: u64) -> Self {
        let Summary {
            mean, std_error, ..
        } = summarize(samples);
        Self {
            n_grid,
            mean_abs_error: mean,
            std_error,
            reps: samples.len(),
            seed,
        }
    }

    /// Lower end of a `k`-standard-error band.
    pub fn lower_band(&self, k: f64) -> f64 {
        self.mean_abs_error - k * self.std_error
    }

    /// Multiplies errors by `factor`; used to report errors in CIR units.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            mean_abs_error: self.mean_abs_error * factor,
            std_error: self.std_error * factor,
            ..self
        }
    }
}

/// Ordinary least squares of `log(error)` on `log(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CouplingVariant {
    /// Shared grid values, independent bridge fillings in every cell.
    FullConditionalRefill,
    /// Identical drivers except for one bridge-perturbed cell placed at the
    /// first full coarse cell after the first zero hit.
    SingleCellAfterZeroHit,
}

impl CouplingVariant {
    pub fn label(&self) -> &'static str {
        match self {
            CouplingVariant::FullConditionalRefill => "full-refill",
            CouplingVariant::SingleCellAfterZeroHit => "single-cell",
        }
    }
}

impl fmt::Display for CouplingVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CouplingVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-refill" => Ok(CouplingVariant::FullConditionalRefill),
            "single-cell" => Ok(CouplingVariant::SingleCellAfterZeroHit),
            _ => Err(Error::Usage(format!("unknown coupling variant `{s}`"))),
        }
    }
}

// Stream identifiers keep the experiments' random streams disjoint.
const STREAM_STRONG: u64 = 1 << 56;
const STREAM_LOWER: u64 = 2 << 56;
const STREAM_HITTING: u64 = 3 << 56;
const STREAM_MOMENTS: u64 = 4 << 56;
const STREAM_L1: u64 = 5 << 56;
const STREAM_FELLER: u64 = 6 << 56;

/// Runs `reps` replications in parallel; replication `i` gets the generator
/// of `SeedSpec(root, stream, i)`. The first failing replication in index
/// order determines the error.
pub fn replicate<F>(root_seed: u64, stream_id: u64, reps: usize, work: F) -> Result<Vec<f64>>
where
    F: Fn(u64, &mut Generator) -> Result<f64> + Sync,
{
    let results: Vec<Result<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut g = derive(SeedSpec::new(root_seed, stream_id, i));
            work(i, &mut g)
        })
        .collect();
    results.into_iter().collect()
}

fn check_finite(value: f64, n_grid: usize, replication: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            n_grid,
            replication,
        })
    }
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Usage(msg.to_string()))
    }
}

fn tm_solve(c: &Coefficients, z0: f64, driver: &GridPath) -> Result<SolveResult> {
    let kind = SchemeKind::TruncatedMilstein;
    solve_path(kind, c, z0, driver, SolveOptions::for_kind(kind), None)
}

/// `E|X̂_N − X_ref|` on `[0, 1]`: the scheme runs on `N` equidistant
/// increments and the reference is a truncated Milstein solve on a
/// bridge-refined extension of the same coarse driver.
pub fn strong_error(
    kind: SchemeKind,
    p: &BesselParams,
    n_grid: usize,
    reps: usize,
    refine_factor: usize,
    root_seed: u64,
) -> Result<ErrorEstimate> {
    require(n_grid >= 1, "N must be ≥ 1")?;
    require(reps >= 2, "reps must be ≥ 2")?;
    require(refine_factor >= 2, "refine factor must be ≥ 2")?;
    if !kind.is_pathwise() {
        return Err(Error::NotPathwise(kind.label()));
    }
    let c = Coefficients::from(p);
    kind.validate(&c)?;
    let z0 = p.z0();
    let samples = replicate(root_seed, STREAM_STRONG | n_grid as u64, reps, |i, g| {
        let coarse = sample_bm(g, n_grid, 1.0 / n_grid as f64)?;
        let approx = solve_path(kind, &c, z0, &coarse, SolveOptions::for_kind(kind), None)?;
        let reference = reference_solve(&c, z0, &coarse, refine_factor, g)?;
        check_finite((approx.terminal_value - reference).abs(), n_grid, i)
    })?;
    Ok(ErrorEstimate::from_samples(n_grid, &samples, root_seed))
}

/// Two Brownian drivers on the fine mesh that agree at every coarse grid
/// time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledDrivers {
    pub triangle: GridPath,
    pub boxed: GridPath,
    /// Fine-index range `(start, end)` of the perturbed cell, when the
    /// single-cell construction was activated.
    pub perturbed_cell: Option<(usize, usize)>,
}

/// Builds `(W^△, W^□)` for one replication. Draws the coarse driver, the
/// refinement(s) and, for the single-cell variant, the perturbing bridge
/// from `g` in that order.
pub fn build_coupled_drivers(
    variant: CouplingVariant,
    c: &Coefficients,
    z0: f64,
    n_grid: usize,
    fine_factor: usize,
    g: &mut Generator,
) -> Result<CoupledDrivers> {
    let coarse = sample_bm(g, n_grid, 1.0 / n_grid as f64)?;
    match variant {
        CouplingVariant::FullConditionalRefill => {
            let triangle = refine(g, &coarse, fine_factor)?;
            let boxed = refine(g, &coarse, fine_factor)?;
            Ok(CoupledDrivers {
                triangle,
                boxed,
                perturbed_cell: None,
            })
        }
        CouplingVariant::SingleCellAfterZeroHit => {
            let fine = refine(g, &coarse, fine_factor)?;
            let hit = tm_solve(c, z0, &fine)?.zero_hit_index;
            // the cell must fit before the horizon; late or absent hits leave
            // the drivers identical
            let last_allowed = (n_grid.saturating_sub(2)) * fine_factor;
            match hit {
                Some(j) if j < last_allowed => {
                    let start = next_cell_start(j, fine_factor);
                    let end = start + fine_factor;
                    let w1 = GridPath::new(0.0, fine.dt(), fine.values()[..=start].to_vec())?;
                    let w_cell = fine.segment_from_origin(start, end)?;
                    let w2 = fine.segment_from_origin(end, fine.n_steps())?;
                    let f = sample_bridge(g, fine_factor)?;
                    let r = start as f64 * fine.dt();
                    let triangle =
                        concat_with_cell(r, &w1, &w_cell, &w2, &f, n_grid, CellMarker::Triangle)?;
                    let boxed = concat_with_cell(r, &w1, &w_cell, &w2, &f, n_grid, CellMarker::Box)?;
                    Ok(CoupledDrivers {
                        triangle,
                        boxed,
                        perturbed_cell: Some((start, end)),
                    })
                }
                _ => Ok(CoupledDrivers {
                    boxed: fine.clone(),
                    triangle: fine,
                    perturbed_cell: None,
                }),
            }
        }
    }
}

/// `½ E|X(W^△) − X(W^□)|` with truncated Milstein solves on the fine mesh;
/// a consistent estimate of a lower bound for the error of any method that
/// only sees the `N` coarse grid values.
pub fn lower_bound_coupling(
    p: &BesselParams,
    n_grid: usize,
    reps: usize,
    fine_factor: usize,
    variant: CouplingVariant,
    root_seed: u64,
) -> Result<ErrorEstimate> {
    require(n_grid >= 1, "N must be ≥ 1")?;
    require(reps >= 2, "reps must be ≥ 2")?;
    require(fine_factor >= 8, "fine factor must be ≥ 8")?;
    let c = Coefficients::from(p);
    let z0 = p.z0();
    let stream = STREAM_LOWER
        | ((variant == CouplingVariant::SingleCellAfterZeroHit) as u64) << 40
        | n_grid as u64;
    let samples = replicate(root_seed, stream, reps, |i, g| {
        let drivers = build_coupled_drivers(variant, &c, z0, n_grid, fine_factor, g)?;
        if variant == CouplingVariant::SingleCellAfterZeroHit && drivers.perturbed_cell.is_none()
        {
            return Ok(0.0);
        }
        let x_tri = tm_solve(&c, z0, &drivers.triangle)?.terminal_value;
        let x_box = tm_solve(&c, z0, &drivers.boxed)?.terminal_value;
        check_finite(0.5 * (x_tri - x_box).abs(), n_grid, i)
    })?;
    Ok(ErrorEstimate::from_samples(n_grid, &samples, root_seed))
}

/// How zero hits are detected between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HitDetection {
    /// Only grid values at or below the threshold count.
    Grid,
    /// Additionally, each step `[t_i, t_{i+1}]` counts as a hit with the
    /// probability that a reflected Brownian bridge between `√Z_i` and
    /// `√Z_{i+1}` touches zero, `2e/(1+e)` with `e = exp(−2√(Z_i Z_{i+1})/dt)`.
    /// Exact for `δ = 1, b = 0`.
    BridgeCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub eps: f64,
    pub reps: usize,
    pub prob_estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingConfig {
    pub horizon: f64,
    pub mesh: f64,
    pub zero_threshold: f64,
    pub detection: HitDetection,
}

impl Default for HittingConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            mesh: 1.0 / 4096.0,
            zero_threshold: 1e-12,
            detection: HitDetection::BridgeCorrected,
        }
    }
}

/// Probability that the truncated Milstein solution started at 0 stays
/// above the zero threshold on `[ε, T]`.
pub fn hitting_probability(
    p: &BesselParams,
    eps: f64,
    reps: usize,
    cfg: &HittingConfig,
    root_seed: u64,
) -> Result<HittingEstimate> {
    let delta = p.delta();
    if !(delta > 0.0 && delta < 2.0) {
        return Err(Error::DimensionOutOfRange {
            delta,
            context: "hitting_probability",
        });
    }
    require(p.z0() == 0.0, "hitting probabilities are defined for z0 = 0")?;
    require(eps > 0.0 && eps <= cfg.horizon, "need 0 < eps ≤ T")?;
    require(reps >= 2, "reps must be ≥ 2")?;
    let steps_f = cfg.horizon / cfg.mesh;
    let n_steps = steps_f.round() as usize;
    require(
        n_steps >= 1 && ((steps_f - n_steps as f64) / steps_f).abs() < 1e-9,
        "mesh must divide the horizon",
    )?;
    let dt = cfg.horizon / n_steps as f64;
    // first grid index inside the window
    let first = ((eps / dt) - 1e-9).ceil() as usize;
    let c = Coefficients::from(p);
    let sqrt_dt = dt.sqrt();
    let stream = STREAM_HITTING ^ eps.to_bits().rotate_left(7);
    let samples = replicate(root_seed, stream, reps, |_, g| {
        let mut x = 0.0f64;
        for i in 0..n_steps {
            let prev = x;
            x = crate::schemes::step(SchemeKind::TruncatedMilstein, &c, x, sqrt_dt * g.std_normal(), dt)?;
            if i + 1 < first {
                continue;
            }
            if x <= cfg.zero_threshold {
                return Ok(0.0);
            }
            if i >= first && cfg.detection == HitDetection::BridgeCorrected {
                let e = (-2.0 * (prev * x).sqrt() / dt).exp();
                if e > 0.0 && g.uniform() < 2.0 * e / (1.0 + e) {
                    return Ok(0.0);
                }
            }
        }
        Ok(1.0)
    })?;
    let s = summarize(&samples);
    Ok(HittingEstimate {
        eps,
        reps,
        prob_estimate: s.mean,
        std_error: s.std_error,
    })
}

pub fn first_zero_hit(result: &SolveResult) -> Option<f64> {
    result.zero_hit_time
}

/// Fits `log(error) = intercept + slope · log(N)`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, e)) = points.iter().find(|&&(_, e)| !(e > 0.0 && e.is_finite())) {
        return Err(Error::Fit(format!(
            "error {e} at N = {n} is not positive; increase the number of replications"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all N values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        n_points: points.len(),
    })
}

/// [`fit_rate`] over the estimates after dropping the `drop_smallest`
/// smallest grid sizes.
pub fn fit_estimates(estimates: &[ErrorEstimate], drop_smallest: usize) -> Result<RateFit> {
    let mut sorted: Vec<&ErrorEstimate> = estimates.iter().collect();
    sorted.sort_by_key(|e| e.n_grid);
    let points: Vec<(f64, f64)> = sorted
        .iter()
        .skip(drop_smallest)
        .map(|e| (e.n_grid as f64, e.mean_abs_error))
        .collect();
    fit_rate(&points)
}

/// Monte Carlo mean of `Z_t` from exact transitions, for checking the
/// closed-form first moment.
pub fn exact_mean(p: &BesselParams, t: f64, reps: usize, root_seed: u64) -> Result<Summary> {
    require(t > 0.0, "t must be > 0")?;
    require(reps >= 2, "reps must be ≥ 2")?;
    let samples = replicate(root_seed, STREAM_MOMENTS, reps, |_, g| {
        Ok(g.exact_bessel_transition(p.z0(), p, t))
    })?;
    Ok(summarize(&samples))
}

/// `E|Z_t^{z1} − Z_t^{z2}|` from truncated Milstein solves sharing one
/// driver with `n_steps` steps on `[0, t]`.
pub fn coupled_l1_distance(
    p: &BesselParams,
    z1: f64,
    z2: f64,
    t: f64,
    n_steps: usize,
    reps: usize,
    root_seed: u64,
) -> Result<Summary> {
    require(t > 0.0, "t must be > 0")?;
    require(z1 >= 0.0 && z2 >= 0.0, "initial values must be ≥ 0")?;
    let c = Coefficients::from(p);
    let samples = replicate(root_seed, STREAM_L1 | n_steps as u64, reps, |i, g| {
        let w = sample_bm(g, n_steps, t / n_steps as f64)?;
        let a = tm_solve(&c, z1, &w)?.terminal_value;
        let b = tm_solve(&c, z2, &w)?.terminal_value;
        check_finite((a - b).abs(), n_steps, i)
    })?;
    Ok(summarize(&samples))
}

/// Fraction of solutions (scheme `kind`, `n_steps` steps on `[0, horizon]`)
/// whose first zero hit is detected at the given threshold.
pub fn zero_hit_fraction(
    kind: SchemeKind,
    p: &BesselParams,
    horizon: f64,
    n_steps: usize,
    zero_threshold: f64,
    reps: usize,
    root_seed: u64,
) -> Result<Summary> {
    require(horizon > 0.0, "horizon must be > 0")?;
    let c = Coefficients::from(p);
    kind.validate(&c)?;
    let opts = SolveOptions {
        record: false,
        zero_threshold,
    };
    let samples = replicate(root_seed, STREAM_FELLER | n_steps as u64, reps, |_, g| {
        let w = sample_bm(g, n_steps, horizon / n_steps as f64)?;
        let res = if kind.is_pathwise() {
            solve_path(kind, &c, p.z0(), &w, opts, None)?
        } else {
            solve_path(kind, &c, p.z0(), &w, opts, Some(g))?
        };
        Ok(if first_zero_hit(&res).is_some() { 1.0 } else { 0.0 })
    })?;
    Ok(summarize(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&n: &f64| (n, n.powf(-0.5)))
            .collect();
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_points, 4);
    }

    #[test]
    fn fit_constant_errors() {
        let pts = [(8.0, 0.3), (16.0, 0.3), (32.0, 0.3)];
        let fit = fit_rate(&pts).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_rate(&[(8.0, 1.0), (16.0, 0.5)]).is_err());
        let err = fit_rate(&[(8.0, 1.0), (16.0, 0.0), (32.0, 0.1)]).unwrap_err();
        assert!(err.to_string().contains("replications"));
    }

    #[test]
    fn drop_smallest_in_fit() {
        let est = |n: usize, e: f64| ErrorEstimate {
            n_grid: n,
            mean_abs_error: e,
            std_error: 0.0,
            reps: 10,
            seed: 0,
        };
        // the first point is off the power law
        let pts = vec![est(4, 10.0), est(8, 0.5), est(16, 0.25), est(32, 0.125)];
        let fit = fit_estimates(&pts, 1).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn variant_labels() {
        for v in [
            CouplingVariant::FullConditionalRefill,
            CouplingVariant::SingleCellAfterZeroHit,
        ] {
            assert_eq!(v.label().parse::<CouplingVariant>().unwrap(), v);
        }
    }

    #[test]
    fn strong_error_rejects_exact_scheme() {
        let p = BesselParams::new(1.0, 0.0, 0.0).unwrap();
        assert!(strong_error(SchemeKind::ExactTransition, &p, 8, 10, 4, 0).is_err());
        let p = BesselParams::new(0.5, 0.0, 0.0).unwrap();
        assert!(strong_error(SchemeKind::DriftImplicitSqrt, &p, 8, 10, 4, 0).is_err());
    }

    #[test]
    fn hitting_rejects_feller_regime() {
        let p = BesselParams::new(2.0, 0.0, 0.0).unwrap();
        let err = hitting_probability(&p, 0.1, 10, &HittingConfig::default(), 0).unwrap_err();
        assert!(matches!(err, Error::DimensionOutOfRange { .. }));
        let p = BesselParams::new(1.0, 0.0, 1.0).unwrap();
        assert!(hitting_probability(&p, 0.1, 10, &HittingConfig::default(), 0).is_err());
    }
}
