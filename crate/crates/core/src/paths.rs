//! Grid-sampled Brownian paths, Brownian bridges and the one-cell coupling.
//!
//! All paths live on uniform grids and grid times are always computed as
//! `t0 + i·dt` from an integer index. The coupling operators
//! [`perturb_first_cell`] and [`concat_with_cell`] copy unaffected values
//! verbatim, so the two coupled drivers agree bit for bit wherever the
//! construction says they coincide.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::sampling::Generator;
use crate::{Error, Result};

/// Relative tolerance used when matching a cell length against a mesh.
const MESH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: dt,
                reason: "must be > 0",
            });
        }
        if values.is_empty() {
            return Err(Error::GridMismatch("a path needs at least one value".into()));
        }
        Ok(Self { t0, dt, values })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.n_steps())
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("non-empty path")
    }

    /// Every `factor`-th value, i.e. the path seen on a grid `factor` times
    /// coarser.
    pub fn subsample(&self, factor: usize) -> Result<GridPath> {
        if factor == 0 || self.n_steps() % factor != 0 {
            return Err(Error::GridMismatch(format!(
                "{} steps are not divisible by {factor}",
                self.n_steps()
            )));
        }
        Ok(GridPath {
            t0: self.t0,
            dt: self.dt * factor as f64,
            values: self.values.iter().step_by(factor).copied().collect(),
        })
    }

    /// The path restricted to indices `start..=end`, re-based so that it
    /// starts at `0` in both time and value.
    pub fn segment_from_origin(&self, start: usize, end: usize) -> Result<GridPath> {
        if start > end || end >= self.values.len() {
            return Err(Error::GridMismatch(format!(
                "segment {start}..={end} outside a path with {} values",
                self.values.len()
            )));
        }
        let origin = self.values[start];
        Ok(GridPath {
            t0: 0.0,
            dt: self.dt,
            values: self.values[start..=end].iter().map(|v| v - origin).collect(),
        })
    }

    /// Writes `index,time,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,time,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{:.16e},{:.16e}", self.time(i), v)?;
        }
        Ok(())
    }
}

/// Values of a Brownian bridge on a uniform grid over `[0, 1]`, pinned to
/// zero at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgePath {
    values: Vec<f64>,
}

impl BridgePath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::GridMismatch("a bridge needs at least two steps".into()));
        }
        if values[0] != 0.0 || *values.last().unwrap() != 0.0 {
            return Err(Error::GridMismatch("bridge endpoints must be 0".into()));
        }
        Ok(Self { values })
    }

    /// The identically-zero bridge.
    pub fn zero(n_steps: usize) -> Self {
        Self {
            values: vec![0.0; n_steps + 1],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }
}

/// Selects the unperturbed (`Triangle`) or bridge-perturbed (`Box`) driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellMarker {
    Triangle,
    Box,
}

/// Brownian path with `n_steps` increments of variance `dt`, started at 0.
pub fn sample_bm(g: &mut Generator, n_steps: usize, dt: f64) -> Result<GridPath> {
    if n_steps == 0 {
        return Err(Error::GridMismatch("n_steps must be ≥ 1".into()));
    }
    let mut values = Vec::with_capacity(n_steps + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for _ in 0..n_steps {
        acc += g.std_normal();
        values.push(acc);
    }
    // scale after summation so (n, dt) is exactly √dt × (n, 1)
    let scale = dt.sqrt();
    for v in values.iter_mut() {
        *v *= scale;
    }
    GridPath::new(0.0, dt, values)
}

/// `min(s, t) − s t / T`.
pub fn bridge_cov(s: f64, t: f64, horizon: f64) -> f64 {
    s.min(t) - s * t / horizon
}

/// Fills `buf` (length `m + 1`) with a standard bridge on `[0, 1]` sampled
/// at `i/m`, via `B_i = W_i − (i/m) W_1`.
fn fill_bridge(g: &mut Generator, buf: &mut [f64]) {
    let m = buf.len() - 1;
    buf[0] = 0.0;
    let mut acc = 0.0;
    for slot in buf.iter_mut().skip(1) {
        acc += g.std_normal();
        *slot = acc;
    }
    let terminal = buf[m];
    let scale = 1.0 / (m as f64).sqrt();
    for (i, slot) in buf.iter_mut().enumerate() {
        *slot = (*slot - (i as f64 / m as f64) * terminal) * scale;
    }
    buf[0] = 0.0;
    buf[m] = 0.0;
}

pub fn sample_bridge(g: &mut Generator, n_steps: usize) -> Result<BridgePath> {
    if n_steps < 2 {
        return Err(Error::GridMismatch("a bridge needs at least two steps".into()));
    }
    let mut values = vec![0.0; n_steps + 1];
    fill_bridge(g, &mut values);
    Ok(BridgePath { values })
}

/// Brownian motion on `[0, T]` assembled from its terminal value and an
/// independent bridge: `t ↦ (t/T) w_T + √T B_{t/T}`.
pub fn bm_from_bridge(w_terminal: f64, bridge: &BridgePath, horizon: f64) -> Result<GridPath> {
    if !(horizon > 0.0 && horizon <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "T",
            value: horizon,
            reason: "must lie in (0, 1]",
        });
    }
    let m = bridge.n_steps();
    let root = horizon.sqrt();
    let mut values: Vec<f64> = bridge
        .values
        .iter()
        .enumerate()
        .map(|(i, b)| (i as f64 / m as f64) * w_terminal + root * b)
        .collect();
    values[0] = 0.0;
    values[m] = w_terminal;
    GridPath::new(0.0, horizon / m as f64, values)
}

/// `(𝔗¹, 𝔗²)`: distance from `t` up to the next point of the mesh `1/n`,
/// and that distance plus `1/n`.
pub fn grid_ceil_offsets(n: usize, t: f64) -> (f64, f64) {
    assert!(n >= 1 && t >= 0.0, "grid_ceil_offsets needs n ≥ 1 and t ≥ 0");
    let nf = n as f64;
    let next = (t * nf).ceil() / nf;
    let tau1 = (next - t).clamp(0.0, 1.0 / nf);
    let tau1 = if tau1 >= 1.0 / nf { 0.0 } else { tau1 };
    (tau1, tau1 + 1.0 / nf)
}

/// Index form of [`grid_ceil_offsets`] on a fine grid with `cell_steps`
/// fine steps per coarse cell: the first coarse-grid index at or after
/// fine index `fine_index`, expressed as a fine index.
pub fn next_cell_start(fine_index: usize, cell_steps: usize) -> usize {
    fine_index.div_ceil(cell_steps) * cell_steps
}

/// Number of `dt` steps in a cell of length `1/n`.
pub fn cell_steps(dt: f64, n: usize) -> Result<usize> {
    let ratio = 1.0 / (n as f64 * dt);
    let m = ratio.round();
    if m < 1.0 || ((ratio - m) / m).abs() > MESH_TOL {
        return Err(Error::GridMismatch(format!(
            "mesh {dt} does not divide the cell length 1/{n}"
        )));
    }
    Ok(m as usize)
}

fn same_mesh(a: f64, b: f64) -> bool {
    ((a - b) / a).abs() <= MESH_TOL
}

/// `G_n^marker(w, f)`: on `[0, 1/n]` the Box branch replaces `w` by the
/// chord from `(0, 0)` to `(1/n, w_{1/n})` plus `n^{-1/2} f(n t)`; the
/// Triangle branch and all times after `1/n` return `w`.
pub fn perturb_first_cell(
    w: &GridPath,
    f: &BridgePath,
    n: usize,
    marker: CellMarker,
) -> Result<GridPath> {
    let m = cell_steps(w.dt, n)?;
    if f.n_steps() != m {
        return Err(Error::GridMismatch(format!(
            "bridge has {} steps but the cell has {m}",
            f.n_steps()
        )));
    }
    if w.len() < m + 1 {
        return Err(Error::GridMismatch(format!(
            "path with {} values is shorter than one cell ({m} steps)",
            w.len()
        )));
    }
    if w.values[0] != 0.0 {
        return Err(Error::GridMismatch("path must start at 0".into()));
    }
    let mut out = w.clone();
    if marker == CellMarker::Box {
        let end = w.values[m];
        let scale = 1.0 / (n as f64).sqrt();
        for i in 0..m {
            out.values[i] = end * (i as f64 / m as f64) + scale * f.values[i];
        }
    }
    Ok(out)
}

/// `F_n^marker(r, w1, w_tri, w2, f)`: `w1` up to `r`, then the (possibly
/// perturbed) cell built from `w_tri` shifted by `w1_r`, then `w2` shifted
/// to continue from the cell's end. `r` is snapped to the common mesh.
#[allow(clippy::too_many_arguments)]
pub fn concat_with_cell(
    r: f64,
    w1: &GridPath,
    w_tri: &GridPath,
    w2: &GridPath,
    f: &BridgePath,
    n: usize,
    marker: CellMarker,
) -> Result<GridPath> {
    let dt = w1.dt;
    if !same_mesh(dt, w_tri.dt) || !same_mesh(dt, w2.dt) {
        return Err(Error::GridMismatch(format!(
            "meshes differ: {dt}, {}, {}",
            w_tri.dt, w2.dt
        )));
    }
    if r < 0.0 || !r.is_finite() {
        return Err(Error::InvalidParameter {
            name: "r",
            value: r,
            reason: "must be finite and ≥ 0",
        });
    }
    let j = (r / dt).round() as usize;
    if j >= w1.len() {
        return Err(Error::GridMismatch(format!(
            "restart offset index {j} beyond w1 ({} values)",
            w1.len()
        )));
    }
    if w2.values[0] != 0.0 {
        return Err(Error::GridMismatch("w2 must start at 0".into()));
    }
    let cell = perturb_first_cell(w_tri, f, n, marker)?;
    let m = f.n_steps();
    let base = w1.values[j];
    let cell_end = w_tri.values[m];

    let mut values = Vec::with_capacity(j + m + w2.len());
    values.extend_from_slice(&w1.values[..=j]);
    values.extend(cell.values[1..=m].iter().map(|v| v + base));
    values.extend(w2.values[1..].iter().map(|v| v + cell_end + base));
    GridPath::new(w1.t0, dt, values)
}

/// Conditional Brownian interpolation: every coarse cell is filled with an
/// independent bridge, and every coarse value is kept exactly.
pub fn refine(g: &mut Generator, w: &GridPath, factor: usize) -> Result<GridPath> {
    if factor < 2 {
        return Err(Error::GridMismatch("refine factor must be ≥ 2".into()));
    }
    let coarse = &w.values;
    let fine_len = w.n_steps() * factor + 1;
    let mut values = Vec::with_capacity(fine_len);
    let mut bridge = vec![0.0; factor + 1];
    let root = w.dt.sqrt();
    for k in 0..w.n_steps() {
        fill_bridge(g, &mut bridge);
        let (left, right) = (coarse[k], coarse[k + 1]);
        let rise = right - left;
        values.push(left);
        for (i, b) in bridge.iter().enumerate().take(factor).skip(1) {
            values.push(left + (i as f64 / factor as f64) * rise + root * b);
        }
    }
    values.push(w.terminal());
    GridPath::new(w.t0, w.dt / factor as f64, values)
}

/// Brownian scaling `s ↦ c^{-1/2} w(c s)` on the induced grid.
pub fn scale_path(w: &GridPath, c: f64) -> Result<GridPath> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "c",
            value: c,
            reason: "must be > 0",
        });
    }
    let factor = 1.0 / c.sqrt();
    GridPath::new(
        w.t0 / c,
        w.dt / c,
        w.values.iter().map(|v| v * factor).collect(),
    )
}
