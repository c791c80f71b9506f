//! Grid representation of actuator shapes and their level-set functions.
//!
//! The unit interval is split into `M` uniform cells. A shape is a boolean
//! mask over cells; a level set holds one value per cell centre and induces
//! the shape `{psi < 0}` (cells where `psi == 0` are outside).

use std::f64::consts::{PI, SQRT_2};

use crate::beam_model::ModalBasis;
use crate::error::{invalid, Error, Result};

/// Uniform partition of `[0, 1]` into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n_cells: usize,
}

impl Grid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(invalid("n_cells", "a grid needs at least 2 cells"));
        }
        Ok(Self { n_cells })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn edge(&self, j: usize) -> f64 {
        if j == self.n_cells {
            1.0
        } else {
            j as f64 / self.n_cells as f64
        }
    }

    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.n_cells as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|j| self.center(j)).collect()
    }

    /// Grid-weighted L2 norm `(h sum v_j^2)^(1/2)`.
    pub fn l2_norm(&self, values: &[f64]) -> f64 {
        (self.cell_width() * values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Validates a list of closed intervals inside `[0, 1]`: each must satisfy
/// `a < b`, and the intervals must not overlap.
pub fn validate_intervals(intervals: &[(f64, f64)]) -> Result<()> {
    let mut sorted = intervals.to_vec();
    for &(a, b) in &sorted {
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b && b <= 1.0) {
            return Err(invalid(
                "intervals",
                format!("[{a}, {b}] is not an increasing interval inside [0, 1]"),
            ));
        }
    }
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    for w in sorted.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(invalid(
                "intervals",
                format!("[{}, {}] overlaps [{}, {}]", w[0].0, w[0].1, w[1].0, w[1].1),
            ));
        }
    }
    Ok(())
}

/// Indicator of the actuator set on a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActuatorShape {
    grid: Grid,
    cells: Vec<bool>,
}

impl ActuatorShape {
    pub fn new(grid: Grid, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_cells(),
                found: cells.len(),
            });
        }
        Ok(Self { grid, cells })
    }

    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            cells: vec![false; grid.n_cells()],
        }
    }

    /// Cells whose centre lies in one of the closed intervals.
    pub fn from_intervals(grid: Grid, intervals: &[(f64, f64)]) -> Result<Self> {
        validate_intervals(intervals)?;
        let cells = (0..grid.n_cells())
            .map(|j| {
                let x = grid.center(j);
                intervals.iter().any(|&(a, b)| a <= x && x <= b)
            })
            .collect();
        Ok(Self { grid, cells })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn contains(&self, j: usize) -> bool {
        self.cells[j]
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    /// Copy with the membership of cell `j` flipped.
    pub fn toggled(&self, j: usize) -> Self {
        let mut out = self.clone();
        out.cells[j] = !out.cells[j];
        out
    }

    /// Reflection about `x = 1/2`.
    pub fn mirrored(&self) -> Self {
        let mut cells = self.cells.clone();
        cells.reverse();
        Self {
            grid: self.grid,
            cells,
        }
    }

    /// Maximal runs of consecutive cells, as `(first, last)` index pairs.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for (j, &c) in self.cells.iter().enumerate() {
            match (c, start) {
                (true, None) => start = Some(j),
                (false, Some(s)) => {
                    runs.push((s, j - 1));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.cells.len() - 1));
        }
        runs
    }

    /// The shape as closed intervals `[x_left, x_right]`.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        self.runs()
            .into_iter()
            .map(|(a, b)| (self.grid.edge(a), self.grid.edge(b + 1)))
            .collect()
    }
}

/// Level-set function sampled at cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    grid: Grid,
    values: Vec<f64>,
}

impl LevelSet {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_cells(),
                found: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.centers().into_iter().map(f).collect(),
        }
    }

    /// Signed distance to the boundary of a union of intervals (negative
    /// inside). Ends of the domain are not part of the boundary.
    pub fn from_intervals(grid: Grid, intervals: &[(f64, f64)]) -> Result<Self> {
        let shape = ActuatorShape::from_intervals(grid, intervals)?;
        if shape.is_empty() {
            return Ok(Self::from_fn(grid, |_| 1.0));
        }
        let interfaces: Vec<f64> = intervals
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .filter(|&x| x > 0.0 && x < 1.0)
            .collect();
        if interfaces.is_empty() {
            return Ok(Self::from_fn(grid, |_| -1.0));
        }
        let values = (0..grid.n_cells())
            .map(|j| {
                let x = grid.center(j);
                let d = interfaces
                    .iter()
                    .map(|p| (x - p).abs())
                    .fold(f64::INFINITY, f64::min);
                if shape.contains(j) {
                    -d.max(f64::MIN_POSITIVE)
                } else {
                    d
                }
            })
            .collect();
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The shape `{psi < 0}`.
pub fn shape_from_levelset(psi: &LevelSet) -> ActuatorShape {
    ActuatorShape {
        grid: psi.grid,
        cells: psi.values.iter().map(|&v| v < 0.0).collect(),
    }
}

/// Lebesgue measure `h * #cells`.
pub fn measure(shape: &ActuatorShape) -> f64 {
    shape.cells.iter().filter(|&&c| c).count() as f64 * shape.grid.cell_width()
}

/// `b_n = int_omega phi_n dx`, exact on every run of cells via the
/// antiderivative `-sqrt(2) cos(n pi x) / (n pi)`.
pub fn input_vector(shape: &ActuatorShape, basis: &ModalBasis) -> Vec<f64> {
    let runs = shape.intervals();
    (1..=basis.n_modes())
        .map(|n| {
            let k = n as f64 * PI;
            runs.iter()
                .map(|&(l, r)| SQRT_2 * ((k * l).cos() - (k * r).cos()) / k)
                .sum()
        })
        .collect()
}

/// Measure of the symmetric difference `h * #{cells where s1 != s2}`.
pub fn symmetric_difference(s1: &ActuatorShape, s2: &ActuatorShape) -> Result<f64> {
    if s1.grid != s2.grid {
        return Err(Error::GridMismatch(s1.grid.n_cells, s2.grid.n_cells));
    }
    let differing = s1
        .cells
        .iter()
        .zip(&s2.cells)
        .filter(|(a, b)| a != b)
        .count();
    Ok(differing as f64 * s1.grid.cell_width())
}

pub fn count_components(shape: &ActuatorShape) -> usize {
    shape.runs().len()
}

/// Replaces `psi` by the signed distance to its zero crossings.
///
/// Crossings are located by linear interpolation between adjacent cell
/// centres whose membership differs. The induced shape is preserved exactly;
/// a level set of uniform sign maps to the constant `-1` or `+1`.
pub fn signed_distance_reinit(psi: &LevelSet) -> LevelSet {
    let shape = shape_from_levelset(psi);
    let grid = psi.grid;
    let h = grid.cell_width();
    let mut crossings = Vec::new();
    for j in 0..grid.n_cells() - 1 {
        if shape.cells[j] != shape.cells[j + 1] {
            let (a, b) = (psi.values[j], psi.values[j + 1]);
            let t = if a == b { 0.5 } else { a / (a - b) };
            crossings.push(grid.center(j) + h * t.clamp(0.0, 1.0));
        }
    }
    if crossings.is_empty() {
        let v = if shape.cells[0] { -1.0 } else { 1.0 };
        return LevelSet::from_fn(grid, |_| v);
    }
    // crossings are sorted; the nearest one is found by bisection
    let values = (0..grid.n_cells())
        .map(|j| {
            let x = grid.center(j);
            let i = crossings.partition_point(|&c| c < x);
            let mut d = f64::INFINITY;
            if i < crossings.len() {
                d = d.min(crossings[i] - x);
            }
            if i > 0 {
                d = d.min(x - crossings[i - 1]);
            }
            if shape.cells[j] {
                -d.max(f64::MIN_POSITIVE)
            } else {
                d
            }
        })
        .collect();
    LevelSet { grid, values }
}
