//! CSV artifacts.

use std::fs::File;
use std::io;
use std::path::Path;

use actopt_core::lqr::Trajectory;
use actopt_core::shape::{ActuatorShape, Grid, LevelSet};
use actopt_core::topo_opt::IterationRecord;

/// Fixed scientific notation with 15 digits after the point.
pub fn num(v: f64) -> String {
    format!("{v:.15e}")
}

pub struct Table {
    writer: csv::Writer<File>,
}

impl Table {
    pub fn create(path: &Path, header: &[&str]) -> io::Result<Self> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> io::Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

pub fn write_history(path: &Path, history: &[IterationRecord]) -> io::Result<()> {
    let mut t = Table::create(
        path,
        &["iter", "alpha", "beta", "cost", "volume", "n_components"],
    )?;
    for r in history {
        t.row([
            r.iter.to_string(),
            num(r.alpha),
            num(r.beta),
            num(r.cost),
            num(r.volume),
            r.n_components.to_string(),
        ])?;
    }
    t.finish()
}

pub fn write_shape(path: &Path, shape: &ActuatorShape, psi: Option<&LevelSet>) -> io::Result<()> {
    let grid = shape.grid();
    let mut t = Table::create(path, &["x_center", "indicator", "psi"])?;
    for j in 0..grid.n_cells() {
        let inside = shape.contains(j);
        // without a level set, report the signed distance of the shape
        let value = match psi {
            Some(p) => p.values()[j],
            None if inside => -1.0,
            None => 1.0,
        };
        t.row([
            num(grid.center(j)),
            u8::from(inside).to_string(),
            num(value),
        ])?;
    }
    t.finish()
}

/// Reads the `indicator` column of a shape file.
pub fn read_shape(path: &Path) -> Result<ActuatorShape, String> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let headers = reader
        .headers()
        .map_err(|e| format!("{}: {e}", path.display()))?
        .clone();
    let col = headers
        .iter()
        .position(|h| h == "indicator")
        .ok_or_else(|| format!("{}: missing `indicator` column", path.display()))?;
    let mut cells = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let field = rec.get(col).unwrap_or("").trim();
        let inside = match field {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(format!(
                    "{}: row {}: bad indicator `{other}`",
                    path.display(),
                    line + 1
                ))
            }
        };
        cells.push(inside);
    }
    let grid = Grid::new(cells.len()).map_err(|e| format!("{}: {e}", path.display()))?;
    ActuatorShape::new(grid, cells).map_err(|e| e.to_string())
}

/// `t, u, a_1..a_N, adot_1..adot_N` at every `stride`-th sample (and the last).
pub fn write_trajectory(path: &Path, traj: &Trajectory, stride: usize) -> io::Result<()> {
    let n = traj.states.first().map_or(0, |z| z.len() / 2);
    let mut header = vec!["t".to_string(), "u".to_string()];
    header.extend((1..=n).map(|i| format!("a_{i}")));
    header.extend((1..=n).map(|i| format!("adot_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::create(path, &header)?;
    for k in sample_indices(traj.len(), stride) {
        let mut row = vec![num(traj.times[k]), num(traj.control[k])];
        row.extend(traj.states[k].iter().map(|v| num(*v)));
        t.row(row)?;
    }
    t.finish()
}

fn sample_indices(len: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if len > 0 && idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

/// Rows of `t` followed by `field(k, j)` for every cell `j`, at `count`
/// evenly spaced samples `k`.
pub fn write_snapshots(
    path: &Path,
    traj: &Trajectory,
    grid: Grid,
    count: usize,
    field: impl Fn(usize, usize) -> f64,
) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(grid.centers().iter().map(|x| format!("x={x:.6}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::create(path, &header)?;
    let last = traj.len() - 1;
    let count = count.min(traj.len());
    for i in 0..count {
        let k = if count == 1 {
            0
        } else {
            (i * last + (count - 1) / 2) / (count - 1)
        };
        let mut row = vec![num(traj.times[k])];
        row.extend((0..grid.n_cells()).map(|j| num(field(k, j))));
        t.row(row)?;
    }
    t.finish()
}

/// Two-row table of named values.
pub fn write_summary(path: &Path, fields: &[(&str, String)]) -> io::Result<()> {
    let header: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
    let mut t = Table::create(path, &header)?;
    t.row(fields.iter().map(|(_, v)| v.as_str()))?;
    t.finish()
}
