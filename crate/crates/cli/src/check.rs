//! Self-checks of the numerical pipeline on the configured problem.

use std::path::Path;

use actopt_core::beam_model::{ModalSystem, StateVector};
use actopt_core::lqr::solve_dre;
use actopt_core::shape::{ActuatorShape, Grid};
use actopt_core::topo_opt::ShapeProblem;
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::commands::{CliError, CliResult};
use crate::config::{Fault, RunConfig};
use crate::output::{num, Table};

struct Outcome {
    name: &'static str,
    passed: bool,
    value: f64,
    detail: String,
}

fn tanh_error(n_steps: usize) -> CliResult<f64> {
    let sys = ModalSystem::dense(
        DMatrix::zeros(1, 1),
        DVector::from_element(1, 1.0),
        DMatrix::identity(1, 1),
    )?;
    let sol = solve_dre(&sys, 1.0, 5.0, n_steps)?;
    Ok(sol
        .matrices()
        .iter()
        .zip(sol.time_grid())
        .map(|(p, t)| (p[(0, 0)] - (5.0 - t).tanh()).abs())
        .fold(0.0, f64::max))
}

/// Scalar problem with the closed-form solution `tanh(5 - t)`.
fn riccati_oracle() -> CliResult<Outcome> {
    let errs = [500, 1000, 2000, 4000]
        .iter()
        .map(|&n| tanh_error(n))
        .collect::<CliResult<Vec<f64>>>()?;
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let passed = errs[0] < 1e-6 && orders.iter().all(|p| (p - 4.0).abs() < 0.3);
    Ok(Outcome {
        name: "riccati_oracle",
        passed,
        value: errs[0],
        detail: format!(
            "errors [{}], orders {orders:.3?}",
            errs.iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    })
}

fn problem(cfg: &RunConfig, grid: Grid, z0: &StateVector) -> CliResult<ShapeProblem> {
    let params = cfg.beam_params(cfg.final_alpha());
    Ok(ShapeProblem::new(
        &params,
        grid,
        z0,
        cfg.n_steps,
        cfg.substeps,
    )?)
}

/// `Z0' Pi(0) Z0` against the running cost of the simulated closed loop.
fn cost_identity(cfg: &RunConfig) -> CliResult<Outcome> {
    let z0 = cfg.initial_state(cfg.n_modes);
    let p = problem(cfg, cfg.grid(), &z0)?;
    let shape = ActuatorShape::from_intervals(cfg.grid(), &cfg.intervals)?;
    let eval = p.evaluate(&shape)?;
    let traj = p.closed_loop(&eval)?;
    let running = traj.running_cost(&p.basis().state_weight(), cfg.control_penalty);
    let rel = if eval.lqr_cost == 0.0 {
        running.abs()
    } else {
        (running - eval.lqr_cost).abs() / eval.lqr_cost
    };
    Ok(Outcome {
        name: "cost_identity",
        passed: rel < 1e-3,
        value: rel,
        detail: format!("riccati {:.10e}, simulated {running:.10e}", eval.lqr_cost),
    })
}

/// Single-cell flips against the first-order prediction of the gradient.
fn finite_differences(cfg: &RunConfig) -> CliResult<Outcome> {
    let grid = Grid::new(cfg.check_grid_cells)?;
    let z0 = cfg.initial_state(cfg.n_modes);
    let p = problem(cfg, grid, &z0)?;
    let shape = ActuatorShape::from_intervals(grid, &cfg.intervals)?;
    let base = p.evaluate(&shape)?;
    let mut g = p.gradient(&base)?;
    if cfg.check_fault == Fault::FlipGradientSign {
        g.iter_mut().for_each(|v| *v = -*v);
    }
    let g_max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cells: Vec<usize> = (0..grid.n_cells())
        .filter(|&j| g[j].abs() > 1e-3 * g_max)
        .collect();
    cells.shuffle(&mut StdRng::seed_from_u64(cfg.check_seed));
    cells.truncate(cfg.check_samples);
    if cells.is_empty() {
        return Ok(Outcome {
            name: "gradient_fd",
            passed: false,
            value: 0.0,
            detail: "gradient vanishes on every cell".into(),
        });
    }
    let h = grid.cell_width();
    let mut agree = 0;
    let mut worst = 1.0f64;
    for &j in &cells {
        let dj = p.evaluate(&shape.toggled(j))?.cost - base.cost;
        let predicted = if shape.contains(j) {
            -h * g[j]
        } else {
            h * g[j]
        };
        if dj.signum() == predicted.signum() {
            agree += 1;
        }
        let ratio = (dj / predicted).abs();
        if (ratio.ln()).abs() > worst.ln().abs() || !ratio.is_finite() {
            worst = ratio;
        }
    }
    let share = agree as f64 / cells.len() as f64;
    Ok(Outcome {
        name: "gradient_fd",
        passed: share >= 0.95 && (0.5..=2.0).contains(&worst),
        value: share,
        detail: format!(
            "{agree}/{} signs agree, worst ratio {worst:.4}",
            cells.len()
        ),
    })
}

/// A mirror-symmetric problem must produce a mirror-symmetric gradient.
fn symmetry(cfg: &RunConfig) -> CliResult<Outcome> {
    let grid = cfg.grid();
    let mut z0 = cfg.initial_state(cfg.n_modes);
    let n = cfg.n_modes;
    let mut coords = z0.coords().clone();
    // even modes are odd about x = 1/2
    for i in (1..n).step_by(2) {
        coords[i] = 0.0;
        coords[n + i] = 0.0;
    }
    z0 = StateVector::from_coords(coords)?;
    let half = ActuatorShape::from_intervals(grid, &cfg.intervals)?;
    let mirror = half.mirrored();
    let cells = half
        .cells()
        .iter()
        .zip(mirror.cells())
        .map(|(a, b)| *a || *b)
        .collect();
    let shape = ActuatorShape::new(grid, cells)?;
    let p = problem(cfg, grid, &z0)?;
    let g = p.gradient(&p.evaluate(&shape)?)?;
    let m = grid.n_cells();
    let worst = (0..m)
        .map(|j| (g[j] - g[m - 1 - j]).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        name: "gradient_symmetry",
        passed: worst < 1e-8,
        value: worst,
        detail: format!("max |g(x) - g(1 - x)| = {worst:.3e}"),
    })
}

pub fn check(cfg: &RunConfig, out: Option<&Path>) -> CliResult<()> {
    let outcomes = vec![
        riccati_oracle()?,
        cost_identity(cfg)?,
        finite_differences(cfg)?,
        symmetry(cfg)?,
    ];
    for o in &outcomes {
        println!(
            "{} {}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut t = Table::create(&dir.join("check.csv"), &["check", "passed", "value"])?;
        for o in &outcomes {
            t.row([o.name.to_string(), o.passed.to_string(), num(o.value)])?;
        }
        t.finish()?;
    }
    match outcomes.iter().filter(|o| !o.passed).count() {
        0 => Ok(()),
        n => Err(CliError::CheckFailed(n)),
    }
}
