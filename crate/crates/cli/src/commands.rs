use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use actopt_core::beam_model::{h_norm_sq, mode_eval, StateVector};
use actopt_core::lqr::{kalman_gain, open_loop_sim};
use actopt_core::shape::{count_components, ActuatorShape, LevelSet};
use actopt_core::topo_opt::{
    continuation_refined, ContinuationResult, Evaluation, Progress, ShapeProblem,
};
use actopt_core::Error;
use nalgebra::DVector;

use crate::config::{ConfigError, RunConfig};
use crate::output::{
    num, read_shape, write_history, write_shape, write_snapshots, write_summary, write_trajectory,
    Table,
};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// Invalid input data other than the configuration itself.
    Input(String),
    Numerical(String),
    Io(io::Error),
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::CheckFailed(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite { .. }
            | Error::LineSearchStalled { .. }
            | Error::ZeroGradient
            | Error::NotBlockDiagonal => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn report(p: Progress<'_>) {
    match p {
        Progress::Record { record: r, .. } => eprintln!(
            "iter {:4}  alpha {:8.1e}  beta {:8.2e}  cost {:.10e}  volume {:.4}  components {}",
            r.iter, r.alpha, r.beta, r.cost, r.volume, r.n_components
        ),
        Progress::StageDone(s) => eprintln!(
            "stage alpha {:.1e} done: {} accepted, stop {:?}",
            s.history[0].alpha, s.accepted, s.stop
        ),
    }
}

fn gain_norm(eval: &Evaluation, gamma: f64) -> f64 {
    kalman_gain(&eval.riccati, &eval.system, gamma).norm()
}

fn run_continuation(
    cfg: &RunConfig,
    n_modes: usize,
    kelvin_voigt: f64,
) -> CliResult<ContinuationResult> {
    let params = actopt_core::beam_model::BeamParams {
        n_modes,
        kelvin_voigt,
        ..cfg.beam_params(cfg.alpha_schedule[0])
    };
    let psi0 = LevelSet::from_intervals(cfg.grid(), &cfg.intervals)?;
    let z0 = cfg.initial_state(n_modes);
    Ok(continuation_refined(
        &params,
        &cfg.optimizer(),
        &psi0,
        &z0,
        cfg.max_refinements,
        report,
    )?)
}

fn write_resolved(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    fs::write(out.join("resolved_config.toml"), cfg.to_toml())?;
    Ok(())
}

pub fn optimize(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let result = run_continuation(cfg, cfg.n_modes, cfg.kelvin_voigt)?;
    fs::create_dir_all(out)?;
    write_resolved(cfg, out)?;
    write_history(&out.join("history.csv"), &result.history)?;
    write_shape(
        &out.join("shape.csv"),
        &result.shape,
        Some(&result.levelset),
    )?;
    let e = &result.evaluation;
    let accepted: usize = result.stages.iter().map(|s| s.accepted).sum();
    write_summary(
        &out.join("summary.csv"),
        &[
            ("cost", num(e.cost)),
            ("lqr_cost", num(e.lqr_cost)),
            ("volume", num(e.volume)),
            ("n_components", count_components(&result.shape).to_string()),
            ("gain_norm", num(gain_norm(e, cfg.control_penalty))),
            ("initial_cost", num(result.history[0].cost)),
            ("accepted", accepted.to_string()),
            ("n_steps", result.n_steps.to_string()),
        ],
    )?;
    eprintln!("final shape {:?}", result.shape.intervals());
    Ok(())
}

fn simulation_shape(cfg: &RunConfig) -> CliResult<ActuatorShape> {
    if let Some(file) = &cfg.shape_file {
        return read_shape(Path::new(file)).map_err(CliError::Input);
    }
    let intervals = cfg.simulate_intervals.as_ref().unwrap_or(&cfg.intervals);
    Ok(ActuatorShape::from_intervals(cfg.grid(), intervals)?)
}

/// Evaluates `shape`, doubling the Riccati grid on blow-up.
fn evaluate_refined(
    cfg: &RunConfig,
    shape: &ActuatorShape,
    z0: &StateVector,
) -> CliResult<(ShapeProblem, Evaluation)> {
    let params = cfg.beam_params(cfg.final_alpha());
    let mut n_steps = cfg.n_steps;
    let mut left = cfg.max_refinements;
    loop {
        let problem = ShapeProblem::new(&params, shape.grid(), z0, n_steps, cfg.substeps)?;
        match problem.evaluate(shape) {
            Ok(eval) => return Ok((problem, eval)),
            Err(Error::NonFinite { .. }) if left > 0 => {
                left -= 1;
                n_steps *= 2;
            }
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let shape = simulation_shape(cfg)?;
    let z0 = cfg.initial_state(cfg.n_modes);
    let (problem, eval) = evaluate_refined(cfg, &shape, &z0)?;
    let closed = problem.closed_loop(&eval)?;
    let n_steps = problem.solver().n_steps();
    let open = open_loop_sim(&eval.system, &z0, cfg.horizon, n_steps * cfg.substeps)?;

    fs::create_dir_all(out)?;
    write_resolved(cfg, out)?;
    write_trajectory(&out.join("trajectory.csv"), &closed, cfg.substeps)?;
    write_trajectory(&out.join("open_loop.csv"), &open, cfg.substeps)?;

    let n = cfg.n_modes;
    let grid = shape.grid();
    let centers = grid.centers();
    let modes: Vec<Vec<f64>> = centers
        .iter()
        .map(|&x| {
            (1..=n)
                .map(|k| mode_eval(k, x).expect("x in [0, 1]"))
                .collect()
        })
        .collect();
    let field =
        |coeffs: &[f64], j: usize| modes[j].iter().zip(coeffs).map(|(p, c)| p * c).sum::<f64>();
    let z = |k: usize| closed.states[k].as_slice();
    write_snapshots(
        &out.join("displacement.csv"),
        &closed,
        grid,
        cfg.snapshots,
        |k, j| field(&z(k)[..n], j),
    )?;
    write_snapshots(
        &out.join("velocity.csv"),
        &closed,
        grid,
        cfg.snapshots,
        |k, j| field(&z(k)[n..], j),
    )?;

    let basis = problem.basis();
    let energy = |v: &DVector<f64>| {
        h_norm_sq(
            &StateVector::from_coords(v.clone()).expect("even length"),
            basis,
        )
        .expect("matching modes")
    };
    let q = basis.state_weight();
    write_summary(
        &out.join("simulate_summary.csv"),
        &[
            ("cost", num(eval.cost)),
            ("lqr_cost", num(eval.lqr_cost)),
            (
                "running_cost",
                num(closed.running_cost(&q, cfg.control_penalty)),
            ),
            ("max_abs_u", num(closed.max_abs_control())),
            ("volume", num(eval.volume)),
            ("n_components", count_components(&shape).to_string()),
            ("gain_norm", num(gain_norm(&eval, cfg.control_penalty))),
            ("energy_initial", num(energy(z0.coords()))),
            (
                "energy_final_closed",
                num(energy(closed.states.last().expect("nonempty"))),
            ),
            (
                "energy_final_open",
                num(energy(open.states.last().expect("nonempty"))),
            ),
            ("n_steps", n_steps.to_string()),
        ],
    )?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    fs::create_dir_all(out)?;
    write_resolved(cfg, out)?;
    let mut table = Table::create(
        &out.join("sweep.csv"),
        &["N", "C_d", "gain_norm", "cost", "volume", "n_components"],
    )?;
    for &cd in &cfg.sweep_kelvin_voigt {
        for &n in &cfg.sweep_modes {
            eprintln!("sweep: N = {n}, C_d = {cd:e}");
            let result = run_continuation(cfg, n, cd)?;
            let dir = out.join(format!("N{n}_Cd{cd:e}"));
            fs::create_dir_all(&dir)?;
            write_shape(
                &dir.join("shape.csv"),
                &result.shape,
                Some(&result.levelset),
            )?;
            write_history(&dir.join("history.csv"), &result.history)?;
            let e = &result.evaluation;
            table.row([
                n.to_string(),
                num(cd),
                num(gain_norm(e, cfg.control_penalty)),
                num(e.cost),
                num(e.volume),
                count_components(&result.shape).to_string(),
            ])?;
        }
    }
    table.finish()?;
    Ok(())
}
