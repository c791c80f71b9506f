//! Level-set shape optimization driven by the topological gradient.
//!
//! For a shape `omega` the discrete objective is
//! `J(omega) = Z0^T Pi(0) Z0 + alpha (|omega| - c)^2`. Its topological gradient
//! `g(x)` is the first-order change of `J` per unit length of material added
//! at `x`; removing material at `x` changes `J` by `-g(x)` per unit length.
//! A stationary shape therefore has `g <= 0` on `omega` and `g >= 0` outside,
//! which is the sign pattern of a level set with `omega = {psi < 0}`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::beam_model::{assemble_system, BeamParams, ModalBasis, ModalSystem, StateVector};
use crate::error::{invalid, Error, Result};
use crate::lqr::{
    closed_loop_sim_with, quadratic_cost, DreSolver, RiccatiSolution, SimOptions, Trajectory,
};
use crate::shape::{
    count_components, input_vector, measure, shape_from_levelset, signed_distance_reinit,
    symmetric_difference, ActuatorShape, Grid, LevelSet,
};

/// Line search, stopping and continuation settings, plus the time
/// discretization used for every cost and gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub beta0: f64,
    pub beta_min: f64,
    pub beta_shrink: f64,
    /// Growth factor after an accepted step; `beta` is capped at 1.
    pub beta_grow: f64,
    pub stop_eps: f64,
    /// Accepted iterations between signed-distance reinitializations.
    pub reinit_period: usize,
    /// Maximum number of accepted iterations per stage.
    pub max_iters: usize,
    pub alpha_schedule: Vec<f64>,
    /// Riccati grid intervals on `[0, tau]`.
    pub n_steps: usize,
    /// Closed-loop integration steps per Riccati interval.
    pub substeps: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            beta0: 0.5,
            beta_min: 1e-6,
            beta_shrink: 0.5,
            beta_grow: 1.2,
            stop_eps: 1e-7,
            reinit_period: 20,
            max_iters: 500,
            alpha_schedule: vec![0.1, 1.0, 10.0, 1e2, 1e3, 1e4],
            n_steps: 8000,
            substeps: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_min > 0.0 && self.beta_min < self.beta0 && self.beta0 <= 1.0) {
            return Err(invalid("beta0", "need 0 < beta_min < beta0 <= 1"));
        }
        if !(self.beta_shrink > 0.0 && self.beta_shrink < 1.0) {
            return Err(invalid("beta_shrink", "must lie in (0, 1)"));
        }
        if !(self.beta_grow >= 1.0 && self.beta_grow.is_finite()) {
            return Err(invalid("beta_grow", "must be at least 1"));
        }
        if self.stop_eps.is_nan() || self.stop_eps < 0.0 {
            return Err(invalid("stop_eps", "must be non-negative"));
        }
        if self.reinit_period == 0 {
            return Err(invalid("reinit_period", "must be at least 1"));
        }
        if self.alpha_schedule.is_empty() {
            return Err(invalid("alpha_schedule", "must not be empty"));
        }
        if self
            .alpha_schedule
            .iter()
            .any(|a| !(*a >= 0.0 && a.is_finite()))
            || self.alpha_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid(
                "alpha_schedule",
                "must be finite, non-negative and strictly increasing",
            ));
        }
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps", "must be at least 1"));
        }
        Ok(())
    }
}

/// One row of the optimization history: the starting shape of a run, then
/// one row per accepted iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Accepted iterations so far, counted across stages.
    pub iter: usize,
    pub alpha: f64,
    /// Step size of the accepted update (the initial value for stage starts).
    pub beta: f64,
    pub cost: f64,
    pub volume: f64,
    pub n_components: usize,
}

/// `g(x_j) = int_0^tau u(t) sum_n q_n(t) phi_n(x_j) dt + 2 alpha (vol - c)`
/// with `q` the velocity block of the costate `2 Pi Z`, by trapezoidal
/// quadrature on the trajectory samples.
pub fn topological_gradient(
    traj: &Trajectory,
    basis: &ModalBasis,
    grid: &Grid,
    alpha: f64,
    vol: f64,
    c: f64,
) -> Vec<f64> {
    let n = basis.n_modes();
    let mut weights = vec![0.0; n];
    for k in 0..traj.len() {
        let left = if k > 0 {
            traj.times[k] - traj.times[k - 1]
        } else {
            0.0
        };
        let right = if k + 1 < traj.len() {
            traj.times[k + 1] - traj.times[k]
        } else {
            0.0
        };
        let w = 0.5 * (left + right) * traj.control[k];
        if w == 0.0 {
            continue;
        }
        for (acc, q) in weights.iter_mut().zip(traj.adjoint_coeffs(k)) {
            *acc += w * q;
        }
    }
    let penalty = 2.0 * alpha * (vol - c);
    grid.centers()
        .into_iter()
        .map(|x| basis.synthesize(&weights, x) + penalty)
        .collect()
}

/// `g <= tol` on the shape and `g >= -tol` off it.
pub fn check_stationarity(g: &[f64], shape: &ActuatorShape, tol: f64) -> Result<bool> {
    let m = shape.grid().n_cells();
    if g.len() != m {
        return Err(Error::GridMismatch(g.len(), m));
    }
    Ok(g.iter()
        .zip(shape.cells())
        .all(|(&gj, &inside)| if inside { gj <= tol } else { gj >= -tol }))
}

/// `psi' = (1 - beta) psi + beta g / ||g||` with the grid L2 norm.
pub fn levelset_step(psi: &LevelSet, g: &[f64], beta: f64) -> Result<LevelSet> {
    let grid = psi.grid();
    if g.len() != grid.n_cells() {
        return Err(Error::GridMismatch(g.len(), grid.n_cells()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid("beta", "must lie in [0, 1]"));
    }
    let norm = grid.l2_norm(g);
    if norm == 0.0 {
        return Err(Error::ZeroGradient);
    }
    if !norm.is_finite() {
        return Err(invalid("g", "gradient must be finite"));
    }
    let values = psi
        .values()
        .iter()
        .zip(g)
        .map(|(p, gj)| (1.0 - beta) * p + beta * gj / norm)
        .collect();
    LevelSet::new(grid, values)
}

/// Cost of one actuator shape together with the Riccati solution behind it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub shape: ActuatorShape,
    pub volume: f64,
    /// `Z0^T Pi(0) Z0`
    pub lqr_cost: f64,
    /// `lqr_cost + alpha (volume - c)^2`
    pub cost: f64,
    pub system: ModalSystem,
    pub riccati: RiccatiSolution,
}

/// Everything that stays fixed while the shape varies: the beam, the grid,
/// the initial state and the Riccati integrator.
#[derive(Debug, Clone)]
pub struct ShapeProblem {
    params: BeamParams,
    grid: Grid,
    basis: ModalBasis,
    z0: StateVector,
    base: ModalSystem,
    solver: Arc<DreSolver>,
    sim: SimOptions,
}

impl ShapeProblem {
    pub fn new(
        params: &BeamParams,
        grid: Grid,
        z0: &StateVector,
        n_steps: usize,
        substeps: usize,
    ) -> Result<Self> {
        params.validate()?;
        if z0.n_modes() != params.n_modes {
            return Err(Error::DimensionMismatch {
                expected: params.n_modes,
                found: z0.n_modes(),
            });
        }
        if substeps == 0 {
            return Err(invalid("substeps", "must be at least 1"));
        }
        let basis = ModalBasis::new(params.n_modes);
        let base = assemble_system(params, &vec![0.0; params.n_modes])?;
        let solver = DreSolver::new(&base, params.control_penalty, params.horizon, n_steps)?;
        Ok(Self {
            params: *params,
            grid,
            basis,
            z0: z0.clone(),
            base,
            solver,
            sim: SimOptions { substeps },
        })
    }

    /// The same problem with another volume penalty; the solver is shared.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut next = self.clone();
        next.params.volume_penalty = alpha;
        next.params.validate()?;
        Ok(next)
    }

    pub fn params(&self) -> &BeamParams {
        &self.params
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn basis(&self) -> &ModalBasis {
        &self.basis
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.z0
    }

    pub fn solver(&self) -> &Arc<DreSolver> {
        &self.solver
    }

    pub fn system(&self, shape: &ActuatorShape) -> Result<ModalSystem> {
        self.check_grid(shape)?;
        let n = self.params.n_modes;
        let mut b = DVector::zeros(2 * n);
        b.rows_mut(n, n)
            .copy_from_slice(&input_vector(shape, &self.basis));
        self.base.with_input(b)
    }

    pub fn evaluate(&self, shape: &ActuatorShape) -> Result<Evaluation> {
        let system = self.system(shape)?;
        let riccati = self.solver.solve(system.b_vector(), false)?;
        let lqr_cost = quadratic_cost(&riccati, self.z0.coords());
        let volume = measure(shape);
        let p = &self.params;
        Ok(Evaluation {
            shape: shape.clone(),
            volume,
            lqr_cost,
            cost: lqr_cost + p.volume_penalty * (volume - p.volume_target).powi(2),
            system,
            riccati,
        })
    }

    pub fn closed_loop(&self, eval: &Evaluation) -> Result<Trajectory> {
        closed_loop_sim_with(&eval.system, &eval.riccati, &self.z0, self.sim)
    }

    pub fn gradient(&self, eval: &Evaluation) -> Result<Vec<f64>> {
        let traj = self.closed_loop(eval)?;
        let p = &self.params;
        Ok(topological_gradient(
            &traj,
            &self.basis,
            &self.grid,
            p.volume_penalty,
            eval.volume,
            p.volume_target,
        ))
    }

    fn check_grid(&self, shape: &ActuatorShape) -> Result<()> {
        if shape.grid() != self.grid {
            return Err(Error::GridMismatch(
                shape.grid().n_cells(),
                self.grid.n_cells(),
            ));
        }
        Ok(())
    }
}

/// Why a stage ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The trial shape coincided with the current one.
    Converged,
    /// The gradient vanished identically.
    Stationary,
    StepTooSmall,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct StageResult {
    pub shape: ActuatorShape,
    pub levelset: LevelSet,
    pub history: Vec<IterationRecord>,
    pub accepted: usize,
    pub stop: StopReason,
    /// Evaluation of the final shape.
    pub evaluation: Evaluation,
}

/// Progress notifications of a running optimization.
#[derive(Debug, Clone, Copy)]
pub enum Progress<'a> {
    /// A stage started or an update was accepted; `levelset` induces the
    /// recorded shape.
    Record {
        record: &'a IterationRecord,
        levelset: &'a LevelSet,
    },
    StageDone(&'a StageResult),
}

/// Level-set descent at the fixed penalty `params.volume_penalty`.
pub fn optimize_shape(
    params: &BeamParams,
    config: &OptimizerConfig,
    psi0: &LevelSet,
    z0: &StateVector,
) -> Result<StageResult> {
    config.validate()?;
    let problem = ShapeProblem::new(params, psi0.grid(), z0, config.n_steps, config.substeps)?;
    run_stage(&problem, config, psi0, 0, &mut |_| {})
}

/// Runs one stage on a prepared problem. `first_iter` offsets the iteration
/// numbers in the history.
pub fn run_stage(
    problem: &ShapeProblem,
    config: &OptimizerConfig,
    psi0: &LevelSet,
    first_iter: usize,
    on_progress: &mut dyn FnMut(Progress<'_>),
) -> Result<StageResult> {
    let alpha = problem.params().volume_penalty;
    let mut psi = psi0.clone();
    let shape = shape_from_levelset(&psi);
    if shape.is_empty() {
        return Err(Error::EmptyShape);
    }
    let mut current = problem.evaluate(&shape)?;
    let mut beta = config.beta0;
    let record = |iter: usize, beta: f64, e: &Evaluation| IterationRecord {
        iter,
        alpha,
        beta,
        cost: e.cost,
        volume: e.volume,
        n_components: count_components(&e.shape),
    };
    let mut history = vec![record(first_iter, beta, &current)];
    on_progress(Progress::Record {
        record: &history[0],
        levelset: &psi,
    });
    let mut accepted = 0;

    let stop = 'outer: loop {
        if accepted >= config.max_iters {
            break StopReason::MaxIterations;
        }
        let g = problem.gradient(&current)?;
        if problem.grid().l2_norm(&g) == 0.0 {
            break StopReason::Stationary;
        }
        loop {
            if beta < config.beta_min {
                if accepted == 0 {
                    return Err(Error::LineSearchStalled {
                        beta_min: config.beta_min,
                    });
                }
                break 'outer StopReason::StepTooSmall;
            }
            let trial_psi = levelset_step(&psi, &g, beta)?;
            let trial_shape = shape_from_levelset(&trial_psi);
            if symmetric_difference(&trial_shape, &current.shape)? < config.stop_eps {
                // psi moves linearly in beta, so smaller steps cannot change
                // the shape either
                break 'outer StopReason::Converged;
            }
            if trial_shape.is_empty() {
                beta *= config.beta_shrink;
                continue;
            }
            let trial = problem.evaluate(&trial_shape)?;
            if trial.cost < current.cost {
                accepted += 1;
                psi = if accepted % config.reinit_period == 0 {
                    signed_distance_reinit(&trial_psi)
                } else {
                    trial_psi
                };
                current = trial;
                history.push(record(first_iter + accepted, beta, &current));
                on_progress(Progress::Record {
                    record: history.last().expect("just pushed"),
                    levelset: &psi,
                });
                beta = (beta * config.beta_grow).min(1.0);
                break;
            }
            beta *= config.beta_shrink;
        }
    };

    let result = StageResult {
        shape: current.shape.clone(),
        levelset: psi,
        history,
        accepted,
        stop,
        evaluation: current,
    };
    on_progress(Progress::StageDone(&result));
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub shape: ActuatorShape,
    pub levelset: LevelSet,
    /// The initial record followed by one record per accepted iteration.
    pub history: Vec<IterationRecord>,
    pub stages: Vec<StageSummary>,
    pub evaluation: Evaluation,
    /// Riccati grid intervals actually used.
    pub n_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSummary {
    pub alpha: f64,
    pub accepted: usize,
    pub stop: StopReason,
}

/// Runs [`optimize_shape`] for every penalty of the schedule, warm-starting
/// the level set and resetting the step size per stage.
pub fn continuation(
    params: &BeamParams,
    config: &OptimizerConfig,
    psi0: &LevelSet,
    z0: &StateVector,
) -> Result<ContinuationResult> {
    continuation_with(params, config, psi0, z0, |_| {})
}

/// [`continuation`] reporting every record and finished stage.
pub fn continuation_with(
    params: &BeamParams,
    config: &OptimizerConfig,
    psi0: &LevelSet,
    z0: &StateVector,
    mut on_progress: impl FnMut(Progress<'_>),
) -> Result<ContinuationResult> {
    config.validate()?;
    let base = ShapeProblem::new(params, psi0.grid(), z0, config.n_steps, config.substeps)?;
    let mut psi = psi0.clone();
    let mut history = Vec::new();
    let mut stages = Vec::new();
    let mut iter = 0;
    let mut last = None;
    for (k, &alpha) in config.alpha_schedule.iter().enumerate() {
        let problem = base.with_alpha(alpha)?;
        let stage = run_stage(&problem, config, &psi, iter, &mut on_progress)?;
        iter += stage.accepted;
        // later stages start from the previous stage's final shape
        let skip = usize::from(k > 0);
        history.extend(stage.history.iter().skip(skip).cloned());
        stages.push(StageSummary {
            alpha,
            accepted: stage.accepted,
            stop: stage.stop,
        });
        psi = stage.levelset.clone();
        last = Some(stage);
    }
    let last = last.expect("schedule is non-empty");
    Ok(ContinuationResult {
        shape: last.shape,
        levelset: last.levelset,
        history,
        stages,
        evaluation: last.evaluation,
        n_steps: config.n_steps,
    })
}

/// [`continuation_with`] that restarts with twice as many Riccati steps,
/// at most `max_refinements` times, when the integration blows up.
pub fn continuation_refined(
    params: &BeamParams,
    config: &OptimizerConfig,
    psi0: &LevelSet,
    z0: &StateVector,
    max_refinements: usize,
    mut on_progress: impl FnMut(Progress<'_>),
) -> Result<ContinuationResult> {
    let mut config = config.clone();
    let mut left = max_refinements;
    loop {
        match continuation_with(params, &config, psi0, z0, &mut on_progress) {
            Err(Error::NonFinite { .. }) if left > 0 => {
                left -= 1;
                config.n_steps *= 2;
            }
            other => return other,
        }
    }
}
