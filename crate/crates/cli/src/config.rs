//! Flat key-value run configuration (TOML syntax).

use std::fmt;
use std::path::Path;

use actopt_core::beam_model::{project_initial_condition, BeamParams, InitialProfile, StateVector};
use actopt_core::shape::{validate_intervals, Grid};
use actopt_core::topo_opt::OptimizerConfig;
use actopt_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Optimize,
    Simulate,
    Sweep,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `w0 = sin(3 pi x)`, `v0 = 0`.
    Sin3pi,
    /// `w0 = sum amplitude * sin(n pi x)` over `modes`, `v0 = 0`.
    Modes,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    None,
    /// Reverses the sign of the gradient inside the finite-difference check.
    FlipGradientSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,

    pub kelvin_voigt: f64,
    pub viscous: f64,
    pub control_penalty: f64,
    pub horizon: f64,
    pub volume_target: f64,
    pub n_modes: usize,

    pub grid_cells: usize,
    pub n_steps: usize,
    pub substeps: usize,
    /// Doublings of `n_steps` allowed when the Riccati integration blows up.
    pub max_refinements: usize,

    pub beta0: f64,
    pub beta_min: f64,
    pub beta_shrink: f64,
    pub beta_grow: f64,
    pub stop_eps: f64,
    pub reinit_period: usize,
    pub max_iters: usize,
    pub alpha_schedule: Vec<f64>,

    pub initial: InitialState,
    /// `(n, amplitude)` pairs used with `initial = "modes"`.
    pub modes: Vec<(usize, f64)>,
    /// Initial actuator.
    pub intervals: Vec<(f64, f64)>,

    /// Shape for `simulate`: a `shape.csv` file, else `simulate_intervals`,
    /// else `intervals`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate_intervals: Option<Vec<(f64, f64)>>,
    /// Number of field snapshots written by `simulate`.
    pub snapshots: usize,

    pub sweep_modes: Vec<usize>,
    pub sweep_kelvin_voigt: Vec<f64>,

    pub check_grid_cells: usize,
    pub check_samples: usize,
    pub check_seed: u64,
    pub check_fault: Fault,
}

impl Default for RunConfig {
    fn default() -> Self {
        let beam = BeamParams::default();
        let opt = OptimizerConfig::default();
        Self {
            experiment: Experiment::Optimize,
            kelvin_voigt: beam.kelvin_voigt,
            viscous: beam.viscous,
            control_penalty: beam.control_penalty,
            horizon: beam.horizon,
            volume_target: beam.volume_target,
            n_modes: beam.n_modes,
            grid_cells: 200,
            n_steps: opt.n_steps,
            substeps: opt.substeps,
            max_refinements: 3,
            beta0: opt.beta0,
            beta_min: opt.beta_min,
            beta_shrink: opt.beta_shrink,
            beta_grow: opt.beta_grow,
            stop_eps: opt.stop_eps,
            reinit_period: opt.reinit_period,
            max_iters: opt.max_iters,
            alpha_schedule: opt.alpha_schedule,
            initial: InitialState::Sin3pi,
            modes: vec![(3, 1.0)],
            intervals: vec![(0.1, 0.9)],
            shape_file: None,
            simulate_intervals: None,
            snapshots: 200,
            sweep_modes: vec![10, 20, 30, 40],
            sweep_kelvin_voigt: vec![1e-4, 0.0],
            check_grid_cells: 400,
            check_samples: 20,
            check_seed: 7,
            check_fault: Fault::None,
        }
    }
}

/// A configuration problem, tied to the offending key when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "config key `{k}`: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

fn from_core(err: Error) -> ConfigError {
    match err {
        Error::InvalidParameter { name, reason } => ConfigError::at(name, reason),
        other => ConfigError {
            key: None,
            message: other.to_string(),
        },
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError {
                    key: None,
                    message: format!("cannot read {}: {e}", p.display()),
                })?;
                text.parse::<toml::Table>().map_err(|e| ConfigError {
                    key: None,
                    message: e.to_string(),
                })?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| ConfigError::at(item, "override must have the form key=value"))?;
            let key = key.trim();
            table.insert(key.to_string(), parse_value(key, value.trim()));
        }
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self, ConfigError> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError {
                key: None,
                message: e.message().to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.beam_params(self.final_alpha())
            .validate()
            .map_err(from_core)?;
        self.optimizer().validate().map_err(from_core)?;
        Grid::new(self.grid_cells)
            .map_err(|_| ConfigError::at("grid_cells", "must be at least 2"))?;
        Grid::new(self.check_grid_cells)
            .map_err(|_| ConfigError::at("check_grid_cells", "must be at least 2"))?;
        validate_intervals(&self.intervals)
            .map_err(|e| ConfigError::at("intervals", e.to_string()))?;
        if self.intervals.is_empty() {
            return Err(ConfigError::at(
                "intervals",
                "initial actuator must not be empty",
            ));
        }
        if let Some(iv) = &self.simulate_intervals {
            validate_intervals(iv)
                .map_err(|e| ConfigError::at("simulate_intervals", e.to_string()))?;
        }
        if self.initial == InitialState::Modes {
            for &(n, a) in &self.modes {
                if n == 0 || n > self.n_modes {
                    return Err(ConfigError::at(
                        "modes",
                        format!("mode index {n} outside 1..={}", self.n_modes),
                    ));
                }
                if !a.is_finite() {
                    return Err(ConfigError::at("modes", "amplitudes must be finite"));
                }
            }
        }
        if self.snapshots < 2 {
            return Err(ConfigError::at("snapshots", "must be at least 2"));
        }
        if self.sweep_modes.is_empty() || self.sweep_modes.contains(&0) {
            return Err(ConfigError::at(
                "sweep_modes",
                "must be a nonempty list of positive integers",
            ));
        }
        if self.sweep_kelvin_voigt.is_empty() {
            return Err(ConfigError::at("sweep_kelvin_voigt", "must not be empty"));
        }
        if self.check_samples == 0 {
            return Err(ConfigError::at("check_samples", "must be at least 1"));
        }
        Ok(())
    }

    /// Penalty used when a single shape is evaluated.
    pub fn final_alpha(&self) -> f64 {
        self.alpha_schedule.last().copied().unwrap_or(0.0)
    }

    pub fn beam_params(&self, alpha: f64) -> BeamParams {
        BeamParams {
            kelvin_voigt: self.kelvin_voigt,
            viscous: self.viscous,
            control_penalty: self.control_penalty,
            horizon: self.horizon,
            volume_penalty: alpha,
            volume_target: self.volume_target,
            n_modes: self.n_modes,
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            beta0: self.beta0,
            beta_min: self.beta_min,
            beta_shrink: self.beta_shrink,
            beta_grow: self.beta_grow,
            stop_eps: self.stop_eps,
            reinit_period: self.reinit_period,
            max_iters: self.max_iters,
            alpha_schedule: self.alpha_schedule.clone(),
            n_steps: self.n_steps,
            substeps: self.substeps,
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.grid_cells).expect("validated")
    }

    /// Initial state with `n_modes` modes.
    pub fn initial_state(&self, n_modes: usize) -> StateVector {
        // sin(n pi x) = phi_n / sqrt(2)
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let mut disp = vec![0.0; n_modes];
        match self.initial {
            InitialState::Sin3pi => {
                if n_modes >= 3 {
                    disp[2] = amp;
                }
            }
            InitialState::Modes => {
                for &(n, a) in &self.modes {
                    if n <= n_modes {
                        disp[n - 1] += a * amp;
                    }
                }
            }
            InitialState::Zero => {}
        }
        project_initial_condition(
            &InitialProfile::Modal(disp),
            &InitialProfile::Modal(Vec::new()),
            n_modes,
        )
    }
}

/// Interprets an override value as TOML, falling back to a bare string.
fn parse_value(key: &str, raw: &str) -> toml::Value {
    format!("{key} = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove(key))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
