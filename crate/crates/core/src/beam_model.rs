//! Modal discretization of the simply supported Euler-Bernoulli beam with
//! Kelvin-Voigt and viscous damping.
//!
//! The displacement is expanded in the eigenfunctions `phi_n(x) = sqrt(2) sin(n pi x)`
//! of the fourth-derivative operator, whose eigenvalues are `(n pi)^4`. Each mode
//! obeys
//!
//! ```text
//! a_n'' = -lambda_n a_n - (C_d lambda_n + mu) a_n' + b_n u
//! ```
//!
//! and the modal ODEs are packed into a first-order system on the state
//! `Z = (a_1, ..., a_N, a_1', ..., a_N')`. The energy norm
//! `int (w'')^2 + w^2 + v^2 dx` becomes the diagonal weight
//! `Q = diag(lambda_1 + 1, ..., lambda_N + 1, 1, ..., 1)`.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Physical and cost parameters of the beam control problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamParams {
    /// Kelvin-Voigt (strain-rate) damping `C_d`.
    pub kelvin_voigt: f64,
    /// Viscous damping `mu`.
    pub viscous: f64,
    /// Control penalty `gamma`.
    pub control_penalty: f64,
    /// Time horizon `tau`.
    pub horizon: f64,
    /// Weight `alpha` of the quadratic volume penalty.
    pub volume_penalty: f64,
    /// Target actuator measure `c`.
    pub volume_target: f64,
    pub n_modes: usize,
}

impl Default for BeamParams {
    fn default() -> Self {
        Self {
            kelvin_voigt: 1e-4,
            viscous: 1e-3,
            control_penalty: 1e-3,
            horizon: 200.0,
            volume_penalty: 0.1,
            volume_target: 0.4,
            n_modes: 40,
        }
    }
}

impl BeamParams {
    pub fn validate(&self) -> Result<()> {
        let finite = |name, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} is not finite")))
            }
        };
        finite("kelvin_voigt", self.kelvin_voigt)?;
        finite("viscous", self.viscous)?;
        finite("control_penalty", self.control_penalty)?;
        finite("horizon", self.horizon)?;
        finite("volume_penalty", self.volume_penalty)?;
        finite("volume_target", self.volume_target)?;
        if self.kelvin_voigt < 0.0 {
            return Err(invalid("kelvin_voigt", "must be non-negative"));
        }
        if self.viscous < 0.0 {
            return Err(invalid("viscous", "must be non-negative"));
        }
        if self.control_penalty <= 0.0 {
            return Err(invalid("control_penalty", "must be positive"));
        }
        if self.horizon <= 0.0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.volume_penalty < 0.0 {
            return Err(invalid("volume_penalty", "must be non-negative"));
        }
        if !(self.volume_target > 0.0 && self.volume_target < 1.0) {
            return Err(invalid("volume_target", "must lie strictly inside (0, 1)"));
        }
        if self.n_modes == 0 {
            return Err(invalid("n_modes", "must be at least 1"));
        }
        Ok(())
    }

    /// Damping rate `C_d lambda + mu` of a mode with stiffness `lambda`.
    pub fn modal_damping(&self, lambda: f64) -> f64 {
        self.kelvin_voigt * lambda + self.viscous
    }
}

/// Eigenvalue `(n pi)^4` of the simply supported fourth-derivative operator.
///
/// Mode indices start at 1.
pub fn eigenvalue(n: usize) -> f64 {
    debug_assert!(n >= 1, "mode indices start at 1");
    (n as f64 * PI).powi(4)
}

/// L2-orthonormal mode shape `sqrt(2) sin(n pi x)`.
pub fn mode_eval(n: usize, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain(x));
    }
    Ok(mode_value(n, x))
}

#[inline]
pub(crate) fn mode_value(n: usize, x: f64) -> f64 {
    SQRT_2 * (n as f64 * PI * x).sin()
}

/// The first `N` eigenpairs of the beam operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    eigenvalues: Vec<f64>,
}

impl ModalBasis {
    pub fn new(n_modes: usize) -> Self {
        Self {
            eigenvalues: (1..=n_modes).map(eigenvalue).collect(),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Evaluates `sum_n coeffs[n] phi_{n+1}(x)`.
    pub fn synthesize(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * mode_value(i + 1, x))
            .sum()
    }

    /// Energy weight `diag(lambda + 1, 1)` of the first-order state.
    pub fn state_weight(&self) -> DVector<f64> {
        let n = self.n_modes();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.eigenvalues[i] + 1.0
            } else {
                1.0
            }
        })
    }
}

/// First-order state `(a_1..a_N, a_1'..a_N')` in modal coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    coords: DVector<f64>,
}

impl StateVector {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            coords: DVector::zeros(2 * n_modes),
        }
    }

    /// Builds a state from displacement and velocity modal coefficients.
    pub fn from_modal(displacement: &[f64], velocity: &[f64]) -> Result<Self> {
        if displacement.len() != velocity.len() {
            return Err(Error::DimensionMismatch {
                expected: displacement.len(),
                found: velocity.len(),
            });
        }
        let n = displacement.len();
        Ok(Self {
            coords: DVector::from_fn(2 * n, |i, _| {
                if i < n {
                    displacement[i]
                } else {
                    velocity[i - n]
                }
            }),
        })
    }

    pub fn from_coords(coords: DVector<f64>) -> Result<Self> {
        if !coords.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                expected: coords.len() + 1,
                found: coords.len(),
            });
        }
        Ok(Self { coords })
    }

    pub fn n_modes(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn displacement(&self) -> &[f64] {
        &self.coords.as_slice()[..self.n_modes()]
    }

    pub fn velocity(&self) -> &[f64] {
        &self.coords.as_slice()[self.n_modes()..]
    }

    /// Truncates or zero-pads to `n_modes` modes.
    pub fn resized(&self, n_modes: usize) -> Self {
        let take = n_modes.min(self.n_modes());
        let mut disp = vec![0.0; n_modes];
        let mut vel = vec![0.0; n_modes];
        disp[..take].copy_from_slice(&self.displacement()[..take]);
        vel[..take].copy_from_slice(&self.velocity()[..take]);
        Self::from_modal(&disp, &vel).expect("equal lengths")
    }
}

/// Finite-dimensional LQR data `(A, B, Q)` together with a partition of the
/// state indices into groups on which `A` is block diagonal.
///
/// For the beam every group is a displacement/velocity pair `{n, N + n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSystem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    q: DMatrix<f64>,
    groups: Vec<Vec<usize>>,
}

impl ModalSystem {
    /// Wraps arbitrary LQR data. `groups` must partition `0..n` and `a` must
    /// vanish outside the diagonal blocks they induce.
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        q: DMatrix<f64>,
        groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = a.nrows();
        for found in [a.ncols(), q.nrows(), q.ncols()] {
            if found != n {
                return Err(Error::DimensionMismatch { expected: n, found });
            }
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let mut owner = vec![usize::MAX; n];
        for (g, idx) in groups.iter().enumerate() {
            for &i in idx {
                if i >= n || owner[i] != usize::MAX {
                    return Err(invalid("groups", "must partition the state indices"));
                }
                owner[i] = g;
            }
        }
        if owner.contains(&usize::MAX) {
            return Err(invalid("groups", "must partition the state indices"));
        }
        for j in 0..n {
            for i in 0..n {
                if owner[i] != owner[j] && a[(i, j)] != 0.0 {
                    return Err(Error::NotBlockDiagonal);
                }
            }
        }
        Ok(Self { a, b, q, groups })
    }

    /// Convenience constructor treating the whole state as one block.
    pub fn dense(a: DMatrix<f64>, b: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, q, vec![(0..n).collect()])
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a_matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b_vector(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn q_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Same dynamics and weight with a different input vector.
    pub fn with_input(&self, b: DVector<f64>) -> Result<Self> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: b.len(),
            });
        }
        Ok(Self { b, ..self.clone() })
    }
}

/// Assembles the modal LQR system for the velocity-block input vector `b`
/// (`b[n] = <phi_{n+1}, chi_omega>`).
pub fn assemble_system(params: &BeamParams, b: &[f64]) -> Result<ModalSystem> {
    params.validate()?;
    let n = params.n_modes;
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let basis = ModalBasis::new(n);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for (i, &lambda) in basis.eigenvalues().iter().enumerate() {
        a[(i, n + i)] = 1.0;
        a[(n + i, i)] = -lambda;
        a[(n + i, n + i)] = -params.modal_damping(lambda);
    }
    let mut input = DVector::zeros(2 * n);
    input.rows_mut(n, n).copy_from_slice(b);
    let q = DMatrix::from_diagonal(&basis.state_weight());
    let groups = (0..n).map(|i| vec![i, n + i]).collect();
    Ok(ModalSystem {
        a,
        b: input,
        q,
        groups,
    })
}

/// Initial displacement or velocity profile.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    /// Coefficients of `phi_1, phi_2, ...`, used verbatim.
    Modal(Vec<f64>),
    /// Values at the cell centres of a uniform grid on `[0, 1]`.
    Sampled(Vec<f64>),
}

/// Projects initial displacement and velocity onto the first `n_modes` modes.
///
/// Sampled profiles are projected with the midpoint rule on their own grid.
pub fn project_initial_condition(
    w0: &InitialProfile,
    v0: &InitialProfile,
    n_modes: usize,
) -> StateVector {
    let disp = project_profile(w0, n_modes);
    let vel = project_profile(v0, n_modes);
    StateVector::from_modal(&disp, &vel).expect("both projections have n_modes entries")
}

fn project_profile(profile: &InitialProfile, n_modes: usize) -> Vec<f64> {
    match profile {
        InitialProfile::Modal(c) => {
            let mut out = vec![0.0; n_modes];
            for (o, v) in out.iter_mut().zip(c) {
                *o = *v;
            }
            out
        }
        InitialProfile::Sampled(samples) => {
            let m = samples.len();
            if m == 0 {
                return vec![0.0; n_modes];
            }
            let h = 1.0 / m as f64;
            (1..=n_modes)
                .map(|n| {
                    samples
                        .iter()
                        .enumerate()
                        .map(|(j, s)| s * mode_value(n, (j as f64 + 0.5) * h))
                        .sum::<f64>()
                        * h
                })
                .collect()
        }
    }
}

/// Squared energy norm `Z^T Q Z = sum (lambda_n + 1) a_n^2 + sum a_n'^2`.
pub fn h_norm_sq(z: &StateVector, basis: &ModalBasis) -> Result<f64> {
    if z.n_modes() != basis.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_modes(),
            found: z.n_modes(),
        });
    }
    let disp: f64 = z
        .displacement()
        .iter()
        .zip(basis.eigenvalues())
        .map(|(a, l)| (l + 1.0) * a * a)
        .sum();
    let vel: f64 = z.velocity().iter().map(|v| v * v).sum();
    Ok(disp + vel)
}
