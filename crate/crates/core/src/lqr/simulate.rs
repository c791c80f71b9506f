use nalgebra::DVector;

use super::etd::{Op, VectorEtd};
use super::riccati::RiccatiSolution;
use crate::beam_model::{ModalSystem, StateVector};
use crate::error::{invalid, Error, Result};

/// Sampled time histories of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub control: Vec<f64>,
    /// Costate `2 Pi(t) Z(t)`; zero for open-loop runs.
    pub costate: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Velocity block of the costate at sample `k` (entries `N..2N`).
    pub fn adjoint_coeffs(&self, k: usize) -> &[f64] {
        let p = self.costate[k].as_slice();
        &p[p.len() / 2..]
    }

    /// Trapezoidal quadrature of `f(k)` over the sample times.
    pub fn integrate(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        let mut prev = f(0);
        let mut sum = 0.0;
        for k in 1..self.len() {
            let cur = f(k);
            sum += 0.5 * (self.times[k] - self.times[k - 1]) * (prev + cur);
            prev = cur;
        }
        sum
    }

    /// `int (Z^T Q Z + gamma u^2) dt` for a diagonal state weight `q_diag`.
    pub fn running_cost(&self, q_diag: &DVector<f64>, gamma: f64) -> f64 {
        self.integrate(|k| {
            let z = &self.states[k];
            z.component_mul(z).dot(q_diag) + gamma * self.control[k].powi(2)
        })
    }

    pub fn max_abs_control(&self) -> f64 {
        self.control.iter().fold(0.0, |m, u| m.max(u.abs()))
    }
}

/// Options for the forward simulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Integration steps per Riccati grid interval. The feedback is
    /// interpolated linearly in time between grid points.
    pub substeps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { substeps: 1 }
    }
}

fn check_dims(system: &ModalSystem, z0: &StateVector) -> Result<()> {
    if z0.coords().len() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            found: z0.coords().len(),
        });
    }
    Ok(())
}

/// Closed-loop simulation on the Riccati grid.
pub fn closed_loop_sim(
    system: &ModalSystem,
    riccati: &RiccatiSolution,
    z0: &StateVector,
) -> Result<Trajectory> {
    closed_loop_sim_with(system, riccati, z0, SimOptions::default())
}

/// Integrates `Z' = A Z + B u`, `u = -(1/gamma) B^T Pi(t) Z`, and records the
/// control and the costate `2 Pi(t) Z(t)`.
pub fn closed_loop_sim_with(
    system: &ModalSystem,
    riccati: &RiccatiSolution,
    z0: &StateVector,
    opts: SimOptions,
) -> Result<Trajectory> {
    check_dims(system, z0)?;
    if riccati.solver().dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            found: riccati.solver().dim(),
        });
    }
    if opts.substeps == 0 {
        return Err(invalid("substeps", "must be at least 1"));
    }
    let m = opts.substeps;
    let n_coarse = riccati.n_steps();
    let h = riccati.solver().step_size() / m as f64;
    let etd = VectorEtd::new(system.a_matrix(), system.groups(), h);
    let b = system.b_vector().as_slice();

    // the nonlinear term is always a multiple of B
    let mut op_b = [(); 4].map(|_| vec![0.0; b.len()]);
    for (out, op) in op_b.iter_mut().zip([Op::HalfPhi1, Op::W1, Op::W2, Op::W3]) {
        etd.apply(out, &[(op, b)]);
    }
    let [half_phi1_b, w1_b, w2_b, w3_b] = &op_b;

    // u(t) = -g(t) . z with g linear in t between grid points
    let feedback = |k: usize, theta: f64, z: &[f64]| -> f64 {
        let lo = riccati.feedback(k).as_slice();
        let lo_u = dot(lo, z);
        if theta == 0.0 {
            return -lo_u;
        }
        let hi = riccati.feedback(k + 1).as_slice();
        -((1.0 - theta) * lo_u + theta * dot(hi, z))
    };

    let n_fine = n_coarse * m;
    let dim = system.dim();
    let mut times = Vec::with_capacity(n_fine + 1);
    let mut states = Vec::with_capacity(n_fine + 1);
    let mut control = Vec::with_capacity(n_fine + 1);
    let mut z = z0.coords().as_slice().to_vec();
    let mut e2z = vec![0.0; dim];
    let mut a = vec![0.0; dim];
    let mut bb = vec![0.0; dim];
    let mut c = vec![0.0; dim];
    let mut ez = vec![0.0; dim];
    for s in 0..=n_fine {
        let (k, i) = (s / m, s % m);
        let theta = i as f64 / m as f64;
        times.push(if s == n_fine {
            riccati.solver().horizon()
        } else {
            s as f64 * h
        });
        states.push(DVector::from_column_slice(&z));
        control.push(feedback(k.min(n_coarse), theta, &z));
        if s == n_fine {
            break;
        }
        let theta_half = (i as f64 + 0.5) / m as f64;
        let (k_end, theta_end) = if i + 1 == m {
            (k + 1, 0.0)
        } else {
            (k, (i + 1) as f64 / m as f64)
        };

        let u_n = control[s];
        etd.apply(&mut e2z, &[(Op::HalfExp, &z)]);
        axpy_into(&mut a, &e2z, u_n, half_phi1_b);
        let u_a = feedback(k, theta_half, &a);
        axpy_into(&mut bb, &e2z, u_a, half_phi1_b);
        let u_b = feedback(k, theta_half, &bb);
        etd.apply(&mut c, &[(Op::HalfExp, &a)]);
        for (ci, hb) in c.iter_mut().zip(half_phi1_b) {
            *ci += (2.0 * u_b - u_n) * hb;
        }
        let u_c = feedback(k_end, theta_end, &c);
        etd.apply(&mut ez, &[(Op::FullExp, &z)]);
        for j in 0..dim {
            z[j] = ez[j] + u_n * w1_b[j] + (u_a + u_b) * w2_b[j] + u_c * w3_b[j];
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "closed-loop state",
                step: s,
            });
        }
    }

    // costate from a replay of the Riccati sweep
    let mut costate = vec![DVector::zeros(dim); n_fine + 1];
    let mut later: Option<nalgebra::DMatrix<f64>> = None;
    riccati.for_each_backward(|k, pi| {
        if k == n_coarse {
            costate[n_fine] = pi * &states[n_fine] * 2.0;
        } else {
            let next = later.as_ref().expect("visited in decreasing order");
            for i in 0..m {
                let s = k * m + i;
                let theta = i as f64 / m as f64;
                let mut p = pi * &states[s] * (2.0 * (1.0 - theta));
                if theta > 0.0 {
                    p.gemv(2.0 * theta, next, &states[s], 1.0);
                }
                costate[s] = p;
            }
        }
        match later.as_mut() {
            Some(l) => l.copy_from(pi),
            None => later = Some(pi.clone()),
        }
    });

    Ok(Trajectory {
        times,
        states,
        control,
        costate,
    })
}

/// Uncontrolled evolution `Z' = A Z` over `[0, tau]` with `n_steps` exact
/// exponential steps.
pub fn open_loop_sim(
    system: &ModalSystem,
    z0: &StateVector,
    tau: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    check_dims(system, z0)?;
    if n_steps == 0 {
        return Err(invalid("n_steps", "must be at least 1"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("tau", "must be positive"));
    }
    let h = tau / n_steps as f64;
    let etd = VectorEtd::new(system.a_matrix(), system.groups(), h);
    let dim = system.dim();
    let mut z = z0.coords().as_slice().to_vec();
    let mut next = vec![0.0; dim];
    let mut states = Vec::with_capacity(n_steps + 1);
    for _ in 0..n_steps {
        states.push(DVector::from_column_slice(&z));
        etd.apply(&mut next, &[(Op::FullExp, &z)]);
        std::mem::swap(&mut z, &mut next);
    }
    states.push(DVector::from_column_slice(&z));
    let times = (0..=n_steps)
        .map(|k| if k == n_steps { tau } else { k as f64 * h })
        .collect();
    Ok(Trajectory {
        times,
        states,
        control: vec![0.0; n_steps + 1],
        costate: vec![DVector::zeros(dim); n_steps + 1],
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy_into(out: &mut [f64], x: &[f64], alpha: f64, y: &[f64]) {
    for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
        *o = xi + alpha * yi;
    }
}
