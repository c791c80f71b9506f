use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::etd::{LyapunovEtd, Op};
use crate::beam_model::{ModalSystem, StateVector};
use crate::error::{invalid, Error, Result};

/// Backward integrator for the differential Riccati equation
///
/// ```text
/// -dPi/dt = A^T Pi + Pi A - Pi B B^T Pi / gamma + Q,    Pi(tau) = 0
/// ```
///
/// on a uniform grid. The dynamics `A`, weight `Q`, penalty and grid are
/// fixed at construction; the input vector is supplied per solve, so one
/// solver serves every candidate actuator of an optimization run.
#[derive(Debug)]
pub struct DreSolver {
    etd: LyapunovEtd,
    q_packed: Vec<f64>,
    dim: usize,
    gamma: f64,
    tau: f64,
    n_steps: usize,
}

impl DreSolver {
    /// `Q` must be symmetric and vanish outside the diagonal blocks of the
    /// system's index groups.
    pub fn new(system: &ModalSystem, gamma: f64, tau: f64, n_steps: usize) -> Result<Arc<Self>> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", "must be positive"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", "must be positive"));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        let h = tau / n_steps as f64;
        let etd = LyapunovEtd::new(system.a_matrix(), system.groups(), h);
        let q = system.q_matrix();
        if (q - q.transpose()).amax() > 0.0 {
            return Err(invalid("q", "state weight must be symmetric"));
        }
        let q_packed = etd.layout().pack(q);
        Ok(Arc::new(Self {
            etd,
            q_packed,
            dim: system.dim(),
            gamma,
            tau,
            n_steps,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn horizon(&self) -> f64 {
        self.tau
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step_size(&self) -> f64 {
        self.tau / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.tau
        } else {
            k as f64 * self.step_size()
        }
    }

    /// Solves for input vector `b`. With `keep_matrices` every `Pi(t_k)` is
    /// stored; otherwise only `Pi(0)` and the feedback history are kept and
    /// the matrices are regenerated on demand.
    pub fn solve(
        self: &Arc<Self>,
        b: &DVector<f64>,
        keep_matrices: bool,
    ) -> Result<RiccatiSolution> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: b.len(),
            });
        }
        let n = self.dim;
        let k_max = self.n_steps;
        let layout = self.etd.layout();
        let mut gains = vec![DVector::zeros(n); k_max + 1];
        let mut snapshots = keep_matrices.then(|| vec![DMatrix::zeros(n, n); k_max + 1]);
        let mut pi0 = DMatrix::zeros(n, n);
        self.sweep(b, |k, packed, pi_b| {
            gains[k] = DVector::from_iterator(n, pi_b.iter().map(|v| v / self.gamma));
            if let Some(s) = snapshots.as_mut() {
                layout.unpack_into(packed, &mut s[k]);
            }
            if k == 0 {
                layout.unpack_into(packed, &mut pi0);
            }
        })?;
        Ok(RiccatiSolution {
            solver: Arc::clone(self),
            b: b.clone(),
            pi0,
            gains,
            snapshots,
        })
    }

    /// Runs the backward recursion, calling `visit(k, Pi(t_k), Pi(t_k) b)`
    /// for `k = K, K-1, ..., 0` with `Pi` in packed form.
    fn sweep(&self, b: &DVector<f64>, mut visit: impl FnMut(usize, &[f64], &[f64])) -> Result<()> {
        let layout = self.etd.layout();
        let mut ws = Workspace::new(layout.len(), self.dim);
        let b = b.as_slice();
        let mut p = vec![0.0; layout.len()];
        let mut pb = vec![0.0; self.dim];
        visit(self.n_steps, &p, &pb);
        for k in (0..self.n_steps).rev() {
            self.step(&mut p, &pb, b, &mut ws);
            layout.symmetrize(&mut p);
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "Riccati solution",
                    step: k,
                });
            }
            layout.matvec(&p, b, &mut pb);
            visit(k, &p, &pb);
        }
        Ok(())
    }

    fn sweep_dense(
        &self,
        b: &DVector<f64>,
        mut visit: impl FnMut(usize, &DMatrix<f64>),
    ) -> Result<()> {
        let layout = self.etd.layout();
        let mut dense = DMatrix::zeros(self.dim, self.dim);
        self.sweep(b, |k, packed, _| {
            layout.unpack_into(packed, &mut dense);
            visit(k, &dense);
        })
    }

    /// `out = Q - w w^T / gamma` where `w = P b`.
    fn rhs(&self, w: &[f64], out: &mut [f64]) {
        self.etd
            .layout()
            .rank_one(&self.q_packed, -1.0 / self.gamma, w, out);
    }

    /// One ETDRK4 step in reversed time, in place. `pb` holds `P b`.
    fn step(&self, p: &mut [f64], pb: &[f64], b: &[f64], ws: &mut Workspace) {
        let layout = self.etd.layout();
        let Workspace {
            w,
            f_n,
            f_a,
            f_b,
            f_c,
            stage_a,
            stage_b,
            stage_c,
            tmp,
        } = ws;
        self.rhs(pb, f_n);
        self.etd
            .apply(stage_a, &[(Op::HalfExp, p), (Op::HalfPhi1, f_n)]);
        layout.matvec(stage_a, b, w);
        self.rhs(w, f_a);
        self.etd
            .apply(stage_b, &[(Op::HalfExp, p), (Op::HalfPhi1, f_a)]);
        layout.matvec(stage_b, b, w);
        self.rhs(w, f_b);
        for ((t, fb), fnn) in tmp.iter_mut().zip(f_b.iter()).zip(f_n.iter()) {
            *t = 2.0 * fb - fnn;
        }
        self.etd
            .apply(stage_c, &[(Op::HalfExp, stage_a), (Op::HalfPhi1, tmp)]);
        layout.matvec(stage_c, b, w);
        self.rhs(w, f_c);
        for ((t, fa), fb) in tmp.iter_mut().zip(f_a.iter()).zip(f_b.iter()) {
            *t = fa + fb;
        }
        stage_a.copy_from_slice(p);
        self.etd.apply(
            p,
            &[
                (Op::FullExp, stage_a),
                (Op::W1, f_n),
                (Op::W2, tmp),
                (Op::W3, f_c),
            ],
        );
    }
}

struct Workspace {
    w: Vec<f64>,
    f_n: Vec<f64>,
    f_a: Vec<f64>,
    f_b: Vec<f64>,
    f_c: Vec<f64>,
    stage_a: Vec<f64>,
    stage_b: Vec<f64>,
    stage_c: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(len: usize, n: usize) -> Self {
        let z = vec![0.0; len];
        Self {
            w: vec![0.0; n],
            f_n: z.clone(),
            f_a: z.clone(),
            f_b: z.clone(),
            f_c: z.clone(),
            stage_a: z.clone(),
            stage_b: z.clone(),
            stage_c: z.clone(),
            tmp: z,
        }
    }
}

/// Time-sampled solution `Pi(t_k)` of the Riccati equation.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    solver: Arc<DreSolver>,
    b: DVector<f64>,
    pi0: DMatrix<f64>,
    /// `Pi(t_k) b / gamma`; the optimal control is `u = -gains[k] . z`.
    gains: Vec<DVector<f64>>,
    snapshots: Option<Vec<DMatrix<f64>>>,
}

impl RiccatiSolution {
    pub fn solver(&self) -> &Arc<DreSolver> {
        &self.solver
    }

    pub fn input(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn n_steps(&self) -> usize {
        self.solver.n_steps
    }

    pub fn time_grid(&self) -> Vec<f64> {
        (0..=self.solver.n_steps)
            .map(|k| self.solver.time(k))
            .collect()
    }

    /// `Pi(0)`.
    pub fn initial(&self) -> &DMatrix<f64> {
        &self.pi0
    }

    /// `Pi(t_k) B / gamma`, so that the optimal control is `-feedback . Z`.
    pub fn feedback(&self, k: usize) -> &DVector<f64> {
        &self.gains[k]
    }

    /// `Pi(t_k)`, regenerated from the terminal condition when not stored.
    pub fn matrix_at(&self, k: usize) -> DMatrix<f64> {
        assert!(k <= self.n_steps(), "time index {k} out of range");
        if let Some(s) = &self.snapshots {
            return s[k].clone();
        }
        let mut out = None;
        self.for_each_backward(|j, pi| {
            if j == k {
                out = Some(pi.clone());
            }
        });
        out.expect("replay reaches every grid index")
    }

    /// All `Pi(t_k)`, `k = 0..=K`.
    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        if let Some(s) = &self.snapshots {
            return s.clone();
        }
        let mut out = vec![DMatrix::zeros(0, 0); self.n_steps() + 1];
        self.for_each_backward(|k, pi| out[k] = pi.clone());
        out
    }

    /// Visits `Pi(t_k)` for `k = K, ..., 0`.
    pub fn for_each_backward(&self, mut visit: impl FnMut(usize, &DMatrix<f64>)) {
        match &self.snapshots {
            Some(s) => {
                for k in (0..s.len()).rev() {
                    visit(k, &s[k]);
                }
            }
            None => self
                .solver
                .sweep_dense(&self.b, visit)
                .expect("replay of a successful solve is deterministic"),
        }
    }
}

/// Solves the Riccati equation of `system` on `n_steps` uniform intervals,
/// keeping every sample.
pub fn solve_dre(
    system: &ModalSystem,
    gamma: f64,
    tau: f64,
    n_steps: usize,
) -> Result<RiccatiSolution> {
    DreSolver::new(system, gamma, tau, n_steps)?.solve(system.b_vector(), true)
}

/// `Z0^T Pi(0) Z0 + alpha (vol - c)^2`
pub fn optimal_cost(
    riccati: &RiccatiSolution,
    z0: &StateVector,
    alpha: f64,
    vol: f64,
    c: f64,
) -> f64 {
    quadratic_cost(riccati, z0.coords()) + alpha * (vol - c).powi(2)
}

pub(crate) fn quadratic_cost(riccati: &RiccatiSolution, z0: &DVector<f64>) -> f64 {
    z0.dot(&(riccati.initial() * z0))
}

/// Kalman gain `-(1/gamma) B^T Pi(0)`.
pub fn kalman_gain(riccati: &RiccatiSolution, system: &ModalSystem, gamma: f64) -> DVector<f64> {
    -(riccati.initial().tr_mul(system.b_vector())) / gamma
}
