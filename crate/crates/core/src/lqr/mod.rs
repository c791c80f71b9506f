//! Finite-horizon LQR for the modal system: backward Riccati integration,
//! optimal cost, closed- and open-loop simulation and the Kalman gain.
//!
//! Both the Riccati equation and the closed loop are integrated with a
//! fourth-order exponential Runge-Kutta scheme (ETDRK4). The linear part
//! generated by `A` is propagated exactly, which removes the step-size
//! restriction of the stiff high modes; for `A = 0` the scheme is the
//! classical RK4 method.

mod etd;
mod riccati;
mod simulate;

pub use riccati::{kalman_gain, optimal_cost, solve_dre, DreSolver, RiccatiSolution};
pub use simulate::{closed_loop_sim, closed_loop_sim_with, open_loop_sim, SimOptions, Trajectory};

pub(crate) use riccati::quadratic_cost;
