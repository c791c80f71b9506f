//! Optimal actuator shape design for vibration control of a damped
//! Euler-Bernoulli beam.
//!
//! The pipeline is: an actuator shape on a uniform grid ([`shape`]) gives the
//! modal input vector of the beam model ([`beam_model`]); the finite-horizon
//! LQR problem is solved through its differential Riccati equation ([`lqr`]);
//! the resulting closed loop yields a topological gradient that drives a
//! level-set update with line search and penalty continuation ([`topo_opt`]).

pub mod beam_model;
pub mod error;
pub mod lqr;
pub mod shape;
pub mod topo_opt;

pub use error::{Error, Result};
