use actopt_core::beam_model::{
    assemble_system, eigenvalue, h_norm_sq, BeamParams, ModalBasis, ModalSystem, StateVector,
};
use actopt_core::lqr::{
    closed_loop_sim, closed_loop_sim_with, kalman_gain, open_loop_sim, optimal_cost, solve_dre,
    DreSolver, SimOptions,
};
use actopt_core::shape::{input_vector, ActuatorShape, Grid};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn scalar_system(a: f64, b: f64) -> ModalSystem {
    ModalSystem::dense(
        DMatrix::from_element(1, 1, a),
        DVector::from_element(1, b),
        DMatrix::identity(1, 1),
    )
    .unwrap()
}

fn tanh_error(n_steps: usize) -> f64 {
    let sol = solve_dre(&scalar_system(0.0, 1.0), 1.0, 5.0, n_steps).unwrap();
    sol.matrices()
        .iter()
        .zip(sol.time_grid())
        .map(|(p, t)| (p[(0, 0)] - (5.0 - t).tanh()).abs())
        .fold(0.0, f64::max)
}

fn sin3pi(n_modes: usize) -> StateVector {
    let mut disp = vec![0.0; n_modes];
    disp[2] = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::from_modal(&disp, &vec![0.0; n_modes]).unwrap()
}

fn beam(params: &BeamParams, interval: (f64, f64)) -> ModalSystem {
    let grid = Grid::new(200).unwrap();
    let shape = ActuatorShape::from_intervals(grid, &[interval]).unwrap();
    let b = input_vector(&shape, &ModalBasis::new(params.n_modes));
    assemble_system(params, &b).unwrap()
}

#[test]
fn tanh_oracle_within_tolerance() {
    assert!(tanh_error(500) < 1e-6);
}

#[test]
fn tanh_oracle_fourth_order() {
    let errs: Vec<f64> = [500, 1000, 2000, 4000]
        .iter()
        .map(|&n| tanh_error(n))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order} from {errs:?}");
    }
}

#[test]
fn terminal_condition_is_zero() {
    let sol = solve_dre(&scalar_system(-0.3, 2.0), 0.5, 3.0, 100).unwrap();
    assert_eq!(sol.matrices()[100][(0, 0)], 0.0);
}

#[test]
fn no_control_gives_linear_growth() {
    let sys = ModalSystem::dense(
        DMatrix::zeros(3, 3),
        DVector::zeros(3),
        DMatrix::identity(3, 3),
    )
    .unwrap();
    let sol = solve_dre(&sys, 7.0, 4.0, 40).unwrap();
    for (p, t) in sol.matrices().iter().zip(sol.time_grid()) {
        let expected = DMatrix::<f64>::identity(3, 3) * (4.0 - t);
        assert!((p - expected).amax() < 1e-12);
    }
}

#[test]
fn replayed_matrices_match_stored() {
    let params = BeamParams {
        n_modes: 4,
        ..BeamParams::default()
    };
    let sys = beam(&params, (0.1, 0.7));
    let solver = DreSolver::new(&sys, params.control_penalty, 20.0, 800).unwrap();
    let kept = solver.solve(sys.b_vector(), true).unwrap();
    let lean = solver.solve(sys.b_vector(), false).unwrap();
    assert_eq!(kept.matrices(), lean.matrices());
    assert_eq!(kept.initial(), lean.initial());
    assert_eq!(lean.matrix_at(123), kept.matrices()[123]);
}

#[test]
fn beam_riccati_is_symmetric_psd_and_saturates() {
    let params = BeamParams::default();
    let sys = beam(&params, (0.1, 0.9));
    let h = 0.025;
    let pi_at = |tau: f64| {
        let steps = (tau / h).round() as usize;
        DreSolver::new(&sys, params.control_penalty, tau, steps)
            .unwrap()
            .solve(sys.b_vector(), false)
            .unwrap()
            .initial()
            .clone()
    };
    let p200 = pi_at(200.0);
    assert!(p200.iter().all(|v| v.is_finite()));
    assert!((&p200 - p200.transpose()).amax() < 1e-10 * p200.amax());
    let eig = SymmetricEigen::new(p200.clone()).eigenvalues;
    assert!(eig.min() >= -1e-8 * p200.norm());
    let p100 = pi_at(100.0);
    assert!((&p200 - &p100).norm() / p200.norm() < 1e-3);
}

#[test]
fn horizon_monotonicity() {
    let params = BeamParams::default();
    let sys = beam(&params, (0.1, 0.9));
    let z0 = sin3pi(params.n_modes);
    let costs: Vec<f64> = [50.0, 100.0, 200.0]
        .iter()
        .map(|&tau| {
            let sol = DreSolver::new(&sys, params.control_penalty, tau, (tau * 40.0) as usize)
                .unwrap()
                .solve(sys.b_vector(), false)
                .unwrap();
            optimal_cost(&sol, &z0, 0.0, 0.0, 0.0)
        })
        .collect();
    assert!(costs.windows(2).all(|w| w[1] >= w[0]), "{costs:?}");
}

#[test]
fn optimal_cost_examples() {
    let sol = solve_dre(&scalar_system(0.0, 1.0), 1.0, 5.0, 500).unwrap();
    let z1 = StateVector::from_coords(DVector::from_element(2, 0.0)).unwrap();
    let zero = z1.clone();
    let sys2 = ModalSystem::dense(
        DMatrix::zeros(2, 2),
        DVector::zeros(2),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let sol2 = solve_dre(&sys2, 1.0, 1.0, 10).unwrap();
    assert_eq!(optimal_cost(&sol2, &zero, 3.0, 0.4, 0.4), 0.0);
    assert!((optimal_cost(&sol2, &zero, 10.0, 0.8, 0.4) - 1.6).abs() < 1e-12);
    let pi0 = sol.initial()[(0, 0)];
    assert!((pi0 - 5f64.tanh()).abs() < 1e-6);
    assert!((pi0 - 0.9999092).abs() < 1e-7);
}

#[test]
fn kalman_gain_examples() {
    let sys = scalar_system(0.0, 1.0);
    let sol = solve_dre(&sys, 1.0, 5.0, 500).unwrap();
    let k = kalman_gain(&sol, &sys, 1.0);
    assert!((k[0] + 0.9999092).abs() < 1e-7);

    let params = BeamParams {
        n_modes: 3,
        ..BeamParams::default()
    };
    let free = assemble_system(&params, &[0.0; 3]).unwrap();
    let sol = solve_dre(&free, params.control_penalty, 10.0, 400).unwrap();
    assert_eq!(kalman_gain(&sol, &free, params.control_penalty).amax(), 0.0);
}

#[test]
fn beam_gain_converges_in_modes() {
    let norm = |n_modes: usize| {
        let params = BeamParams {
            n_modes,
            ..BeamParams::default()
        };
        let sys = beam(&params, (0.1, 0.9));
        let sol = DreSolver::new(&sys, params.control_penalty, params.horizon, 8000)
            .unwrap()
            .solve(sys.b_vector(), false)
            .unwrap();
        kalman_gain(&sol, &sys, params.control_penalty).norm()
    };
    let (k30, k40) = (norm(30), norm(40));
    assert!((k40 - k30).abs() / k40 < 0.05, "{k30} vs {k40}");
}

#[test]
fn cost_identity_on_beam() {
    let params = BeamParams::default();
    let sys = beam(&params, (0.1, 0.9));
    let z0 = sin3pi(params.n_modes);
    let sol = DreSolver::new(&sys, params.control_penalty, params.horizon, 8000)
        .unwrap()
        .solve(sys.b_vector(), false)
        .unwrap();
    let traj = closed_loop_sim_with(&sys, &sol, &z0, SimOptions { substeps: 10 }).unwrap();
    let j = optimal_cost(&sol, &z0, 0.0, 0.0, 0.0);
    let q = ModalBasis::new(params.n_modes).state_weight();
    let running = traj.running_cost(&q, params.control_penalty);
    assert!((running - j).abs() / j < 1e-3, "{running} vs {j}");
}

#[test]
fn closed_loop_trivial_cases() {
    let params = BeamParams {
        n_modes: 3,
        ..BeamParams::default()
    };
    let sys = beam(&params, (0.2, 0.6));
    let sol = solve_dre(&sys, params.control_penalty, 5.0, 500).unwrap();
    let traj = closed_loop_sim(&sys, &sol, &StateVector::zeros(3)).unwrap();
    assert!(traj.states.iter().all(|z| z.amax() == 0.0));
    assert!(traj.control.iter().all(|&u| u == 0.0));

    let free = assemble_system(&params, &[0.0; 3]).unwrap();
    let sol = solve_dre(&free, params.control_penalty, 5.0, 500).unwrap();
    let z0 = sin3pi(3);
    let closed = closed_loop_sim(&free, &sol, &z0).unwrap();
    let open = open_loop_sim(&free, &z0, 5.0, 500).unwrap();
    assert!(closed.control.iter().all(|&u| u == 0.0));
    for (a, b) in closed.states.iter().zip(&open.states) {
        assert!((a - b).amax() < 1e-9);
    }
}

#[test]
fn open_loop_undamped_mode_is_cosine() {
    let params = BeamParams {
        n_modes: 1,
        kelvin_voigt: 0.0,
        viscous: 0.0,
        ..BeamParams::default()
    };
    let sys = assemble_system(&params, &[0.0]).unwrap();
    let z0 = StateVector::from_modal(&[1.0], &[0.0]).unwrap();
    let traj = open_loop_sim(&sys, &z0, 1.0, 10_000).unwrap();
    let w = eigenvalue(1).sqrt();
    for (t, z) in traj.times.iter().zip(&traj.states) {
        assert!((z[0] - (w * t).cos()).abs() < 1e-6);
    }
}

#[test]
fn open_loop_damped_energy_decreases() {
    let params = BeamParams {
        n_modes: 6,
        ..BeamParams::default()
    };
    let sys = assemble_system(&params, &[0.0; 6]).unwrap();
    let basis = ModalBasis::new(6);
    let z0 = StateVector::from_modal(
        &[0.3, -0.2, 0.7, 0.0, 0.1, 0.05],
        &[1.0, 0.0, -2.0, 0.5, 0.0, 0.0],
    )
    .unwrap();
    let traj = open_loop_sim(&sys, &z0, 20.0, 4000).unwrap();
    // the mechanical energy sum(lambda a^2 + a'^2) is the dissipated quantity;
    // the extra a^2 of the H-norm may oscillate within a period
    let mechanical: Vec<f64> = traj
        .states
        .iter()
        .map(|z| {
            (0..6)
                .map(|i| basis.eigenvalues()[i] * z[i] * z[i] + z[6 + i] * z[6 + i])
                .sum()
        })
        .collect();
    assert!(mechanical.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    let h_norm = |z: &DVector<f64>| {
        h_norm_sq(&StateVector::from_coords(z.clone()).unwrap(), &basis).unwrap()
    };
    assert!(h_norm(traj.states.last().unwrap()) < 0.5 * h_norm(&traj.states[0]));
}

/// Solving in energy-orthonormal coordinates `Z' = S Z` with identity weight
/// gives the same optimal cost.
#[test]
fn coordinate_scaling_equivalence() {
    let params = BeamParams::default();
    let n = params.n_modes;
    let sys = beam(&params, (0.1, 0.9));
    let s = DVector::from_fn(2 * n, |i, _| {
        if i < n {
            (eigenvalue(i + 1) + 1.0).sqrt()
        } else {
            1.0
        }
    });
    let a = sys.a_matrix();
    let a_scaled = DMatrix::from_fn(2 * n, 2 * n, |i, j| s[i] * a[(i, j)] / s[j]);
    let scaled = ModalSystem::new(
        a_scaled,
        sys.b_vector().component_mul(&s),
        DMatrix::identity(2 * n, 2 * n),
        sys.groups().to_vec(),
    )
    .unwrap();
    let z0 = sin3pi(n);
    let z0_scaled = StateVector::from_coords(z0.coords().component_mul(&s)).unwrap();
    let cost = |sys: &ModalSystem, z: &StateVector| {
        let sol = DreSolver::new(sys, params.control_penalty, params.horizon, 8000)
            .unwrap()
            .solve(sys.b_vector(), false)
            .unwrap();
        optimal_cost(&sol, z, 0.0, 0.0, 0.0)
    };
    let (j, j_scaled) = (cost(&sys, &z0), cost(&scaled, &z0_scaled));
    assert!((j - j_scaled).abs() / j < 1e-8, "{j} vs {j_scaled}");
}

/// First-order change of the optimal cost under a perturbation `db` of the
/// input's velocity block equals `int u (2 Pi Z)_vel . db dt`.
#[test]
fn adjoint_block_matches_finite_differences() {
    let params = BeamParams {
        n_modes: 8,
        ..BeamParams::default()
    };
    let n = params.n_modes;
    let sys = beam(&params, (0.15, 0.55));
    let z0 = StateVector::from_modal(
        &[0.2, 0.0, 0.6, -0.1, 0.0, 0.05, 0.0, 0.0],
        &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    )
    .unwrap();
    let (tau, steps) = (40.0, 2000);
    let solver = DreSolver::new(&sys, params.control_penalty, tau, steps).unwrap();
    let cost = |b: &DVector<f64>| {
        let sol = solver.solve(b, false).unwrap();
        optimal_cost(&sol, &z0, 0.0, 0.0, 0.0)
    };
    let sol = solver.solve(sys.b_vector(), false).unwrap();
    let traj = closed_loop_sim_with(&sys, &sol, &z0, SimOptions { substeps: 10 }).unwrap();
    let db: Vec<f64> = (0..n)
        .map(|i| ((i * 7 + 3) % 5) as f64 * 0.01 - 0.02)
        .collect();
    let predicted = traj.integrate(|k| {
        let q = traj.adjoint_coeffs(k);
        traj.control[k] * q.iter().zip(&db).map(|(a, b)| a * b).sum::<f64>()
    });
    let eps = 1e-3;
    let shift = |sign: f64| {
        let mut b = sys.b_vector().clone();
        for (i, d) in db.iter().enumerate() {
            b[n + i] += sign * eps * d;
        }
        b
    };
    let fd = (cost(&shift(1.0)) - cost(&shift(-1.0))) / (2.0 * eps);
    assert!(
        (fd - predicted).abs() / fd.abs() < 1e-2,
        "fd {fd} vs adjoint {predicted}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn small_beams_riccati_properties(
        n_modes in 1usize..4,
        left in 0.0f64..0.5,
        width in 0.05f64..0.5,
        disp in prop::collection::vec(-1.0f64..1.0, 3),
        vel in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let params = BeamParams { n_modes, ..BeamParams::default() };
        let sys = beam(&params, (left, (left + width).min(1.0)));
        let sol = solve_dre(&sys, params.control_penalty, 10.0, 2000).unwrap();
        let p = sol.initial();
        prop_assert!((p - p.transpose()).amax() <= 1e-10 * p.amax());
        let eig = SymmetricEigen::new(p.clone()).eigenvalues;
        prop_assert!(eig.min() >= -1e-8 * p.norm());

        let z0 = StateVector::from_modal(&disp[..n_modes], &vel[..n_modes]).unwrap();
        let j = optimal_cost(&sol, &z0, 0.0, 0.0, 0.0);
        let traj = closed_loop_sim_with(&sys, &sol, &z0, SimOptions { substeps: 10 }).unwrap();
        let q = ModalBasis::new(n_modes).state_weight();
        let running = traj.running_cost(&q, params.control_penalty);
        prop_assert!((running - j).abs() <= 1e-3 * j, "{} vs {}", running, j);
    }
}
