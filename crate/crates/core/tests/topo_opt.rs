use actopt_core::beam_model::{BeamParams, StateVector};
use actopt_core::shape::{shape_from_levelset, ActuatorShape, Grid, LevelSet};
use actopt_core::topo_opt::{
    continuation_with, levelset_step, IterationRecord, OptimizerConfig, Progress, ShapeProblem,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn sin3pi(n_modes: usize) -> StateVector {
    let mut disp = vec![0.0; n_modes];
    disp[2] = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::from_modal(&disp, &vec![0.0; n_modes]).unwrap()
}

fn is_mirror_symmetric(shape: &ActuatorShape) -> bool {
    shape == &shape.mirrored()
}

/// Flipping single cells changes the cost as the gradient predicts.
#[test]
fn gradient_matches_cell_flips() {
    let params = BeamParams::default();
    let grid = Grid::new(400).unwrap();
    let problem = ShapeProblem::new(&params, grid, &sin3pi(params.n_modes), 8000, 10).unwrap();
    let shape = ActuatorShape::from_intervals(grid, &[(0.1, 0.9)]).unwrap();
    let base = problem.evaluate(&shape).unwrap();
    let g = problem.gradient(&base).unwrap();
    let g_max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut candidates: Vec<usize> = (0..400).filter(|&j| g[j].abs() > 1e-3 * g_max).collect();
    candidates.shuffle(&mut StdRng::seed_from_u64(7));
    let h = grid.cell_width();
    let mut agree = 0;
    let sample = &candidates[..20];
    for &j in sample {
        let flipped = problem.evaluate(&shape.toggled(j)).unwrap();
        let dj = flipped.cost - base.cost;
        let predicted = if shape.contains(j) {
            -h * g[j]
        } else {
            h * g[j]
        };
        if dj.signum() == predicted.signum() {
            agree += 1;
        }
        let ratio = (dj / predicted).abs();
        assert!((0.5..=2.0).contains(&ratio), "cell {j}: ratio {ratio}");
    }
    assert!(agree * 100 >= 95 * sample.len(), "{agree}/{}", sample.len());
}

#[test]
fn gradient_is_mirror_symmetric() {
    let params = BeamParams::default();
    let grid = Grid::new(200).unwrap();
    let problem = ShapeProblem::new(&params, grid, &sin3pi(params.n_modes), 8000, 10).unwrap();
    let shape = ActuatorShape::from_intervals(grid, &[(0.1, 0.9)]).unwrap();
    let g = problem
        .gradient(&problem.evaluate(&shape).unwrap())
        .unwrap();
    for j in 0..200 {
        assert!((g[j] - g[199 - j]).abs() < 1e-8, "cell {j}");
    }
}

/// A reduced run (ten modes) exercising the full continuation.
#[test]
fn continuation_is_monotone_and_symmetric() {
    let params = BeamParams {
        n_modes: 10,
        ..BeamParams::default()
    };
    let grid = Grid::new(200).unwrap();
    let psi0 = LevelSet::from_intervals(grid, &[(0.1, 0.9)]).unwrap();
    let config = OptimizerConfig::default();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut symmetric = true;
    let out = continuation_with(&params, &config, &psi0, &sin3pi(10), |p| {
        if let Progress::Record { record, levelset } = p {
            symmetric &= is_mirror_symmetric(&shape_from_levelset(levelset));
            records.push(record.clone());
        }
    })
    .unwrap();
    assert_eq!(
        records.len(),
        out.history.len() + config.alpha_schedule.len() - 1
    );
    assert!(symmetric);
    for stage in out.history.chunk_by(|a, b| a.alpha == b.alpha) {
        assert!(stage.windows(2).all(|w| w[1].cost < w[0].cost));
    }
    let first = &out.history[0];
    let last = out.history.last().unwrap();
    assert!(last.cost < first.cost);
    assert_eq!(last.n_components, 2);
}

proptest! {
    #[test]
    fn levelset_updates_stay_bounded(
        psi0 in prop::collection::vec(-3.0f64..3.0, 16),
        grads in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 16), 1..8),
        betas in prop::collection::vec(0.0f64..=1.0, 8),
    ) {
        let grid = Grid::new(16).unwrap();
        let mut psi = LevelSet::new(grid, psi0).unwrap();
        let mut bound = psi.max_abs();
        for (g, beta) in grads.iter().zip(&betas) {
            let norm = grid.l2_norm(g);
            prop_assume!(norm > 0.0);
            bound = bound.max(g.iter().fold(0.0f64, |m, v| m.max(v.abs())) / norm);
            psi = levelset_step(&psi, g, *beta).unwrap();
            prop_assert!(psi.max_abs() <= bound * (1.0 + 1e-12));
        }
    }
}
