mod common;

use common::*;
use fbi::classify::{generators, SymmetryElement};
use fbi::ferro::*;
use fbi::form_factors::{compute_table, Flavor};
use fbi::hf::{build_fm_state, energy_commutator_form, DensityMatrix, Interaction};
use fbi::lattice::GridMomentum;
use fbi::linalg::{from_real_diag, haar_unitary, random_complex, CMat};
use fbi::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn zero_step_uses_identity() {
    let zero = GridMomentum { k: 0, g: [0, 0] };
    for k in 0..16 {
        let (p, s) = select_invertible_shift(table4(), k, zero).unwrap();
        assert_eq!(p, zero);
        assert!((s - 1.0).abs() < 1e-10);
    }
}

#[test]
fn neighbour_steps_are_well_conditioned() {
    let grid = table4().grid();
    for k in 0..16 {
        for (di, dj) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            let delta = grid.fold_numerators(di, dj);
            let (p, s) = select_invertible_shift(table4(), k, delta).unwrap();
            assert_eq!(p.k, delta.k);
            assert!(s > 0.1, "k={k} step=({di},{dj}) sigma={s}");
        }
    }
}

#[test]
fn missing_transfers_surface_an_error() {
    let tiny = compute_table(bundle4(), 0.0);
    let delta = tiny.grid().fold_numerators(1, 0);
    assert!(matches!(select_invertible_shift(&tiny, 0, delta), Err(Error::NoInvertibleShift { k: 0, .. })));
}

#[test]
fn walks_and_paths() {
    let grid = table4().grid();
    assert_eq!(straight_walk(grid, 0, 0), vec![]);
    let w = straight_walk(grid, 2, -1);
    assert_eq!(w, vec![grid.fold_numerators(1, 0), grid.fold_numerators(1, 0), grid.fold_numerators(0, -1)]);
    let path = build_path(table4(), 5, &w).unwrap();
    assert_eq!(path.start, 5);
    let [i, j] = grid.numerators(5);
    assert_eq!(path.end(), grid.fold_numerators(i + 2, j - 1).k);
    assert!(path.condition_bound() >= 1.0);
    for s in &path.steps {
        assert!(s.sigma_min > INVERTIBLE_TOL);
    }
}

#[test]
fn fm_blocks_propagate_unchanged() {
    for choice in 0..2 {
        let p = build_fm_state(table4(), choice).unwrap();
        for k in 0..16 {
            assert!(closed_loop_residual(table4(), &p, k).unwrap() <= 1e-6);
            for (di, dj) in [(1, 0), (2, 3), (-1, 1)] {
                assert!(propagation_residual(table4(), &p, k, k, di, dj).unwrap() <= 1e-6);
            }
        }
        assert_eq!(uniform_filling_check(&p), 0.0);
    }
}

#[test]
fn intervalley_coherent_states_propagate() {
    let t = table4_flavor(Flavor::Valley);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for p0 in generators(Flavor::Valley) {
        let u = SymmetryElement::random(&mut rng, Flavor::Valley);
        let p = DensityMatrix::translation_invariant(Flavor::Valley, 16, &u.act(&p0)).unwrap();
        for k in [0, 5, 11] {
            assert!(closed_loop_residual(t, &p, k).unwrap() <= 1e-6);
            assert!(propagation_residual(t, &p, k, k, 3, 1).unwrap() <= 1e-6);
        }
    }
}

#[test]
fn propagation_detects_non_ground_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let u = haar_unitary(&mut rng, 2);
    let p0 = &u * from_real_diag(&[1.0, 0.0]) * u.adjoint();
    let p = DensityMatrix::translation_invariant(Flavor::Spinless, 16, &p0).unwrap();
    let worst = (0..16).map(|k| closed_loop_residual(table4(), &p, k).unwrap()).fold(0.0, f64::max);
    assert!(worst > 1e-3);
}

#[test]
fn path_must_start_at_block_row() {
    let path = build_path(table4(), 3, &straight_walk(table4().grid(), 1, 0)).unwrap();
    let block = CMat::identity(2, 2);
    assert!(matches!(propagate_block(table4(), &block, 4, 4, &path), Err(Error::Precondition(_))));
}

#[test]
fn non_uniform_projector_detected() {
    let mut d = vec![0.0; 32];
    d[0] = 1.0;
    d[1] = 1.0;
    let p = DensityMatrix::new(Flavor::Spinless, 16, from_real_diag(&d)).unwrap();
    assert!(uniform_filling_check(&p) >= 1.0);
}

#[test]
fn zero_energy_states_fill_uniformly() {
    let v = Interaction::default();
    let t = table4_flavor(Flavor::Valley);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut seen = 0;
    for p0 in generators(Flavor::Valley) {
        for _ in 0..3 {
            let u = SymmetryElement::random(&mut rng, Flavor::Valley);
            let p = DensityMatrix::translation_invariant(Flavor::Valley, 16, &u.act(&p0)).unwrap();
            if energy_commutator_form(&p, t, &v).unwrap() <= 1e-10 {
                seen += 1;
                assert!(uniform_filling_check(&p) <= 1e-6);
            }
        }
    }
    assert_eq!(seen, 9);
}

#[test]
fn off_diagonal_blocks_constant_along_shift() {
    let p = build_fm_state(table4(), 0).unwrap();
    let grid = table4().grid();
    for delta in 0..16 {
        let ranks: Vec<usize> = (0..16).map(|k| rank(&p.block(k, grid.add(k, GridMomentum { k: delta, g: [0, 0] }).k), 1e-8)).collect();
        assert!(ranks.iter().all(|&r| r == ranks[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn propagation_preserves_rank(seed in any::<u64>(), r in 0usize..=2, k1 in 0usize..16, k2 in 0usize..16, di in -3i64..4, dj in -3i64..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_complex(&mut rng, 2, r.max(1));
        let b = random_complex(&mut rng, r.max(1), 2);
        let block = if r == 0 { CMat::zeros(2, 2) } else { a * b };
        let path = build_path(table4(), k1, &straight_walk(table4().grid(), di, dj)).unwrap();
        let (out, _, _) = propagate_block(table4(), &block, k1, k2, &path).unwrap();
        prop_assert_eq!(rank(&out, 1e-8), rank(&block, 1e-8));
        let bound = path.condition_bound();
        if r == 2 {
            let ratio = (out.trace().norm() + 1e-12) / (block.trace().norm() + 1e-12);
            prop_assert!(ratio <= bound * bound * 10.0 || block.trace().norm() < 1e-6);
        }
    }
}
