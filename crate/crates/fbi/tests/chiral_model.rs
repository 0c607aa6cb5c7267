mod common;

use common::*;
use fbi::bands::flatness_residual;
use fbi::chiral::*;
use fbi::lattice::{gshells, Vec2};
use fbi::linalg::{eigvalsh, random_complex, singular_values, CVec};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng, basis: &PlaneWaveBasis) -> SpinorState {
    let c = random_complex(rng, 4 * basis.len(), 1);
    SpinorState { basis: basis.clone(), coeffs: c.column(0).into_owned() }
}

/// Applies `H_k` to a state on its own basis.
fn apply_h(k: Vec2, alpha: f64, s: &SpinorState) -> CVec {
    assemble_h(&lattice(), k, alpha, &s.basis).unwrap() * &s.coeffs
}

#[test]
fn free_model_at_origin() {
    let l = lattice();
    let basis = PlaneWaveBasis::with_shells(&l, Vec2::zeros(), 3).unwrap();
    let d = assemble_d(&l, Vec2::zeros(), 0.0, &basis).unwrap().matrix;
    for i in 0..d.nrows() {
        for j in 0..d.ncols() {
            if i != j {
                assert_eq!(d[(i, j)], Complex64::new(0.0, 0.0));
            }
        }
    }
    // the G = 0 plane waves sit at |q0| = 1, the smallest layer momentum
    let s = singular_values(&d);
    assert!((s[0] - 1.0).abs() < 1e-14);
}

#[test]
fn free_model_generic_k() {
    let l = lattice();
    let k = l.g1 * 0.31 + l.g2 * 0.07;
    let basis = PlaneWaveBasis::with_shells(&l, k, 4).unwrap();
    let d = assemble_d(&l, k, 0.0, &basis).unwrap().matrix;
    let expect = basis
        .g_list()
        .iter()
        .flat_map(|&g| layer_offsets(&l).map(|o| (k + o + l.reciprocal(g)).norm()))
        .fold(f64::INFINITY, f64::min);
    assert!((singular_values(&d)[0] - expect).abs() < 1e-13);
    let mut ev = eigvalsh(&assemble_h(&l, k, 0.0, &basis).unwrap());
    ev.retain(|x| *x > 0.0);
    assert!((ev[0] - expect).abs() < 1e-12);
}

#[test]
fn magic_coupling_flattens_generic_k() {
    let l = lattice();
    let k = l.g1 * 0.43 + l.g2 * 0.11;
    let basis = PlaneWaveBasis::new(&l, k, radius()).unwrap();
    let d = assemble_d(&l, k, magic().alpha, &basis).unwrap().matrix;
    assert!(singular_values(&d)[0] <= 1e-8);
}

#[test]
fn magic_coupling_two_zero_modes_on_grid() {
    let l = lattice();
    let g = fbi::build_kgrid(&l, 4, 4).unwrap();
    for &k in g.points() {
        let basis = PlaneWaveBasis::new(&l, k, radius()).unwrap();
        let ev = eigvalsh(&assemble_h(&l, k, magic().alpha, &basis).unwrap());
        let small = ev.iter().filter(|x| x.abs() <= 1e-8).count();
        assert_eq!(small, 2, "k = {k:?}");
    }
}

#[test]
fn hamiltonian_hermitian_with_paired_spectrum() {
    let l = lattice();
    for (i, &k) in [l.g1 * 0.2, l.g2 * 0.77 + l.g1 * 0.4, Vec2::new(0.3, -0.9)].iter().enumerate() {
        let basis = PlaneWaveBasis::with_shells(&l, k, 3 + i).unwrap();
        let h = assemble_h(&l, k, 0.3 + 0.2 * i as f64, &basis).unwrap();
        assert!((&h - h.adjoint()).norm() <= 1e-13 * h.norm());
        let ev = eigvalsh(&h);
        let n = ev.len();
        for j in 0..n {
            assert!((ev[j] + ev[n - 1 - j]).abs() < 1e-10);
        }
    }
}

#[test]
fn relabelled_basis_gives_same_operator() {
    let l = lattice();
    let k = l.g1 * 0.17 + l.g2 * 0.62;
    let g0 = [1, -2];
    let kg = k + l.reciprocal(g0);
    let b = PlaneWaveBasis::new(&l, k, radius()).unwrap();
    let bg = PlaneWaveBasis::new(&l, kg, radius()).unwrap();
    assert_eq!(b.len(), bg.len());
    let d = assemble_d(&l, k, 0.5, &b).unwrap().matrix;
    let dg = assemble_d(&l, kg, 0.5, &bg).unwrap().matrix;
    let n = b.len();
    let perm: Vec<usize> = b
        .g_list()
        .iter()
        .map(|g| bg.index_of([g[0] - g0[0], g[1] - g0[1]]).expect("same momenta"))
        .collect();
    let idx = |i: usize| if i < n { perm[i] } else { n + perm[i - n] };
    let mut worst: f64 = 0.0;
    for i in 0..2 * n {
        for j in 0..2 * n {
            worst = worst.max((d[(i, j)] - dg[(idx(i), idx(j))]).norm());
        }
    }
    assert!(worst < 1e-12);
    // relabelled() produces the same basis in the original order
    let rl = b.relabelled(&l, g0);
    assert!((rl.k() - kg).norm() < 1e-12);
    assert_eq!(assemble_d(&l, kg, 0.5, &rl).unwrap().matrix, dg_reordered(&dg, &perm, n));
}

fn dg_reordered(dg: &fbi::linalg::CMat, perm: &[usize], n: usize) -> fbi::linalg::CMat {
    let idx = |i: usize| if i < n { perm[i] } else { n + perm[i - n] };
    fbi::linalg::CMat::from_fn(2 * n, 2 * n, |i, j| dg[(idx(i), idx(j))])
}

#[test]
fn boundary_flags_mark_the_rim() {
    let l = lattice();
    let b = PlaneWaveBasis::new(&l, Vec2::zeros(), radius()).unwrap();
    assert!(b.boundary_count() > 0);
    assert!(b.boundary_count() < b.len());
    let inner = gshells(&l, 3.0 * l.g_norm());
    for g in inner {
        assert!(!b.is_boundary(b.index_of(g).unwrap()));
    }
}

#[test]
fn one_more_shell_barely_moves_the_flat_band() {
    let l = lattice();
    let k = l.g1 * 0.37 + l.g2 * 0.21;
    let a = flatness_residual(&l, k, magic().alpha, radius()).unwrap();
    let b = flatness_residual(&l, k, magic().alpha, radius() + l.g_norm()).unwrap();
    assert!((a - b).abs() < 1e-8, "{a:e} vs {b:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn q_is_an_involution_commuting_with_h(seed in any::<u64>(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let l = lattice();
        let k = Vec2::new(x, y);
        let basis = PlaneWaveBasis::with_shells(&l, k, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, &basis);
        let qq = symmetry_action(Symmetry::Q, &symmetry_action(Symmetry::Q, &s));
        prop_assert!((qq.coeffs - &s.coeffs).norm() < 1e-14);
        let alpha = 0.58;
        let lhs = apply_h(k, alpha, &symmetry_action(Symmetry::Q, &s));
        let hs = SpinorState { basis: basis.clone(), coeffs: apply_h(k, alpha, &s) };
        let rhs = symmetry_action(Symmetry::Q, &hs).coeffs;
        prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + s.coeffs.norm()));
    }

    #[test]
    fn l_maps_k_to_minus_k_and_commutes_with_q(seed in any::<u64>(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let l = lattice();
        let k = Vec2::new(x, y);
        let basis = PlaneWaveBasis::with_shells(&l, k, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, &basis);
        let ls = symmetry_action(Symmetry::L, &s);
        prop_assert!((ls.basis.k() + k).norm() < 1e-14);
        // L H_k = -H_{-k} L
        let alpha = 0.58;
        let lhs = apply_h(-k, alpha, &ls);
        let hs = SpinorState { basis: basis.clone(), coeffs: apply_h(k, alpha, &s) };
        let rhs = symmetry_action(Symmetry::L, &hs).coeffs;
        prop_assert!((lhs + rhs).norm() < 1e-12 * (1.0 + s.coeffs.norm()));
        // [Q, L] = 0
        let ql = symmetry_action(Symmetry::Q, &ls);
        let lq = symmetry_action(Symmetry::L, &symmetry_action(Symmetry::Q, &s));
        prop_assert!((ql.coeffs - lq.coeffs).norm() < 1e-14);
        // L^2 = -1
        let ll = symmetry_action(Symmetry::L, &ls);
        prop_assert!((ll.coeffs + &s.coeffs).norm() < 1e-14);
    }
}

#[test]
fn symmetry_matrices_match_actions() {
    let l = lattice();
    let basis = PlaneWaveBasis::with_shells(&l, Vec2::new(0.1, 0.2), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_state(&mut rng, &basis);
    let lm = symmetry_matrix(Symmetry::L, basis.len());
    assert!((&lm * &s.coeffs - symmetry_action(Symmetry::L, &s).coeffs).norm() < 1e-14);
    let qm = symmetry_matrix(Symmetry::Q, basis.len());
    let conj = s.coeffs.map(|z| z.conj());
    assert!((&qm * conj - symmetry_action(Symmetry::Q, &s).coeffs).norm() < 1e-14);
}
