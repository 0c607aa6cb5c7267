//! Classified Hartree-Fock ground states and their symmetry orbits.
//!
//! With valley and spin the band index is `4 s + i`, spin outermost, and
//! `i` runs over `(sublattice, valley)` pairs. The two eigenspaces of the
//! Chern operator are the index classes `{0, 3}` and `{1, 2}` within each
//! spin block.

use crate::error::{Error, Result};
use crate::form_factors::{check_flavor, Flavor, FormFactorTable};
use crate::hf::{energy_commutator_form, gs_condition_residuals, DensityMatrix, GsResiduals, Interaction};
use crate::linalg::{from_real_diag, haar_unitary, CMat, ONE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const UNITARY_TOL: f64 = 1e-12;

pub fn generators(flavor: Flavor) -> Vec<CMat> {
    let diags: &[&[f64]] = match flavor {
        Flavor::Spinless => &[&[1.0, 0.0], &[0.0, 1.0]],
        Flavor::Valley => &[&[1.0, 0.0, 0.0, 1.0], &[1.0, 1.0, 0.0, 0.0], &[0.0, 1.0, 1.0, 0.0]],
        Flavor::ValleySpin => &[
            &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
            &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
            &[0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
        ],
    };
    diags.iter().map(|d| from_real_diag(d)).collect()
}

/// `sigma_z tau_z`, tensored with the spin identity when present.
pub fn chern_operator(flavor: Flavor) -> Result<CMat> {
    match flavor {
        Flavor::Spinless => Err(Error::FlavorMismatch { expected: "valley".into(), found: "spinless".into() }),
        Flavor::Valley => Ok(from_real_diag(&[1.0, -1.0, -1.0, 1.0])),
        Flavor::ValleySpin => Ok(from_real_diag(&[1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0])),
    }
}

/// Index order placing the `+1` Chern class first.
pub fn class_order(flavor: Flavor) -> Vec<usize> {
    match flavor {
        Flavor::Spinless => vec![0, 1],
        Flavor::Valley => vec![0, 3, 2, 1],
        Flavor::ValleySpin => vec![0, 3, 4, 7, 2, 1, 6, 5],
    }
}

/// `(Pi x)_i = x_{perm[i]}`.
pub fn permutation_matrix(perm: &[usize]) -> CMat {
    let n = perm.len();
    let mut m = CMat::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        m[(i, j)] = ONE;
    }
    m
}

/// `U = diag(U1, U2)` in the class-ordered basis.
#[derive(Clone, Debug)]
pub struct SymmetryElement {
    flavor: Flavor,
    u1: CMat,
    u2: CMat,
}

impl SymmetryElement {
    pub fn new(flavor: Flavor, u1: CMat, u2: CMat) -> Result<Self> {
        let n = flavor.half();
        for u in [&u1, &u2] {
            if u.nrows() != n || u.ncols() != n {
                return Err(Error::FlavorMismatch {
                    expected: format!("{n}x{n} blocks"),
                    found: format!("{}x{}", u.nrows(), u.ncols()),
                });
            }
            let defect = (u.adjoint() * u - CMat::identity(n, n)).norm();
            if defect > UNITARY_TOL * n as f64 {
                return Err(Error::BlockStructure(defect));
            }
        }
        Ok(SymmetryElement { flavor, u1, u2 })
    }

    pub fn identity(flavor: Flavor) -> Self {
        let n = flavor.half();
        SymmetryElement { flavor, u1: CMat::identity(n, n), u2: CMat::identity(n, n) }
    }

    /// Independent Haar unitaries on both blocks.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, flavor: Flavor) -> Self {
        let n = flavor.half();
        let u1 = haar_unitary(rng, n);
        let u2 = haar_unitary(rng, n);
        SymmetryElement { flavor, u1, u2 }
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// The element in the original band basis, `Pi^T diag(U1, U2) Pi`.
    pub fn full(&self) -> CMat {
        let n = self.flavor.half();
        let mut u = CMat::zeros(2 * n, 2 * n);
        u.view_mut((0, 0), (n, n)).copy_from(&self.u1);
        u.view_mut((n, n), (n, n)).copy_from(&self.u2);
        let pi = permutation_matrix(&class_order(self.flavor));
        pi.transpose() * u * pi
    }

    pub fn act(&self, p0: &CMat) -> CMat {
        let u = self.full();
        &u * p0 * u.adjoint()
    }
}

/// True when `P0` fills exactly one Chern class, so the block unitaries
/// fix it.
pub fn orbit_is_singleton(flavor: Flavor, p0: &CMat) -> bool {
    let n = flavor.half();
    let pi = permutation_matrix(&class_order(flavor));
    let m = &pi * p0 * pi.transpose();
    let id = CMat::identity(n, n);
    let a = m.view((0, 0), (n, n)).into_owned();
    let b = m.view((n, n), (n, n)).into_owned();
    let full_empty = (&a - &id).norm() < 1e-12 && b.norm() < 1e-12;
    let empty_full = a.norm() < 1e-12 && (&b - &id).norm() < 1e-12;
    full_empty || empty_full
}

#[derive(Clone, Debug)]
pub struct OrbitSample {
    pub state: DensityMatrix,
    pub residuals: GsResiduals,
    pub energy: f64,
}

pub fn sample_orbit(p0: &CMat, u: &SymmetryElement, table: &FormFactorTable, v: &Interaction) -> Result<OrbitSample> {
    check_flavor(table.flavor(), u.flavor())?;
    let state = DensityMatrix::translation_invariant(table.flavor(), table.nk(), &u.act(p0))?;
    let residuals = gs_condition_residuals(&state, table)?;
    let energy = energy_commutator_form(&state, table, v)?;
    Ok(OrbitSample { state, residuals, energy })
}

/// `max_k ||[sigma_z tau_z, P(k, k)]||_F`.
pub fn chern_commutation_check(p: &DensityMatrix) -> Result<f64> {
    let c = chern_operator(p.flavor())?;
    let mut worst: f64 = 0.0;
    for k in 0..p.nk() {
        let b = p.block(k, k);
        worst = worst.max((&c * &b - &b * &c).norm());
    }
    Ok(worst)
}

/// A-priori rounding bound on the gs-condition residuals of a
/// translation-invariant state built from `p0`:
/// `4 gamma_d ||P0||_F sqrt(N_k) max ||Lambda_k(q')||_F` with
/// `gamma_d = d eps / (1 - d eps)`. Residuals below it carry no signal.
pub fn residual_floor(table: &FormFactorTable, p0: &CMat) -> f64 {
    let d = table.dim() as f64;
    let gamma = d * f64::EPSILON / (1.0 - d * f64::EPSILON);
    let lmax = table.entries().iter().map(|e| e.norm()).fold(0.0, f64::max);
    4.0 * gamma * p0.norm() * (table.nk() as f64).sqrt() * lmax
}

#[derive(Clone, Debug)]
pub struct GeneratorSweep {
    pub index: usize,
    pub diagonal: Vec<f64>,
    pub singleton: bool,
    /// Largest `||P0' - P0||_F` over the samples.
    pub orbit_spread: f64,
    pub max_trace: f64,
    pub max_commutator: f64,
    pub energy_min: f64,
    pub energy_max: f64,
    pub max_chern: f64,
}

/// Samples `samples` random block unitaries per generator.
pub fn orbit_sweep(
    table: &FormFactorTable,
    v: &Interaction,
    samples: usize,
    seed: u64,
) -> Result<Vec<GeneratorSweep>> {
    let flavor = table.flavor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (index, p0) in generators(flavor).iter().enumerate() {
        let mut sweep = GeneratorSweep {
            index,
            diagonal: (0..p0.nrows()).map(|i| p0[(i, i)].re).collect(),
            singleton: orbit_is_singleton(flavor, p0),
            orbit_spread: 0.0,
            max_trace: 0.0,
            max_commutator: 0.0,
            energy_min: f64::INFINITY,
            energy_max: f64::NEG_INFINITY,
            max_chern: 0.0,
        };
        for _ in 0..samples {
            let u = SymmetryElement::random(&mut rng, flavor);
            let s = sample_orbit(p0, &u, table, v)?;
            sweep.orbit_spread = sweep.orbit_spread.max((s.state.block(0, 0) - p0).norm());
            sweep.max_trace = sweep.max_trace.max(s.residuals.trace);
            sweep.max_commutator = sweep.max_commutator.max(s.residuals.commutator);
            sweep.energy_min = sweep.energy_min.min(s.energy);
            sweep.energy_max = sweep.energy_max.max(s.energy);
            if flavor != Flavor::Spinless {
                sweep.max_chern = sweep.max_chern.max(chern_commutation_check(&s.state)?);
            }
        }
        out.push(sweep);
    }
    Ok(out)
}
