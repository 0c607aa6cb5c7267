//! One-body density matrices and the Hartree-Fock energy of the
//! flat-band interacting Hamiltonian.
//!
//! Index layout: row `k * d + m` for grid point `k` and band `m`, and
//! `P[(k, m), (k', n)] = <f^dagger_{k'n} f_{km}>`.

use crate::classify::generators;
use crate::error::{Error, Result};
use crate::form_factors::{check_flavor, Flavor, FormFactorTable};
use crate::lattice::{GridMomentum, KGrid};
use crate::linalg::{haar_unitary, tree_sum, CMat, ONE};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

pub const PROJECTOR_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    flavor: Flavor,
    nk: usize,
    p: CMat,
}

impl DensityMatrix {
    /// Validates shape and the projector property.
    pub fn new(flavor: Flavor, nk: usize, p: CMat) -> Result<Self> {
        let n = flavor.dim() * nk;
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::FlavorMismatch {
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", p.nrows(), p.ncols()),
            });
        }
        let defect = projector_defect(&p);
        if defect > PROJECTOR_TOL * (1.0 + p.norm()) {
            return Err(Error::NotProjector(defect));
        }
        Ok(DensityMatrix { flavor, nk, p })
    }

    /// `P = Xi Xi^dagger` for orthonormal orbital columns `Xi`.
    pub fn from_orbitals(flavor: Flavor, nk: usize, xi: &CMat) -> Result<Self> {
        let gram = xi.adjoint() * xi;
        let defect = (&gram - CMat::identity(gram.nrows(), gram.ncols())).norm();
        if defect > PROJECTOR_TOL {
            return Err(Error::NonOrthonormal(defect));
        }
        Self::new(flavor, nk, xi * xi.adjoint())
    }

    /// `P(k, k) = p0` for every `k`, zero off the diagonal.
    pub fn translation_invariant(flavor: Flavor, nk: usize, p0: &CMat) -> Result<Self> {
        let d = flavor.dim();
        if p0.nrows() != d || p0.ncols() != d {
            return Err(Error::FlavorMismatch { expected: format!("{d}x{d}"), found: format!("{}x{}", p0.nrows(), p0.ncols()) });
        }
        let mut p = CMat::zeros(d * nk, d * nk);
        for k in 0..nk {
            p.view_mut((k * d, k * d), (d, d)).copy_from(p0);
        }
        Self::new(flavor, nk, p)
    }

    /// Haar-random Slater determinant with `M N_k` particles.
    pub fn random_half_filled<R: Rng + ?Sized>(rng: &mut R, flavor: Flavor, nk: usize) -> Self {
        let n = flavor.dim() * nk;
        let u = haar_unitary(rng, n);
        let xi = u.columns(0, n / 2).into_owned();
        Self::from_orbitals(flavor, nk, &xi).expect("Haar columns are orthonormal")
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn nk(&self) -> usize {
        self.nk
    }

    pub fn dim(&self) -> usize {
        self.flavor.dim()
    }

    pub fn matrix(&self) -> &CMat {
        &self.p
    }

    pub fn block(&self, k: usize, kp: usize) -> CMat {
        let d = self.dim();
        self.p.view((k * d, kp * d), (d, d)).into_owned()
    }

    /// `Q = P - I/2`.
    pub fn shifted(&self) -> CMat {
        let n = self.p.nrows();
        &self.p - CMat::identity(n, n) * Complex64::new(0.5, 0.0)
    }

    pub fn filling(&self) -> f64 {
        self.p.trace().re
    }

    pub fn is_half_filled(&self) -> bool {
        (self.filling() - (self.flavor.half() * self.nk) as f64).abs() <= 1e-9
    }

    pub fn rank(&self) -> usize {
        crate::linalg::eigvalsh(&self.p).iter().filter(|&&x| x > 0.5).count()
    }
}

/// `max(||P - P^dagger||, ||P^2 - P||)`.
pub fn projector_defect(p: &CMat) -> f64 {
    let herm = (p - p.adjoint()).norm();
    let idem = (p * p - p).norm();
    herm.max(idem)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InteractionFamily {
    /// `2 pi / sqrt(q^2 + kappa^2)`.
    Yukawa { kappa: f64 },
    /// `2 pi sigma^2 exp(-sigma^2 q^2 / 2)`.
    Gaussian { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub family: InteractionFamily,
}

impl Default for Interaction {
    fn default() -> Self {
        Interaction::yukawa(1.0)
    }
}

impl Interaction {
    pub fn yukawa(kappa: f64) -> Self {
        Interaction { family: InteractionFamily::Yukawa { kappa } }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Interaction { family: InteractionFamily::Gaussian { sigma } }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.family {
            InteractionFamily::Yukawa { kappa } => kappa > 0.0 && kappa.is_finite(),
            InteractionFamily::Gaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition("interaction parameter must be positive and finite".into()))
        }
    }

    pub fn vhat(&self, q: f64) -> f64 {
        use std::f64::consts::PI;
        match self.family {
            InteractionFamily::Yukawa { kappa } => 2.0 * PI / (q * q + kappa * kappa).sqrt(),
            InteractionFamily::Gaussian { sigma } => 2.0 * PI * sigma * sigma * (-0.5 * sigma * sigma * q * q).exp(),
        }
    }
}

fn check_inputs(p: &DensityMatrix, table: &FormFactorTable) -> Result<()> {
    check_flavor(table.flavor(), p.flavor())?;
    if p.nk() != table.nk() {
        return Err(Error::Precondition(format!("{} momenta in state, {} in table", p.nk(), table.nk())));
    }
    Ok(())
}

fn prefactor(table: &FormFactorTable) -> f64 {
    1.0 / (table.nk() as f64 * table.grid().lattice().area)
}

/// Per-transfer quantities for a state.
struct TransferTerms {
    /// `Tr(Lambda(q') pi_{q'} Q)`.
    trace: Complex64,
    /// `||[P, Lambda(q') pi_{q'}]||_F^2`.
    commutator_sq: f64,
}

fn transfer_terms(p: &DensityMatrix, q: &CMat, table: &FormFactorTable, t: usize) -> TransferTerms {
    let d = table.dim();
    let nk = table.nk();
    let n = d * nk;
    let mut trace = Complex64::new(0.0, 0.0);
    let mut c = CMat::zeros(n, n);
    let pm = p.matrix();
    for k in 0..nk {
        let kp = table.target(k, t);
        let l = table.entry(k, t);
        trace += (l * q.view((kp * d, k * d), (d, d))).trace();
        // (P a)[:, k'] += P[:, k] L ; (a P)[k, :] = L P[k', :]
        let pa = pm.view((0, k * d), (n, d)) * l;
        let mut cols = c.view_mut((0, kp * d), (n, d));
        cols += pa;
        let ap = l * pm.view((kp * d, 0), (d, n));
        let mut rows = c.view_mut((k * d, 0), (d, n));
        rows -= ap;
    }
    TransferTerms { trace, commutator_sq: c.norm_squared() }
}

/// The common diagonal block when `P(k, k') = delta_kk' P0` exactly.
fn uniform_block(p: &DensityMatrix) -> Option<CMat> {
    let d = p.dim();
    let p0 = p.block(0, 0);
    for k in 0..p.nk() {
        for kp in 0..p.nk() {
            let b = p.p.view((k * d, kp * d), (d, d));
            let same = if k == kp { b == p0 } else { b.iter().all(|z| *z == Complex64::new(0.0, 0.0)) };
            if !same {
                return None;
            }
        }
    }
    Some(p0)
}

/// Transfer terms for a translation-invariant state: `[P, a]` has blocks
/// `[P0, Lambda_k(q')]` and the trace only sees reciprocal transfers.
fn uniform_transfer_terms(p0: &CMat, table: &FormFactorTable, t: usize) -> TransferTerms {
    let d = table.dim();
    let q0 = p0 - CMat::identity(d, d) * Complex64::new(0.5, 0.0);
    let reciprocal = table.transfers()[t].k == 0;
    let mut trace = Complex64::new(0.0, 0.0);
    let mut commutator_sq = 0.0;
    for k in 0..table.nk() {
        let l = table.entry(k, t);
        if reciprocal {
            trace += (l * &q0).trace();
        }
        commutator_sq += (p0 * l - l * p0).norm_squared();
    }
    TransferTerms { trace, commutator_sq }
}

fn all_transfer_terms(p: &DensityMatrix, table: &FormFactorTable) -> Vec<TransferTerms> {
    let nt = table.transfers().len();
    match uniform_block(p) {
        Some(p0) => (0..nt).into_par_iter().map(|t| uniform_transfer_terms(&p0, table, t)).collect(),
        None => {
            let q = p.shifted();
            (0..nt).into_par_iter().map(|t| transfer_terms(p, &q, table, t)).collect()
        }
    }
}

/// `(1 / N_k |Omega|) sum_q' V(q') (|Tr(a Q)|^2 + ||[P, a]||^2 / 2)` with
/// `a = Lambda(q') pi_{q'}`.
pub fn energy_commutator_form(p: &DensityMatrix, table: &FormFactorTable, v: &Interaction) -> Result<f64> {
    check_inputs(p, table)?;
    let terms: Vec<f64> = all_transfer_terms(p, table)
        .iter()
        .enumerate()
        .map(|(t, tt)| v.vhat(table.transfer_vector(t).norm()) * (tt.trace.norm_sqr() + 0.5 * tt.commutator_sq))
        .collect();
    Ok(prefactor(table) * tree_sum(&terms))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyTerms {
    pub direct: f64,
    pub constant: f64,
    pub exchange: f64,
    pub total: f64,
}

/// Direct, constant and exchange terms of the blockwise energy, each with
/// the `1 / (N_k |Omega|)` prefactor.
pub fn energy_trace_terms(p: &DensityMatrix, table: &FormFactorTable, v: &Interaction) -> Result<EnergyTerms> {
    check_inputs(p, table)?;
    let d = table.dim();
    let nk = table.nk();
    let q = p.shifted();
    let qb = |a: usize, b: usize| q.view((a * d, b * d), (d, d)).into_owned();
    let per: Vec<(f64, f64, f64)> = (0..table.transfers().len())
        .into_par_iter()
        .map(|t| {
            let w = v.vhat(table.transfer_vector(t).norm());
            let mut tr = Complex64::new(0.0, 0.0);
            let mut cons = 0.0;
            let mut exch = Complex64::new(0.0, 0.0);
            for k in 0..nk {
                let kp = table.target(k, t);
                let l = table.entry(k, t);
                tr += (l * qb(kp, k)).trace();
                cons += l.norm_squared();
                for k2 in 0..nk {
                    let k2p = table.target(k2, t);
                    let l2 = table.entry(k2, t);
                    exch += (l * qb(kp, k2p) * l2.adjoint() * qb(k2, k)).trace();
                }
            }
            (w * tr.norm_sqr(), w * 0.25 * cons, w * exch.re)
        })
        .collect();
    let pre = prefactor(table);
    let direct = pre * tree_sum(&per.iter().map(|x| x.0).collect::<Vec<_>>());
    let constant = pre * tree_sum(&per.iter().map(|x| x.1).collect::<Vec<_>>());
    let exchange = pre * tree_sum(&per.iter().map(|x| x.2).collect::<Vec<_>>());
    Ok(EnergyTerms { direct, constant, exchange, total: direct + constant - exchange })
}

pub fn energy_trace_form(p: &DensityMatrix, table: &FormFactorTable, v: &Interaction) -> Result<f64> {
    Ok(energy_trace_terms(p, table, v)?.total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GsResiduals {
    /// `max_q' |Tr(Lambda(q') pi_{q'} Q)|`.
    pub trace: f64,
    /// `max_q' ||[P, Lambda(q') pi_{q'}]||_F`.
    pub commutator: f64,
    pub worst_trace: GridMomentum,
    pub worst_commutator: GridMomentum,
}

pub fn gs_condition_residuals(p: &DensityMatrix, table: &FormFactorTable) -> Result<GsResiduals> {
    check_inputs(p, table)?;
    let per: Vec<(f64, f64)> =
        all_transfer_terms(p, table).iter().map(|tt| (tt.trace.norm(), tt.commutator_sq.sqrt())).collect();
    let zero = GridMomentum { k: 0, g: [0, 0] };
    let mut out = GsResiduals { trace: 0.0, commutator: 0.0, worst_trace: zero, worst_commutator: zero };
    for (t, &(a, b)) in per.iter().enumerate() {
        if a > out.trace {
            out.trace = a;
            out.worst_trace = table.transfers()[t];
        }
        if b > out.commutator {
            out.commutator = b;
            out.worst_commutator = table.transfers()[t];
        }
    }
    Ok(out)
}

/// Translation-invariant state built from a classified generator.
pub fn build_fm_state(table: &FormFactorTable, choice: usize) -> Result<DensityMatrix> {
    let gens = generators(table.flavor());
    let p0 = gens.get(choice).ok_or(Error::InvalidGenerator { index: choice, count: gens.len() })?;
    DensityMatrix::translation_invariant(table.flavor(), table.nk(), p0)
}

/// Permutation `pi_{q'}` with identity blocks at `(k, k + q')`.
pub fn momentum_shift(grid: &KGrid, flavor: Flavor, p: GridMomentum) -> CMat {
    let d = flavor.dim();
    let n = d * grid.len();
    let mut m = CMat::zeros(n, n);
    for k in 0..grid.len() {
        let kp = grid.add(k, p).k;
        for i in 0..d {
            m[(k * d + i, kp * d + i)] = ONE;
        }
    }
    m
}

/// Block-diagonal `Lambda(q')` for one transfer.
pub fn lambda_blocks(table: &FormFactorTable, t: usize) -> CMat {
    let d = table.dim();
    let n = d * table.nk();
    let mut m = CMat::zeros(n, n);
    for k in 0..table.nk() {
        m.view_mut((k * d, k * d), (d, d)).copy_from(table.entry(k, t));
    }
    m
}

/// `|Re Tr(A B A^dagger B^dagger) - (Tr(A A^dagger B^dagger B) + Tr(A^dagger A B B^dagger))/2 + ||[A, B]||^2 / 2|`.
pub fn trace_lemma_residual(a: &CMat, b: &CMat) -> f64 {
    let (ad, bd) = (a.adjoint(), b.adjoint());
    let lhs = (a * b * &ad * &bd).trace().re;
    let rhs = 0.5 * ((a * &ad * &bd * b).trace().re + (&ad * a * b * &bd).trace().re)
        - 0.5 * crate::linalg::commutator(a, b).norm_squared();
    (lhs - rhs).abs()
}
