//! Translation-breaking scan. A block `P(k, k')` of a ground state solves
//! `X Lambda_{k'}(G) = Lambda_k(G) X` for every reciprocal `G`; the
//! solutions form the kernel of a summed Gram matrix.

use crate::error::{Error, Result};
use crate::form_factors::FormFactorTable;
use crate::lattice::GridMomentum;
use crate::linalg::{eigh, eigvals, kron, CMat};
use rayon::prelude::*;

/// Relative kernel threshold on the eigenvalues of `M_{k,k'}`.
pub const KERNEL_TOL: f64 = 1e-10;

/// Required separation factor on both sides of the threshold.
pub const GAP_FACTOR: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct KernelReport {
    pub k: usize,
    pub kp: usize,
    /// Eigenvalues of `M_{k,k'}`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Absolute threshold used, `KERNEL_TOL * scale`.
    pub threshold: f64,
    /// Upper bound on `lambda_max` from the form-factor norms.
    pub scale: f64,
    pub dim: usize,
    /// Kernel vectors reshaped column-major into matrices.
    pub basis: Vec<CMat>,
    /// Smallest eigenvalue above the threshold.
    pub gap: f64,
    pub ambiguous: bool,
    /// Tail norm of the table used for the `G` sum.
    pub tail: f64,
}

/// Transfers with `q = 0`, i.e. the reciprocal vectors in the table.
fn reciprocal_transfers(table: &FormFactorTable) -> Vec<usize> {
    table.transfers().iter().enumerate().filter(|(_, p)| p.k == 0).map(|(t, _)| t).collect()
}

/// `M(G) = Lambda_{k'}(G)^T (x) I - I (x) Lambda_k(G)`.
pub fn pair_matrix_g(table: &FormFactorTable, k: usize, kp: usize, t: usize) -> CMat {
    let d = table.dim();
    let id = CMat::identity(d, d);
    kron(&table.entry(kp, t).transpose(), &id) - kron(&id, table.entry(k, t))
}

/// `M_{k,k'} = sum_G M(G)^dagger M(G)` over the table cutoff.
pub fn build_pair_matrix(table: &FormFactorTable, k: usize, kp: usize) -> CMat {
    let d = table.dim();
    let mut m = CMat::zeros(d * d, d * d);
    for t in reciprocal_transfers(table) {
        let mg = pair_matrix_g(table, k, kp, t);
        m += mg.adjoint() * &mg;
    }
    // symmetrize away rounding
    (&m + m.adjoint()) * num_complex::Complex64::new(0.5, 0.0)
}

/// `sum_G (||Lambda_k(G)||_F + ||Lambda_k'(G)||_F)^2`, which bounds the
/// spectrum of `M_{k,k'}` from above and stays finite when `M` vanishes.
pub fn pair_scale(table: &FormFactorTable, k: usize, kp: usize) -> f64 {
    reciprocal_transfers(table)
        .into_iter()
        .map(|t| (table.entry(k, t).norm() + table.entry(kp, t).norm()).powi(2))
        .sum()
}

/// Kernel of a Hermitian PSD matrix acting on `vec(X)` for `d x d` `X`.
///
/// Eigenvalues at most `tol * max(lambda_max, scale)` count as zero.
pub fn kernel_basis(m: &CMat, d: usize, tol: f64, scale: f64) -> KernelReport {
    let (vals, vecs) = eigh(m);
    let lmax = vals.iter().cloned().fold(0.0, f64::max);
    let scale = scale.max(lmax);
    let threshold = tol * scale;
    let dim = vals.iter().filter(|&&x| x <= threshold).count();
    let basis = (0..dim)
        .map(|i| CMat::from_column_slice(d, d, vecs.column(i).as_slice()))
        .collect();
    let gap = vals.get(dim).copied().unwrap_or(f64::INFINITY);
    let top_kernel = if dim > 0 { vals[dim - 1].max(0.0) } else { 0.0 };
    let ambiguous = gap < GAP_FACTOR * threshold || (dim > 0 && top_kernel > threshold / GAP_FACTOR);
    KernelReport { k: 0, kp: 0, eigenvalues: vals, threshold, scale, dim, basis, gap, ambiguous, tail: 0.0 }
}

pub fn pair_kernel(table: &FormFactorTable, k: usize, kp: usize) -> KernelReport {
    let m = build_pair_matrix(table, k, kp);
    let mut r = kernel_basis(&m, table.dim(), KERNEL_TOL, pair_scale(table, k, kp));
    r.k = k;
    r.kp = kp;
    r.tail = table.tail_norm();
    r
}

/// Reports for every ordered pair, row-major in `(k, k')`.
pub fn scan(table: &FormFactorTable) -> Vec<KernelReport> {
    let n = table.nk();
    (0..n * n).into_par_iter().map(|i| pair_kernel(table, i / n, i % n)).collect()
}

/// `max_G ||X Lambda_{k'}(G) - Lambda_k(G) X||_F`.
pub fn sylvester_residual(table: &FormFactorTable, k: usize, kp: usize, x: &CMat) -> f64 {
    reciprocal_transfers(table)
        .into_iter()
        .map(|t| (x * table.entry(kp, t) - table.entry(k, t) * x).norm())
        .fold(0.0, f64::max)
}

/// Largest, over `G`, of the distance between the eigenvalue sets of
/// `Lambda_k(G)` and `Lambda_{k'}(G)`.
pub fn disjoint_spectra_check(table: &FormFactorTable, k: usize, kp: usize) -> f64 {
    let mut best: f64 = 0.0;
    for t in reciprocal_transfers(table) {
        let a = eigvals(table.entry(k, t));
        let b = eigvals(table.entry(kp, t));
        let sep = a
            .iter()
            .flat_map(|x| b.iter().map(move |y| (x - y).norm()))
            .fold(f64::INFINITY, f64::min);
        best = best.max(sep);
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub enum AntipodalVerdict {
    /// The shifted pair `(k + q', -k + q')` admits only `X = 0`.
    ForcedZero { witness: usize },
    Inconclusive,
}

/// Decides `P(k, -k)` through a shifted pair with trivial kernel; rank is
/// constant along the shift for ground states.
pub fn resolve_antipodal(table: &FormFactorTable, k: usize) -> Result<AntipodalVerdict> {
    let grid = table.grid();
    let minus = grid.antipode(k);
    if minus == k {
        return Err(Error::Precondition(format!("k index {k} is its own antipode")));
    }
    for q in 1..grid.len() {
        let shift = GridMomentum { k: q, g: [0, 0] };
        let a = grid.add(k, shift).k;
        let b = grid.add(minus, shift).k;
        let r = pair_kernel(table, a, b);
        if r.dim == 0 && !r.ambiguous {
            return Ok(AntipodalVerdict::ForcedZero { witness: q });
        }
    }
    Ok(AntipodalVerdict::Inconclusive)
}
