//! Small dense linear algebra helpers on complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Singular values in ascending order with matching right singular vectors.
pub fn svd_ascending(m: &CMat) -> (Vec<f64>, Vec<CVec>) {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let vectors = order.iter().map(|&i| vt.row(i).adjoint()).collect();
    (values, vectors)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

pub fn sigma_min(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vecs)
}

pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Eigenvalues of a general complex matrix from its Schur form.
pub fn eigvals(m: &CMat) -> Vec<Complex64> {
    let (_, t) = m.clone().schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn fro(m: &CMat) -> f64 {
    m.norm()
}

pub fn trace(m: &CMat) -> Complex64 {
    m.trace()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn from_real_diag(d: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|&x| c(x, 0.0))))
}

pub fn random_complex<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix with
/// the phases of R's diagonal absorbed into Q.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let z = random_complex(rng, n, n);
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Orthonormal basis for the column span of `m` (columns with tiny
/// singular values dropped).
pub fn orthonormalize(m: &CMat, tol: f64) -> CMat {
    if m.ncols() == 0 {
        return m.clone();
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol * smax.max(1.0))
        .collect();
    let mut out = CMat::zeros(m.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// Principal angles (radians, ascending) between two subspaces given by
/// orthonormal columns.
pub fn principal_angles(a: &CMat, b: &CMat) -> Vec<f64> {
    if a.ncols() == 0 || b.ncols() == 0 {
        return Vec::new();
    }
    let overlap = a.adjoint() * b;
    let mut s: Vec<f64> = overlap.singular_values().iter().map(|&x| x.min(1.0).acos()).collect();
    s.sort_by(|x, y| x.total_cmp(y));
    s
}

/// Pairwise summation in a fixed tree order.
pub fn tree_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (l, r) = values.split_at(n / 2);
            tree_sum(l) + tree_sum(r)
        }
    }
}

pub fn tree_sum_c(values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 => ZERO,
        1 => values[0],
        n => {
            let (l, r) = values.split_at(n / 2);
            tree_sum_c(l) + tree_sum_c(r)
        }
    }
}
