//! Brute-force second quantization on tiny grids.
//!
//! Modes are indexed like density-matrix rows, `j = k * d + m`. A basis
//! state is an occupation bitstring, little-endian over modes, and equals
//! `f^dagger_{s_1} ... f^dagger_{s_N} |0>` with `s_1 < ... < s_N`, so
//! `f^dagger_j` carries the sign `(-1)^(occupied modes below j)`.

use crate::error::{Error, Result};
use crate::form_factors::FormFactorTable;
use crate::hf::Interaction;
use crate::linalg::{eigh, principal_angles, CMat, CVec, ZERO};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;

pub const MAX_MODES: usize = 16;

/// Largest dimension for which dense matrices are formed.
pub const DENSE_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockSpace {
    modes: usize,
}

fn parity_below(s: usize, j: usize) -> f64 {
    if (s & ((1usize << j) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl FockSpace {
    pub fn new(modes: usize) -> Result<Self> {
        if modes > MAX_MODES {
            return Err(Error::DimensionCap(modes));
        }
        Ok(FockSpace { modes })
    }

    pub fn for_table(table: &FormFactorTable) -> Result<Self> {
        Self::new(table.dim() * table.nk())
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        1 << self.modes
    }

    pub fn create(&self, i: usize, s: usize) -> Option<(f64, usize)> {
        if s & (1 << i) != 0 {
            return None;
        }
        Some((parity_below(s, i), s | (1 << i)))
    }

    pub fn annihilate(&self, j: usize, s: usize) -> Option<(f64, usize)> {
        if s & (1 << j) == 0 {
            return None;
        }
        Some((parity_below(s, j), s & !(1 << j)))
    }

    /// `f^dagger_i f_j |s>`.
    pub fn hop(&self, i: usize, j: usize, s: usize) -> Option<(f64, usize)> {
        let (a, s1) = self.annihilate(j, s)?;
        let (b, s2) = self.create(i, s1)?;
        Some((a * b, s2))
    }

    /// Dense matrix of `f_j`.
    pub fn annihilator(&self, j: usize) -> CMat {
        let n = self.dim();
        let mut m = CMat::zeros(n, n);
        for s in 0..n {
            if let Some((sign, t)) = self.annihilate(j, s) {
                m[(t, s)] = Complex64::new(sign, 0.0);
            }
        }
        m
    }

    pub fn number_operator(&self) -> ManyBodyOperator {
        let cols = (0..self.dim())
            .map(|s| vec![(s, Complex64::new(s.count_ones() as f64, 0.0))])
            .collect();
        ManyBodyOperator { dim: self.dim(), cols }
    }
}

/// Column-sparse operator on a Fock space.
#[derive(Clone, Debug)]
pub struct ManyBodyOperator {
    dim: usize,
    cols: Vec<Vec<(usize, Complex64)>>,
}

impl ManyBodyOperator {
    fn from_columns(dim: usize, cols: Vec<BTreeMap<usize, Complex64>>) -> Self {
        let cols = cols
            .into_iter()
            .map(|c| c.into_iter().filter(|(_, v)| *v != ZERO).collect())
            .collect();
        ManyBodyOperator { dim, cols }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(|c| c.len()).sum()
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        let mut out = CVec::from_element(self.dim, ZERO);
        for (s, col) in self.cols.iter().enumerate() {
            if v[s] == ZERO {
                continue;
            }
            for &(r, a) in col {
                out[r] += a * v[s];
            }
        }
        out
    }

    pub fn expectation(&self, v: &CVec) -> Complex64 {
        v.dotc(&self.apply(v))
    }

    pub fn to_dense(&self) -> Result<CMat> {
        if self.dim > DENSE_CAP {
            return Err(Error::DimensionCap(self.dim.trailing_zeros() as usize));
        }
        let mut m = CMat::zeros(self.dim, self.dim);
        for (s, col) in self.cols.iter().enumerate() {
            for &(r, a) in col {
                m[(r, s)] += a;
            }
        }
        Ok(m)
    }

    pub fn adjoint(&self) -> Self {
        let mut cols = vec![BTreeMap::new(); self.dim];
        for (s, col) in self.cols.iter().enumerate() {
            for &(r, a) in col {
                *cols[r].entry(s).or_insert(ZERO) += a.conj();
            }
        }
        Self::from_columns(self.dim, cols)
    }

    /// `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        let cols = other
            .cols
            .par_iter()
            .map(|col| {
                let mut acc = BTreeMap::new();
                for &(mid, b) in col {
                    for &(r, a) in &self.cols[mid] {
                        *acc.entry(r).or_insert(ZERO) += a * b;
                    }
                }
                acc
            })
            .collect();
        Self::from_columns(self.dim, cols)
    }

    pub fn scaled_add(&mut self, other: &Self, scale: f64) {
        let mut cols: Vec<BTreeMap<usize, Complex64>> =
            self.cols.iter().map(|c| c.iter().copied().collect()).collect();
        for (s, col) in other.cols.iter().enumerate() {
            for &(r, a) in col {
                *cols[s].entry(r).or_insert(ZERO) += a * scale;
            }
        }
        *self = Self::from_columns(self.dim, cols);
    }

    pub fn zero(dim: usize) -> Self {
        ManyBodyOperator { dim, cols: vec![Vec::new(); dim] }
    }
}

/// `rho(q') = sum_{k,m,n} Lambda_k(q')_{mn} (f^dagger_{mk} f_{n,k+q'} - delta_mn / 2)`,
/// the constant present only when `q'` is reciprocal.
pub fn build_rho_q(table: &FormFactorTable, t: usize) -> Result<ManyBodyOperator> {
    let space = FockSpace::for_table(table)?;
    let d = table.dim();
    let nk = table.nk();
    let reciprocal = table.transfers()[t].k == 0;
    let shift: Complex64 = if reciprocal {
        (0..nk).map(|k| table.entry(k, t).trace()).sum::<Complex64>() * 0.5
    } else {
        ZERO
    };
    let cols = (0..space.dim())
        .into_par_iter()
        .map(|s| {
            let mut acc = BTreeMap::new();
            for k in 0..nk {
                let kp = table.target(k, t);
                let l = table.entry(k, t);
                for m in 0..d {
                    for n in 0..d {
                        let a = l[(m, n)];
                        if a == ZERO {
                            continue;
                        }
                        if let Some((sign, r)) = space.hop(k * d + m, kp * d + n, s) {
                            *acc.entry(r).or_insert(ZERO) += a * sign;
                        }
                    }
                }
            }
            if shift != ZERO {
                *acc.entry(s).or_insert(ZERO) -= shift;
            }
            acc
        })
        .collect();
    Ok(ManyBodyOperator::from_columns(space.dim(), cols))
}

fn negated_transfer(table: &FormFactorTable, t: usize) -> usize {
    table
        .transfer_index(table.grid().neg(table.transfers()[t]))
        .expect("transfer set closed under negation")
}

/// `(1 / N_k |Omega|) sum_q' V(q') rho(q') rho(-q')`.
pub fn build_h_fbi(table: &FormFactorTable, v: &Interaction) -> Result<ManyBodyOperator> {
    let space = FockSpace::for_table(table)?;
    let pre = 1.0 / (table.nk() as f64 * table.grid().lattice().area);
    let mut h = ManyBodyOperator::zero(space.dim());
    for t in 0..table.transfers().len() {
        let a = build_rho_q(table, t)?;
        let b = build_rho_q(table, negated_transfer(table, t))?;
        h.scaled_add(&a.compose(&b), pre * v.vhat(table.transfer_vector(t).norm()));
    }
    Ok(h)
}

/// `<Psi| H |Psi>` as `sum_q' V(q') ||rho(-q') Psi||^2`, without forming `H`.
pub fn energy_expectation(table: &FormFactorTable, v: &Interaction, psi: &CVec) -> Result<f64> {
    let pre = 1.0 / (table.nk() as f64 * table.grid().lattice().area);
    let mut terms = Vec::with_capacity(table.transfers().len());
    for t in 0..table.transfers().len() {
        let r = build_rho_q(table, negated_transfer(table, t))?;
        terms.push(v.vhat(table.transfer_vector(t).norm()) * r.apply(psi).norm_squared());
    }
    Ok(pre * crate::linalg::tree_sum(&terms))
}

/// `b^dagger_1 ... b^dagger_N |0>` with `b^dagger_i = sum_j Xi_{ji} f^dagger_j`.
pub fn slater_vector(space: &FockSpace, xi: &CMat) -> Result<CVec> {
    if xi.nrows() != space.modes() {
        return Err(Error::Precondition(format!("{} orbital rows for {} modes", xi.nrows(), space.modes())));
    }
    let gram = xi.adjoint() * xi;
    let defect = (&gram - CMat::identity(xi.ncols(), xi.ncols())).norm();
    if defect > 1e-10 {
        return Err(Error::NonOrthonormal(defect));
    }
    let n = xi.ncols();
    let mut v = CVec::from_element(space.dim(), ZERO);
    for s in 0..space.dim() {
        if s.count_ones() as usize != n {
            continue;
        }
        let rows: Vec<usize> = (0..space.modes()).filter(|&j| s & (1 << j) != 0).collect();
        let sub = CMat::from_fn(n, n, |a, b| xi[(rows[a], b)]);
        v[s] = if n == 0 { Complex64::new(1.0, 0.0) } else { sub.determinant() };
    }
    Ok(v)
}

/// `P[i, j] = <f^dagger_j f_i>`.
pub fn one_rdm(space: &FockSpace, psi: &CVec) -> CMat {
    let m = space.modes();
    let mut p = CMat::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut acc = ZERO;
            for s in 0..space.dim() {
                if psi[s] == ZERO {
                    continue;
                }
                if let Some((sign, r)) = space.hop(j, i, s) {
                    acc += psi[r].conj() * psi[s] * sign;
                }
            }
            p[(i, j)] = acc;
        }
    }
    p
}

#[derive(Clone, Debug)]
pub struct GroundSpace {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns spanning eigenvalues `<= tol`.
    pub zero_space: CMat,
    pub dim: usize,
}

impl GroundSpace {
    /// Principal angles between the zero space and the span of `states`.
    pub fn angles_to(&self, states: &[CVec]) -> Vec<f64> {
        if states.is_empty() {
            return Vec::new();
        }
        let mut m = CMat::zeros(self.zero_space.nrows(), states.len());
        for (i, s) in states.iter().enumerate() {
            m.set_column(i, s);
        }
        let span = crate::linalg::orthonormalize(&m, 1e-10);
        principal_angles(&self.zero_space, &span)
    }
}

pub fn ground_space(h: &ManyBodyOperator, tol: f64) -> Result<GroundSpace> {
    let dense = h.to_dense()?;
    let (vals, vecs) = eigh(&dense);
    let dim = vals.iter().filter(|&&x| x <= tol).count();
    Ok(GroundSpace { zero_space: vecs.columns(0, dim).into_owned(), eigenvalues: vals, dim })
}
