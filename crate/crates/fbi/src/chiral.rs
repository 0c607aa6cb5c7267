//! Chiral continuum model on a truncated plane-wave basis.
//!
//! Layer 1 carries momenta `k + q0 + G`, layer 2 carries `k - q0 + G`.
//! The tunnelling potential moves layer-1 momentum `p` to layer-2 momentum
//! `p + q_m` with amplitude `alpha * omega^m`. With this placement `k = 0`
//! is the centre of the moiré Brillouin zone and the off-diagonal block of
//! the chiral Hamiltonian is complex symmetric.

use crate::error::{Error, Result};
use crate::lattice::{gshells, GIndex, MoireLattice, Vec2, MOMENTUM_TOL};
use crate::linalg::{CMat, CVec, ZERO};
use num_complex::Complex64;
use std::collections::HashMap;

pub const MIN_PLANE_WAVES: usize = 7;

/// Plane waves `G` with `|k + G| <= radius`, centred on the fiber momentum.
///
/// Centring the disk on `k` makes the truncation covariant: the basis at
/// `k + G0` is a relabelling of the basis at `k`.
#[derive(Clone, Debug)]
pub struct PlaneWaveBasis {
    k: Vec2,
    radius: f64,
    g_list: Vec<GIndex>,
    lookup: HashMap<GIndex, usize>,
    /// `true` where some tunnelling neighbour falls outside the disk.
    boundary: Vec<bool>,
}

/// Index shifts `c_m` with `q_m + 2 q0 = c_m` in reciprocal coordinates.
pub fn coupling_shifts(lattice: &MoireLattice) -> [GIndex; 3] {
    let q0 = lattice.q[0];
    let mut out = [[0, 0]; 3];
    for (m, slot) in out.iter_mut().enumerate() {
        *slot = lattice
            .as_reciprocal(lattice.q[m] + q0 * 2.0)
            .expect("q_m + 2 q_0 is a reciprocal vector");
    }
    out
}

/// Momentum offsets of the two layers relative to `k + G`.
pub fn layer_offsets(lattice: &MoireLattice) -> [Vec2; 2] {
    [lattice.q[0], -lattice.q[0]]
}

impl PlaneWaveBasis {
    pub fn new(lattice: &MoireLattice, k: Vec2, radius: f64) -> Result<Self> {
        let candidates = gshells(lattice, radius + k.norm());
        let g_list: Vec<GIndex> = candidates
            .into_iter()
            .filter(|&g| (k + lattice.reciprocal(g)).norm() <= radius + MOMENTUM_TOL)
            .collect();
        Self::from_list(lattice, k, radius, g_list)
    }

    /// Basis with the default number of shells.
    pub fn with_shells(lattice: &MoireLattice, k: Vec2, shells: usize) -> Result<Self> {
        Self::new(lattice, k, shells as f64 * lattice.g_norm())
    }

    fn from_list(lattice: &MoireLattice, k: Vec2, radius: f64, g_list: Vec<GIndex>) -> Result<Self> {
        if g_list.len() < MIN_PLANE_WAVES {
            return Err(Error::CutoffTooSmall(g_list.len()));
        }
        let lookup: HashMap<GIndex, usize> = g_list.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let shifts = coupling_shifts(lattice);
        let boundary = g_list
            .iter()
            .map(|g| {
                shifts.iter().any(|c| {
                    !lookup.contains_key(&[g[0] + c[0], g[1] + c[1]])
                        || !lookup.contains_key(&[g[0] - c[0], g[1] - c[1]])
                })
            })
            .collect();
        Ok(PlaneWaveBasis { k, radius, g_list, lookup, boundary })
    }

    pub fn k(&self) -> Vec2 {
        self.k
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.g_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_list.is_empty()
    }

    pub fn g_list(&self) -> &[GIndex] {
        &self.g_list
    }

    pub fn index_of(&self, g: GIndex) -> Option<usize> {
        self.lookup.get(&g).copied()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    /// The basis at `-k` with `G -> -G`, index for index.
    pub fn negated(&self) -> PlaneWaveBasis {
        let g_list: Vec<GIndex> = self.g_list.iter().map(|g| [-g[0], -g[1]]).collect();
        let lookup = g_list.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        PlaneWaveBasis { k: -self.k, radius: self.radius, g_list, lookup, boundary: self.boundary.clone() }
    }

    /// The basis at `k + G0` describing the same momenta, index for index.
    pub fn relabelled(&self, lattice: &MoireLattice, g0: GIndex) -> PlaneWaveBasis {
        let g_list: Vec<GIndex> = self.g_list.iter().map(|g| [g[0] - g0[0], g[1] - g0[1]]).collect();
        let lookup = g_list.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        PlaneWaveBasis {
            k: self.k + lattice.reciprocal(g0),
            radius: self.radius,
            g_list,
            lookup,
            boundary: self.boundary.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChiralOperator {
    pub k: Vec2,
    pub alpha: f64,
    /// `D_k(alpha)` on `[layer 1 | layer 2]`, size `2 n_g`.
    pub matrix: CMat,
}

fn check_fiber(k: Vec2, basis: &PlaneWaveBasis) -> Result<()> {
    if (k - basis.k).norm() > MOMENTUM_TOL {
        return Err(Error::Precondition(format!(
            "basis built at ({}, {}) used for k = ({}, {})",
            basis.k.x, basis.k.y, k.x, k.y
        )));
    }
    Ok(())
}

pub fn assemble_d(lattice: &MoireLattice, k: Vec2, alpha: f64, basis: &PlaneWaveBasis) -> Result<ChiralOperator> {
    check_fiber(k, basis)?;
    let n = basis.len();
    let offsets = layer_offsets(lattice);
    let shifts = coupling_shifts(lattice);
    let mut d = CMat::zeros(2 * n, 2 * n);
    for (a, &g) in basis.g_list.iter().enumerate() {
        let base = k + lattice.reciprocal(g);
        let p1 = base + offsets[0];
        let p2 = base + offsets[1];
        d[(a, a)] = Complex64::new(p1.x, p1.y);
        d[(n + a, n + a)] = Complex64::new(p2.x, p2.y);
        for (m, c) in shifts.iter().enumerate() {
            if let Some(b) = basis.index_of([g[0] + c[0], g[1] + c[1]]) {
                let t = lattice.omega.powu(m as u32) * alpha;
                d[(a, n + b)] += t;
                d[(n + b, a)] += t;
            }
        }
    }
    Ok(ChiralOperator { k, alpha, matrix: d })
}

/// `H_k = [[0, D^dagger], [D, 0]]` on `[sublattice A | sublattice B]`,
/// each sublattice block laid out as `[layer 1 | layer 2]`.
pub fn assemble_h(lattice: &MoireLattice, k: Vec2, alpha: f64, basis: &PlaneWaveBasis) -> Result<CMat> {
    let d = assemble_d(lattice, k, alpha, basis)?.matrix;
    Ok(block_h(&d))
}

pub fn block_h(d: &CMat) -> CMat {
    let m = d.nrows();
    let mut h = CMat::zeros(2 * m, 2 * m);
    h.view_mut((0, m), (m, m)).copy_from(&d.adjoint());
    h.view_mut((m, 0), (m, m)).copy_from(d);
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    /// Antiunitary sublattice exchange, fiber preserving.
    Q,
    /// Layer exchange with `r -> -r`, maps fiber `k` to `-k`.
    L,
}

/// A four-component state `[A1 | A2 | B1 | B2]` on a plane-wave basis.
#[derive(Clone, Debug)]
pub struct SpinorState {
    pub basis: PlaneWaveBasis,
    pub coeffs: CVec,
}

pub fn symmetry_action(which: Symmetry, state: &SpinorState) -> SpinorState {
    let n = state.basis.len();
    let c = &state.coeffs;
    match which {
        Symmetry::Q => {
            let mut out = CVec::from_element(4 * n, ZERO);
            for i in 0..2 * n {
                out[i] = c[2 * n + i].conj();
                out[2 * n + i] = c[i].conj();
            }
            SpinorState { basis: state.basis.clone(), coeffs: out }
        }
        Symmetry::L => {
            let mut out = CVec::from_element(4 * n, ZERO);
            for s in 0..2 {
                let o = 2 * n * s;
                for a in 0..n {
                    out[o + a] = c[o + n + a];
                    out[o + n + a] = -c[o + a];
                }
            }
            SpinorState { basis: state.basis.negated(), coeffs: out }
        }
    }
}

/// Dense matrix of a symmetry's linear part on the `4 n_g` components.
pub fn symmetry_matrix(which: Symmetry, n: usize) -> CMat {
    let mut m = CMat::zeros(4 * n, 4 * n);
    let one = Complex64::new(1.0, 0.0);
    match which {
        Symmetry::Q => {
            for i in 0..2 * n {
                m[(i, 2 * n + i)] = one;
                m[(2 * n + i, i)] = one;
            }
        }
        Symmetry::L => {
            for s in 0..2 {
                let o = 2 * n * s;
                for a in 0..n {
                    m[(o + a, o + n + a)] = one;
                    m[(o + n + a, o + a)] = -one;
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::linalg::sigma_min;
    use crate::Convention;

    #[test]
    fn free_model_kernel_at_dirac_points() {
        let lat = build_lattice(Convention::Standard);
        // layer 1 vanishes at k = -q0 and layer 2 at k = q0
        let k = -lat.q[0];
        let basis = PlaneWaveBasis::with_shells(&lat, k, 3).unwrap();
        let d = assemble_d(&lat, k, 0.0, &basis).unwrap();
        assert!(sigma_min(&d.matrix) < 1e-14);
    }

    #[test]
    fn tiny_cutoff_rejected() {
        let lat = build_lattice(Convention::Standard);
        let err = PlaneWaveBasis::new(&lat, Vec2::zeros(), 0.5).unwrap_err();
        assert!(matches!(err, Error::CutoffTooSmall(1)));
    }

    #[test]
    fn d_is_complex_symmetric() {
        let lat = build_lattice(Convention::Standard);
        let k = lat.g1 * 0.13 + lat.g2 * 0.71;
        let basis = PlaneWaveBasis::with_shells(&lat, k, 3).unwrap();
        let d = assemble_d(&lat, k, 0.4, &basis).unwrap().matrix;
        assert!((&d - d.transpose()).norm() < 1e-15);
    }

    #[test]
    fn mismatched_fiber_rejected() {
        let lat = build_lattice(Convention::Standard);
        let basis = PlaneWaveBasis::with_shells(&lat, Vec2::zeros(), 2).unwrap();
        assert!(assemble_d(&lat, lat.g1 * 0.25, 0.1, &basis).is_err());
    }
}
