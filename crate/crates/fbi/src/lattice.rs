//! Moiré lattice, reciprocal lattice and the discrete momentum grid.
//!
//! Grid momenta are stored as integer numerators over `(nx, ny)` in the
//! `(g1, g2)` basis, so folding is exact integer arithmetic.

use crate::error::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use std::f64::consts::PI;

pub type Vec2 = Vector2<f64>;

/// Integer coordinates of a reciprocal lattice vector in the `(g1, g2)` basis.
pub type GIndex = [i64; 2];

pub const MOMENTUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Convention {
    /// q_0 = (0, -1), q_n = R(2πn/3) q_0, g_i = q_i - q_0.
    #[default]
    Standard,
}

impl Convention {
    pub fn id(&self) -> &'static str {
        match self {
            Convention::Standard => "standard",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(Convention::Standard),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoireLattice {
    pub convention: Convention,
    pub g1: Vec2,
    pub g2: Vec2,
    pub a1: Vec2,
    pub a2: Vec2,
    /// Area of the real-space unit cell.
    pub area: f64,
    pub q: [Vec2; 3],
    pub omega: Complex64,
}

fn rotate(v: Vec2, theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

pub fn build_lattice(convention: Convention) -> MoireLattice {
    match convention {
        Convention::Standard => {
            let q0 = Vec2::new(0.0, -1.0);
            let q = [q0, rotate(q0, 2.0 * PI / 3.0), rotate(q0, 4.0 * PI / 3.0)];
            let g1 = q[1] - q[0];
            let g2 = q[2] - q[0];
            let gmat = Matrix2::from_columns(&[g1, g2]);
            // rows of 2π G^{-1} are the real-space generators
            let inv = gmat.try_inverse().expect("reciprocal generators are independent");
            let a1 = Vec2::new(inv[(0, 0)], inv[(0, 1)]) * (2.0 * PI);
            let a2 = Vec2::new(inv[(1, 0)], inv[(1, 1)]) * (2.0 * PI);
            let area = (2.0 * PI).powi(2) / gmat.determinant().abs();
            MoireLattice {
                convention,
                g1,
                g2,
                a1,
                a2,
                area,
                q,
                omega: Complex64::from_polar(1.0, 2.0 * PI / 3.0),
            }
        }
    }
}

impl Default for MoireLattice {
    fn default() -> Self {
        build_lattice(Convention::Standard)
    }
}

impl MoireLattice {
    pub fn reciprocal(&self, g: GIndex) -> Vec2 {
        self.g1 * g[0] as f64 + self.g2 * g[1] as f64
    }

    /// Coordinates of `p` in the `(g1, g2)` basis.
    pub fn frac(&self, p: Vec2) -> [f64; 2] {
        [p.dot(&self.a1) / (2.0 * PI), p.dot(&self.a2) / (2.0 * PI)]
    }

    /// Returns the integer coordinates of `p` if it is a reciprocal lattice vector.
    pub fn as_reciprocal(&self, p: Vec2) -> Option<GIndex> {
        let f = self.frac(p);
        let g = [f[0].round() as i64, f[1].round() as i64];
        if (self.reciprocal(g) - p).norm() <= MOMENTUM_TOL {
            Some(g)
        } else {
            None
        }
    }

    pub fn g_norm(&self) -> f64 {
        self.g1.norm()
    }

    /// Complex coordinate x + iy of a real-space point or momentum.
    pub fn complex(v: Vec2) -> Complex64 {
        Complex64::new(v.x, v.y)
    }
}

/// All reciprocal vectors with |G| <= radius, sorted by length then by index.
pub fn gshells(lattice: &MoireLattice, radius: f64) -> Vec<GIndex> {
    let radius = radius.max(0.0);
    let bi = (radius * lattice.a1.norm() / (2.0 * PI)).ceil() as i64 + 1;
    let bj = (radius * lattice.a2.norm() / (2.0 * PI)).ceil() as i64 + 1;
    let mut out: Vec<(f64, GIndex)> = Vec::new();
    for i in -bi..=bi {
        for j in -bj..=bj {
            let n = lattice.reciprocal([i, j]).norm();
            if n <= radius + MOMENTUM_TOL {
                out.push((n, [i, j]));
            }
        }
    }
    out.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= MOMENTUM_TOL {
            a.1.cmp(&b.1)
        } else {
            a.0.total_cmp(&b.0)
        }
    });
    out.into_iter().map(|(_, g)| g).collect()
}

/// A momentum written as grid point plus reciprocal vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridMomentum {
    pub k: usize,
    pub g: GIndex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KGrid {
    pub nx: usize,
    pub ny: usize,
    lattice: MoireLattice,
    points: Vec<Vec2>,
}

pub fn build_kgrid(lattice: &MoireLattice, nx: usize, ny: usize) -> Result<KGrid> {
    KGrid::new(lattice, nx, ny)
}

impl KGrid {
    pub fn new(lattice: &MoireLattice, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::EmptyGrid(nx, ny));
        }
        let mut points = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                points.push(
                    lattice.g1 * (i as f64 / nx as f64) + lattice.g2 * (j as f64 / ny as f64),
                );
            }
        }
        Ok(KGrid { nx, ny, lattice: lattice.clone(), points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lattice(&self) -> &MoireLattice {
        &self.lattice
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> Vec2 {
        self.points[idx]
    }

    /// Numerators (i, j) of grid point `idx`.
    pub fn numerators(&self, idx: usize) -> [i64; 2] {
        [(idx / self.ny) as i64, (idx % self.ny) as i64]
    }

    /// Folds the momentum (i/nx) g1 + (j/ny) g2 exactly.
    pub fn fold_numerators(&self, i: i64, j: i64) -> GridMomentum {
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let (ri, gi) = (i.rem_euclid(nx), i.div_euclid(nx));
        let (rj, gj) = (j.rem_euclid(ny), j.div_euclid(ny));
        GridMomentum { k: (ri * ny + rj) as usize, g: [gi, gj] }
    }

    pub fn momentum_numerators(&self, m: GridMomentum) -> [i64; 2] {
        let n = self.numerators(m.k);
        [n[0] + m.g[0] * self.nx as i64, n[1] + m.g[1] * self.ny as i64]
    }

    pub fn vector(&self, m: GridMomentum) -> Vec2 {
        self.points[m.k] + self.lattice.reciprocal(m.g)
    }

    /// Writes `p` as grid point plus reciprocal vector.
    pub fn fold(&self, p: Vec2) -> Result<GridMomentum> {
        let f = self.lattice.frac(p);
        let i = (f[0] * self.nx as f64).round() as i64;
        let j = (f[1] * self.ny as f64).round() as i64;
        let m = self.fold_numerators(i, j);
        if (self.vector(m) - p).norm() > MOMENTUM_TOL {
            return Err(Error::OffGrid(p.x, p.y));
        }
        Ok(m)
    }

    /// Folds `k + p` for a grid point `k` and a grid momentum `p`.
    pub fn add(&self, k: usize, p: GridMomentum) -> GridMomentum {
        let a = self.numerators(k);
        let b = self.momentum_numerators(p);
        self.fold_numerators(a[0] + b[0], a[1] + b[1])
    }

    pub fn neg(&self, m: GridMomentum) -> GridMomentum {
        let a = self.momentum_numerators(m);
        self.fold_numerators(-a[0], -a[1])
    }

    /// Difference `k2 - k1` of two grid points as a grid momentum.
    pub fn sub(&self, k2: usize, k1: usize) -> GridMomentum {
        let a = self.numerators(k2);
        let b = self.numerators(k1);
        self.fold_numerators(a[0] - b[0], a[1] - b[1])
    }

    /// Index of the grid point representing `-k`.
    pub fn antipode(&self, k: usize) -> usize {
        self.neg(GridMomentum { k, g: [0, 0] }).k
    }

    pub fn is_self_antipodal(&self, k: usize) -> bool {
        self.antipode(k) == k
    }
}
