//! Magic coupling search, gauge-fixed flat-band vectors and the grid
//! connectivity check.

use crate::chiral::{assemble_d, layer_offsets, PlaneWaveBasis};
use crate::error::{Error, Result};
use crate::lattice::{GIndex, KGrid, MoireLattice, Vec2};
use crate::linalg::{svd_ascending, CMat, CVec, ZERO};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::VecDeque;

/// Largest smallest-singular-value accepted as a flat band.
pub const FLAT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Valley {
    First,
    Second,
}

/// The two zero modes of `H_k` in chiral gauge.
///
/// `w` is the unit kernel vector of `D_k` on `[layer 1 | layer 2]`. Band 0
/// is `[0, v]` with `v = conj(w)` coefficientwise, band 1 is `[w, 0]`.
/// Since conjugating coefficients is `r -> -r` plus complex conjugation,
/// `v(r) = conj(w(-r))`.
#[derive(Clone, Debug)]
pub struct FlatBandPair {
    pub k: Vec2,
    pub basis: PlaneWaveBasis,
    pub w: CVec,
    pub residual: f64,
    pub next_singular: f64,
    pub offsets: [Vec2; 2],
}

impl FlatBandPair {
    pub fn n_g(&self) -> usize {
        self.basis.len()
    }

    /// Unit-norm band vector on `[A1 | A2 | B1 | B2]`.
    pub fn band(&self, n: usize) -> CVec {
        let m = self.w.len();
        let mut out = CVec::from_element(2 * m, ZERO);
        match n {
            0 => {
                for i in 0..m {
                    out[m + i] = self.w[i].conj();
                }
            }
            1 => out.rows_mut(0, m).copy_from(&self.w),
            _ => panic!("flat-band index {n} out of range"),
        }
        out
    }

    /// Band coefficients scaled so that `sum |u|^2 = area`.
    pub fn hat_coefficients(&self, n: usize, area: f64) -> CVec {
        self.band(n) * Complex64::new(area.sqrt(), 0.0)
    }

    /// Coefficient of band `n`, component `comp` (0..4), at reciprocal
    /// vector `g`; zero outside the basis.
    pub fn coefficient(&self, n: usize, comp: usize, g: GIndex) -> Complex64 {
        let Some(a) = self.basis.index_of(g) else {
            return ZERO;
        };
        let m = self.n_g();
        match (n, comp) {
            (0, 2) => self.w[a].conj(),
            (0, 3) => self.w[m + a].conj(),
            (1, 0) => self.w[a],
            (1, 1) => self.w[m + a],
            _ => ZERO,
        }
    }

    /// Periodic part of the kernel spinor `w` at `r`, normalized so that
    /// its squared norm integrates to one over the unit cell.
    pub fn kernel_spinor(&self, lattice: &MoireLattice, r: Vec2) -> [Complex64; 2] {
        let m = self.n_g();
        let scale = 1.0 / lattice.area.sqrt();
        let mut out = [ZERO; 2];
        for (a, &g) in self.basis.g_list().iter().enumerate() {
            let gv = lattice.reciprocal(g);
            for (l, slot) in out.iter_mut().enumerate() {
                let phase = Complex64::from_polar(scale, (self.offsets[l] + gv).dot(&r));
                *slot += self.w[l * m + a] * phase;
            }
        }
        out
    }

    /// Four-component periodic part of band `n` at `r`.
    pub fn band_spinor(&self, n: usize, lattice: &MoireLattice, r: Vec2) -> [Complex64; 4] {
        match n {
            0 => {
                let w = self.kernel_spinor(lattice, -r);
                [ZERO, ZERO, w[0].conj(), w[1].conj()]
            }
            1 => {
                let w = self.kernel_spinor(lattice, r);
                [w[0], w[1], ZERO, ZERO]
            }
            _ => panic!("flat-band index {n} out of range"),
        }
    }

    /// Periodic-part overlaps `O_mn = <u_m(self), u_n(other)>`, aligned by
    /// reciprocal vector.
    pub fn overlap(&self, other: &FlatBandPair) -> CMat {
        let mut o = CMat::zeros(2, 2);
        for m in 0..2 {
            for n in 0..2 {
                let mut s = ZERO;
                for &g in self.basis.g_list() {
                    for comp in 0..4 {
                        s += self.coefficient(m, comp, g).conj() * other.coefficient(n, comp, g);
                    }
                }
                o[(m, n)] = s;
            }
        }
        o
    }

    /// Second-valley partner: `J conj(u(-r))` on each sublattice, which in
    /// coefficients is `(conj c_2, -conj c_1)` at the same `G` with the
    /// layer offsets exchanged.
    pub fn time_reversed(&self) -> FlatBandPair {
        let m = self.n_g();
        let mut w = CVec::from_element(2 * m, ZERO);
        for a in 0..m {
            w[a] = self.w[m + a].conj();
            w[m + a] = -self.w[a].conj();
        }
        FlatBandPair {
            k: self.k,
            basis: self.basis.clone(),
            w,
            residual: self.residual,
            next_singular: self.next_singular,
            offsets: [self.offsets[1], self.offsets[0]],
        }
    }
}

fn fix_phase(w: &mut CVec) {
    let max = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = w.iter().position(|z| z.norm() >= max * (1.0 - 1e-10)).unwrap_or(0);
    let phase = w[pivot] / w[pivot].norm();
    *w *= phase.conj();
}

/// Smallest singular value of `D_k(alpha)`.
pub fn flatness_residual(lattice: &MoireLattice, k: Vec2, alpha: f64, radius: f64) -> Result<f64> {
    let basis = PlaneWaveBasis::new(lattice, k, radius)?;
    let d = assemble_d(lattice, k, alpha, &basis)?;
    Ok(crate::linalg::sigma_min(&d.matrix))
}

pub fn flat_band_states(lattice: &MoireLattice, k: Vec2, alpha: f64, basis: &PlaneWaveBasis) -> Result<FlatBandPair> {
    flat_band_states_with_tol(lattice, k, alpha, basis, FLAT_TOL)
}

pub fn flat_band_states_with_tol(
    lattice: &MoireLattice,
    k: Vec2,
    alpha: f64,
    basis: &PlaneWaveBasis,
    tol: f64,
) -> Result<FlatBandPair> {
    let d = assemble_d(lattice, k, alpha, basis)?;
    let (s, v) = svd_ascending(&d.matrix);
    if s[0] > tol {
        return Err(Error::NotFlat { kx: k.x, ky: k.y, residual: s[0] });
    }
    if s[1] <= 10.0 * tol.max(s[0]) {
        return Err(Error::DegenerateGauge { kx: k.x, ky: k.y, s0: s[0], s1: s[1] });
    }
    let mut w = v[0].clone();
    w /= Complex64::new(w.norm(), 0.0);
    fix_phase(&mut w);
    Ok(FlatBandPair {
        k,
        basis: basis.clone(),
        w,
        residual: s[0],
        next_singular: s[1],
        offsets: layer_offsets(lattice),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MagicAlpha {
    pub alpha: f64,
    pub residual: f64,
    pub evaluations: usize,
}

/// The `K` point of layer 1 and a generic momentum.
pub fn magic_sample(lattice: &MoireLattice) -> [Vec2; 2] {
    [-lattice.q[0], lattice.g1 * 0.37 + lattice.g2 * 0.21]
}

/// Worst flat-band residual over the fixed sample.
pub fn sample_residual(lattice: &MoireLattice, bases: &[PlaneWaveBasis], alpha: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for b in bases {
        let d = assemble_d(lattice, b.k(), alpha, b)?;
        worst = worst.max(crate::linalg::sigma_min(&d.matrix));
    }
    Ok(worst)
}

/// Golden-section minimization of the sample residual after a coarse scan.
pub fn find_magic_alpha(lattice: &MoireLattice, radius: f64, interval: (f64, f64), tol: f64) -> Result<MagicAlpha> {
    let (lo, hi) = if interval.0 <= interval.1 { interval } else { (interval.1, interval.0) };
    let bases = magic_sample(lattice)
        .iter()
        .map(|&k| PlaneWaveBasis::new(lattice, k, radius))
        .collect::<Result<Vec<_>>>()?;
    let f = |a: f64| sample_residual(lattice, &bases, a);
    const SCAN: usize = 60;
    let mut evaluations = 0;
    let mut best = (f64::INFINITY, 0usize);
    let grid: Vec<f64> = (0..=SCAN).map(|i| lo + (hi - lo) * i as f64 / SCAN as f64).collect();
    for (i, &a) in grid.iter().enumerate() {
        let v = f(a)?;
        evaluations += 1;
        if v < best.0 {
            best = (v, i);
        }
    }
    let mut a = grid[best.1.saturating_sub(1)];
    let mut b = grid[(best.1 + 1).min(SCAN)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    evaluations += 2;
    while b - a > 1e-13 * (1.0 + a.abs()) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        }
        evaluations += 1;
    }
    let (alpha, residual) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let (alpha, residual) = if best.0 < residual { (grid[best.1], best.0) } else { (alpha, residual) };
    if residual >= tol {
        return Err(Error::SearchFailed { alpha, residual });
    }
    Ok(MagicAlpha { alpha, residual, evaluations })
}

/// Flat-band data on every grid point.
#[derive(Clone, Debug)]
pub struct BlochBundle {
    pub grid: KGrid,
    pub alpha: f64,
    pub radius: f64,
    pub valley: Valley,
    pub states: Vec<FlatBandPair>,
}

pub fn build_bundle(grid: &KGrid, alpha: f64, radius: f64) -> Result<BlochBundle> {
    build_bundle_with_tol(grid, alpha, radius, FLAT_TOL)
}

pub fn build_bundle_with_tol(grid: &KGrid, alpha: f64, radius: f64, tol: f64) -> Result<BlochBundle> {
    let lattice = grid.lattice();
    let states = grid
        .points()
        .par_iter()
        .map(|&k| {
            let basis = PlaneWaveBasis::new(lattice, k, radius)?;
            flat_band_states_with_tol(lattice, k, alpha, &basis, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlochBundle { grid: grid.clone(), alpha, radius, valley: Valley::First, states })
}

impl BlochBundle {
    pub fn lattice(&self) -> &MoireLattice {
        self.grid.lattice()
    }

    pub fn max_residual(&self) -> f64 {
        self.states.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    /// Bundle of the other valley.
    pub fn time_reversed_partner(&self) -> BlochBundle {
        BlochBundle {
            grid: self.grid.clone(),
            alpha: self.alpha,
            radius: self.radius,
            valley: match self.valley {
                Valley::First => Valley::Second,
                Valley::Second => Valley::First,
            },
            states: self.states.iter().map(|s| s.time_reversed()).collect(),
        }
    }

    /// `max_k |(1/area) sum_G <u_m, u_n> - delta_mn|` with scaled coefficients.
    pub fn orthonormality_residual(&self) -> f64 {
        let area = self.lattice().area;
        let mut worst: f64 = 0.0;
        for s in &self.states {
            for m in 0..2 {
                for n in 0..2 {
                    let um = s.hat_coefficients(m, area);
                    let un = s.hat_coefficients(n, area);
                    let ip = um.dotc(&un) / area;
                    let target = if m == n { 1.0 } else { 0.0 };
                    worst = worst.max((ip - target).norm());
                }
            }
        }
        worst
    }

    /// Operator-norm distance between the flat-band projectors at two grid
    /// points, comparing periodic parts.
    pub fn projector_distance(&self, a: usize, b: usize) -> f64 {
        projector_distance(&self.states[a], &self.states[b])
    }
}

/// `||Pi_a - Pi_b||` for two rank-2 projectors from their overlap.
pub fn projector_distance(a: &FlatBandPair, b: &FlatBandPair) -> f64 {
    let o = a.overlap(b);
    let smin = crate::linalg::sigma_min(&o).min(1.0);
    (1.0 - smin * smin).max(0.0).sqrt()
}

#[derive(Clone, Debug)]
pub struct ConnectivityReport {
    pub components: Vec<Vec<usize>>,
    pub connected: bool,
    /// Edges `(a, b, distance)` with `a < b` and distance below one.
    pub edges: Vec<(usize, usize, f64)>,
    /// Largest projector distance between grid neighbours.
    pub nearest_neighbor_max: f64,
}

impl ConnectivityReport {
    /// Shortest edge path from `a` to `b`, lowest indices first on ties.
    pub fn path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let n = self.components.iter().map(|c| c.len()).sum();
        let mut adj = vec![Vec::new(); n];
        for &(x, y, _) in &self.edges {
            adj[x].push(y);
            adj[y].push(x);
        }
        for l in adj.iter_mut() {
            l.sort_unstable();
        }
        let mut prev = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([a]);
        seen[a] = true;
        while let Some(x) = queue.pop_front() {
            if x == b {
                let mut out = vec![b];
                let mut cur = b;
                while cur != a {
                    cur = prev[cur];
                    out.push(cur);
                }
                out.reverse();
                return Some(out);
            }
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    prev[y] = x;
                    queue.push_back(y);
                }
            }
        }
        None
    }
}

pub fn check_grid_assumption(bundle: &BlochBundle) -> ConnectivityReport {
    let n = bundle.states.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let dist: Vec<f64> = pairs.par_iter().map(|&(a, b)| bundle.projector_distance(a, b)).collect();
    let edges: Vec<(usize, usize, f64)> = pairs
        .iter()
        .zip(&dist)
        .filter(|(_, &d)| d < 1.0)
        .map(|(&(a, b), &d)| (a, b, d))
        .collect();

    let mut label = vec![usize::MAX; n];
    let mut components = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut comp = vec![start];
        label[start] = id;
        let mut i = 0;
        while i < comp.len() {
            let x = comp[i];
            for &(a, b, _) in &edges {
                let y = if a == x { b } else if b == x { a } else { continue };
                if label[y] == usize::MAX {
                    label[y] = id;
                    comp.push(y);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        components.push(comp);
    }

    let grid = &bundle.grid;
    let mut nn_max: f64 = 0.0;
    for k in 0..n {
        let [i, j] = grid.numerators(k);
        for (di, dj) in [(1, 0), (0, 1)] {
            let nb = grid.fold_numerators(i + di, j + dj).k;
            if nb != k {
                nn_max = nn_max.max(bundle.projector_distance(k, nb));
            }
        }
    }
    ConnectivityReport { connected: components.len() == 1, components, edges, nearest_neighbor_max: nn_max }
}

/// Smallest `count` magnitudes of the spectrum of `H_k`; the spectrum is
/// these values with both signs.
pub fn band_energies(lattice: &MoireLattice, k: Vec2, alpha: f64, radius: f64, count: usize) -> Result<Vec<f64>> {
    let basis = PlaneWaveBasis::new(lattice, k, radius)?;
    let d = assemble_d(lattice, k, alpha, &basis)?;
    let mut s = crate::linalg::singular_values(&d.matrix);
    s.truncate(count);
    Ok(s)
}
