//! Generalized ferromagnetism: a ground-state 1-RDM is fixed everywhere
//! by its value at one momentum, through
//! `P(k + p, k' + p) = Lambda_k(p)^{-1} P(k, k') Lambda_{k'}(p)`.

use crate::error::{Error, Result};
use crate::form_factors::FormFactorTable;
use crate::hf::DensityMatrix;
use crate::lattice::{GridMomentum, KGrid};
use crate::linalg::{singular_values, CMat};

/// Smallest singular value accepted for a step matrix.
pub const INVERTIBLE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub from: usize,
    pub transfer: GridMomentum,
    pub to: usize,
    pub sigma_min: f64,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationPath {
    pub start: usize,
    pub steps: Vec<Step>,
}

impl PropagationPath {
    pub fn end(&self) -> usize {
        self.steps.last().map_or(self.start, |s| s.to)
    }

    /// Product of the step condition numbers.
    pub fn condition_bound(&self) -> f64 {
        self.steps.iter().map(|s| s.condition).product()
    }
}

/// Transfer `delta + G` in the table maximizing `sigma_min(Lambda_k(delta + G))`.
pub fn select_invertible_shift(table: &FormFactorTable, k: usize, delta: GridMomentum) -> Result<(GridMomentum, f64)> {
    let mut best: Option<(GridMomentum, f64)> = None;
    for (t, p) in table.transfers().iter().enumerate() {
        if p.k != delta.k {
            continue;
        }
        let s = singular_values(table.entry(k, t));
        let smin = s[0];
        if best.is_none_or(|(_, b)| smin > b) {
            best = Some((*p, smin));
        }
    }
    match best {
        Some((p, s)) if s > INVERTIBLE_TOL => Ok((p, s)),
        Some((_, s)) => Err(Error::NoInvertibleShift { k, best: s }),
        None => Err(Error::NoInvertibleShift { k, best: 0.0 }),
    }
}

/// Unit grid steps from the origin to the numerators `(di, dj)`: first
/// along `g1`, then along `g2`.
pub fn straight_walk(grid: &KGrid, di: i64, dj: i64) -> Vec<GridMomentum> {
    let mut out = Vec::new();
    for _ in 0..di.unsigned_abs() {
        out.push(grid.fold_numerators(di.signum(), 0));
    }
    for _ in 0..dj.unsigned_abs() {
        out.push(grid.fold_numerators(0, dj.signum()));
    }
    out
}

pub fn build_path(table: &FormFactorTable, start: usize, deltas: &[GridMomentum]) -> Result<PropagationPath> {
    let mut steps = Vec::with_capacity(deltas.len());
    let mut cur = start;
    for &delta in deltas {
        let (p, smin) = select_invertible_shift(table, cur, delta)?;
        let t = table.transfer_index(p).expect("selected from the table");
        let s = singular_values(table.entry(cur, t));
        let to = table.target(cur, t);
        steps.push(Step { from: cur, transfer: p, to, sigma_min: smin, condition: s[s.len() - 1] / smin });
        cur = to;
    }
    Ok(PropagationPath { start, steps })
}

/// Ordered product `Lambda_k(p_1) Lambda_{k+p_1}(p_2) ...` along the
/// path's transfers, starting from `k`; returns it with the end point.
fn path_product(table: &FormFactorTable, k: usize, path: &PropagationPath) -> (CMat, usize) {
    let d = table.dim();
    let mut b = CMat::identity(d, d);
    let mut cur = k;
    for s in &path.steps {
        let t = table.transfer_index(s.transfer).expect("path transfers come from the table");
        b *= table.entry(cur, t);
        cur = table.target(cur, t);
    }
    (b, cur)
}

/// Returns `B_1^{-1} P(k1, k2) B_2` and the two end momenta.
pub fn propagate_block(
    table: &FormFactorTable,
    block: &CMat,
    k1: usize,
    k2: usize,
    path: &PropagationPath,
) -> Result<(CMat, usize, usize)> {
    if path.start != k1 {
        return Err(Error::Precondition(format!("path starts at {} but block row is {}", path.start, k1)));
    }
    let (b1, e1) = path_product(table, k1, path);
    let (b2, e2) = path_product(table, k2, path);
    let s = singular_values(&b1);
    let smin = s[0];
    if smin <= f64::EPSILON * s[s.len() - 1] {
        return Err(Error::SingularStep(smin));
    }
    let inv = b1.try_inverse().ok_or(Error::SingularStep(smin))?;
    Ok((inv * block * b2, e1, e2))
}

/// Propagates `P(k1, k2)` by the grid momentum with numerators `(di, dj)`
/// and compares with the stored block.
pub fn propagation_residual(table: &FormFactorTable, p: &DensityMatrix, k1: usize, k2: usize, di: i64, dj: i64) -> Result<f64> {
    let path = build_path(table, k1, &straight_walk(table.grid(), di, dj))?;
    let (out, e1, e2) = propagate_block(table, &p.block(k1, k2), k1, k2, &path)?;
    Ok((out - p.block(e1, e2)).norm())
}

/// Propagates `P(k, k)` around the two cycles of the torus and around a
/// unit plaquette; returns the largest deviation from the start block.
pub fn closed_loop_residual(table: &FormFactorTable, p: &DensityMatrix, k: usize) -> Result<f64> {
    let grid = table.grid();
    let (nx, ny) = (grid.nx as i64, grid.ny as i64);
    let plaquette = [
        grid.fold_numerators(1, 0),
        grid.fold_numerators(0, 1),
        grid.fold_numerators(-1, 0),
        grid.fold_numerators(0, -1),
    ];
    let loops = [straight_walk(grid, nx, 0), straight_walk(grid, 0, ny), plaquette.to_vec()];
    let start = p.block(k, k);
    let mut worst: f64 = 0.0;
    for deltas in loops {
        let path = build_path(table, k, &deltas)?;
        let (out, e1, e2) = propagate_block(table, &start, k, k, &path)?;
        debug_assert_eq!((e1, e2), (k, k));
        worst = worst.max((out - &start).norm());
    }
    Ok(worst)
}

/// `max_k |Tr P(k, k) - Tr P(k0, k0)|` with `k0` the first grid point.
pub fn uniform_filling_check(p: &DensityMatrix) -> f64 {
    let t0 = p.block(0, 0).trace().re;
    (0..p.nk()).map(|k| (p.block(k, k).trace().re - t0).abs()).fold(0.0, f64::max)
}

/// Numerical rank with relative threshold.
pub fn rank(m: &CMat, tol: f64) -> usize {
    let s = singular_values(m);
    let max = s.last().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > tol * max.max(f64::MIN_POSITIVE)).count()
}
