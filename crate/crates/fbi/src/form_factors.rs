//! Form factors `Lambda_k(q + G)`, real-space pair products, the sum rule
//! and the valley and spin extensions.

use crate::bands::{BlochBundle, FlatBandPair};
use crate::error::{Error, Result};
use crate::lattice::{gshells, GIndex, GridMomentum, KGrid, Vec2, MOMENTUM_TOL};
use crate::linalg::{kron, CMat, ZERO};
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::HashMap;

/// Tail norm above which a table is flagged as under-resolved.
pub const TAIL_WARN: f64 = 1e-6;

/// Tolerance for the valley block structure.
pub const STRUCTURE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Flavor {
    Spinless,
    Valley,
    ValleySpin,
}

impl Flavor {
    /// Matrix size `2M` of a form factor.
    pub fn dim(self) -> usize {
        match self {
            Flavor::Spinless => 2,
            Flavor::Valley => 4,
            Flavor::ValleySpin => 8,
        }
    }

    /// Number of occupied bands per momentum at half filling.
    pub fn half(self) -> usize {
        self.dim() / 2
    }

    pub fn id(self) -> &'static str {
        match self {
            Flavor::Spinless => "spinless",
            Flavor::Valley => "valley",
            Flavor::ValleySpin => "valley-spin",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spinless" => Some(Flavor::Spinless),
            "valley" => Some(Flavor::Valley),
            "valley-spin" => Some(Flavor::ValleySpin),
            _ => None,
        }
    }
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

pub fn check_flavor(expected: Flavor, found: Flavor) -> Result<()> {
    if expected != found {
        return Err(Error::FlavorMismatch { expected: expected.to_string(), found: found.to_string() });
    }
    Ok(())
}

/// Form factors on all grid points for the transfers `p = q + G` with
/// `|p| <= radius`. That set is closed under `p -> -p`.
#[derive(Clone, Debug)]
pub struct FormFactorTable {
    grid: KGrid,
    flavor: Flavor,
    radius: f64,
    transfers: Vec<GridMomentum>,
    index: HashMap<GridMomentum, usize>,
    /// Row-major over `(k, transfer)`.
    entries: Vec<CMat>,
    tail_norm: f64,
}

/// All grid transfers `q + G` with `|q + G| <= radius`, grouped by `q`.
pub fn transfer_set(grid: &KGrid, radius: f64) -> Vec<GridMomentum> {
    let lattice = grid.lattice();
    let reach = lattice.g1.norm() + lattice.g2.norm();
    let shells = gshells(lattice, radius + reach);
    let mut out = Vec::new();
    for q in 0..grid.len() {
        for &g in &shells {
            let m = GridMomentum { k: q, g };
            if grid.vector(m).norm() <= radius + MOMENTUM_TOL {
                out.push(m);
            }
        }
    }
    out
}

/// `Lambda_mn = sum_G conj(a_m(G)) b_n(G + shift)` over all four components.
pub fn overlap_block(a: &FlatBandPair, b: &FlatBandPair, shift: GIndex) -> CMat {
    let mut out = CMat::zeros(2, 2);
    for &g in a.basis.g_list() {
        let h = [g[0] + shift[0], g[1] + shift[1]];
        if b.basis.index_of(h).is_none() {
            continue;
        }
        for comp in 0..4 {
            for m in 0..2 {
                let am = a.coefficient(m, comp, g);
                if am == ZERO {
                    continue;
                }
                for n in 0..2 {
                    out[(m, n)] += am.conj() * b.coefficient(n, comp, h);
                }
            }
        }
    }
    out
}

/// `Lambda_K(p)` for the start momentum `K = k + G_s` written as a grid
/// momentum; uses only the stored states at grid points.
pub fn lambda_general(bundle: &BlochBundle, start: GridMomentum, p: GridMomentum) -> CMat {
    let grid = &bundle.grid;
    let a = grid.momentum_numerators(start);
    let b = grid.momentum_numerators(p);
    let target = grid.fold_numerators(a[0] + b[0], a[1] + b[1]);
    let shift = [target.g[0] - start.g[0], target.g[1] - start.g[1]];
    overlap_block(&bundle.states[start.k], &bundle.states[target.k], shift)
}

pub fn compute_table(bundle: &BlochBundle, radius: f64) -> FormFactorTable {
    let grid = &bundle.grid;
    let transfers = transfer_set(grid, radius);
    let nt = transfers.len();
    let entries: Vec<CMat> = (0..grid.len() * nt)
        .into_par_iter()
        .map(|i| {
            let (k, t) = (i / nt, i % nt);
            lambda_general(bundle, GridMomentum { k, g: [0, 0] }, transfers[t])
        })
        .collect();
    FormFactorTable::from_parts(grid.clone(), Flavor::Spinless, radius, transfers, entries)
        .expect("entries match transfers")
}

impl FormFactorTable {
    /// Assembles a table from explicit entries, row-major over `(k, transfer)`.
    pub fn from_parts(
        grid: KGrid,
        flavor: Flavor,
        radius: f64,
        transfers: Vec<GridMomentum>,
        entries: Vec<CMat>,
    ) -> Result<Self> {
        if entries.len() != grid.len() * transfers.len() {
            return Err(Error::Precondition(format!(
                "{} entries for {} momenta and {} transfers",
                entries.len(),
                grid.len(),
                transfers.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|e| e.nrows() != flavor.dim() || e.ncols() != flavor.dim()) {
            return Err(Error::FlavorMismatch {
                expected: format!("{}x{}", flavor.dim(), flavor.dim()),
                found: format!("{}x{}", bad.nrows(), bad.ncols()),
            });
        }
        let index = transfers.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        let mut table = FormFactorTable { grid, flavor, radius, transfers, index, entries, tail_norm: 0.0 };
        table.tail_norm = table.tail_beyond(radius - table.grid.lattice().g_norm());
        Ok(table)
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn dim(&self) -> usize {
        self.flavor.dim()
    }

    pub fn nk(&self) -> usize {
        self.grid.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn transfers(&self) -> &[GridMomentum] {
        &self.transfers
    }

    pub fn transfer_index(&self, p: GridMomentum) -> Option<usize> {
        self.index.get(&p).copied()
    }

    pub fn transfer_vector(&self, t: usize) -> Vec2 {
        self.grid.vector(self.transfers[t])
    }

    pub fn entry(&self, k: usize, t: usize) -> &CMat {
        &self.entries[k * self.transfers.len() + t]
    }

    pub fn entries(&self) -> &[CMat] {
        &self.entries
    }

    pub fn get(&self, k: usize, p: GridMomentum) -> Option<&CMat> {
        self.transfer_index(p).map(|t| self.entry(k, t))
    }

    /// Grid index of `k + p`.
    pub fn target(&self, k: usize, t: usize) -> usize {
        self.grid.add(k, self.transfers[t]).k
    }

    /// Mean over `k` of `sum ||Lambda_k(p)||^2` for `|p| > cut`.
    pub fn tail_beyond(&self, cut: f64) -> f64 {
        let mut s = 0.0;
        for t in 0..self.transfers.len() {
            if self.transfer_vector(t).norm() > cut + MOMENTUM_TOL {
                for k in 0..self.nk() {
                    s += self.entry(k, t).norm_squared();
                }
            }
        }
        s / self.nk() as f64
    }

    /// Tail norm of the outermost shell of transfers.
    pub fn tail_norm(&self) -> f64 {
        self.tail_norm
    }

    pub fn tail_warning(&self) -> bool {
        self.tail_norm > TAIL_WARN
    }

    /// The same table with every entry replaced by `f(k, t, entry)`.
    pub fn map_entries(&self, flavor: Flavor, f: impl Fn(usize, usize, &CMat) -> CMat + Sync) -> Result<Self> {
        let nt = self.transfers.len();
        let entries: Vec<CMat> =
            (0..self.entries.len()).into_par_iter().map(|i| f(i / nt, i % nt, &self.entries[i])).collect();
        FormFactorTable::from_parts(self.grid.clone(), flavor, self.radius, self.transfers.clone(), entries)
    }

    /// Gauge transform `Lambda_k(p) -> U_k^dagger Lambda_k(p) U_{k+p}`.
    pub fn conjugated(&self, unitaries: &[CMat]) -> Result<Self> {
        if unitaries.len() != self.nk() {
            return Err(Error::Precondition("one unitary per grid point required".into()));
        }
        self.map_entries(self.flavor, |k, t, e| {
            let kp = self.target(k, t);
            unitaries[k].adjoint() * e * &unitaries[kp]
        })
    }
}

/// `max_k ||Lambda_k(0) - I||_F`.
pub fn normalization_residual(table: &FormFactorTable) -> f64 {
    let t0 = table.transfer_index(GridMomentum { k: 0, g: [0, 0] }).expect("zero transfer present");
    let id = CMat::identity(table.dim(), table.dim());
    (0..table.nk()).map(|k| (table.entry(k, t0) - &id).norm()).fold(0.0, f64::max)
}

/// `max ||Lambda_k(p)^dagger - Lambda_{k+p}(-p)||_F` over the table.
pub fn adjoint_residual(table: &FormFactorTable) -> f64 {
    let grid = table.grid();
    let mut worst: f64 = 0.0;
    for (t, &p) in table.transfers().iter().enumerate() {
        let tn = table.transfer_index(grid.neg(p)).expect("transfer set closed under negation");
        for k in 0..table.nk() {
            let kp = table.target(k, t);
            worst = worst.max((table.entry(k, t).adjoint() - table.entry(kp, tn)).norm());
        }
    }
    worst
}

/// `max ||Lambda_{k+G'}(p) - Lambda_k(p)||_F` over the table and the given
/// shifts `G'`, recomputing the shifted side from the bundle.
pub fn periodicity_residual(bundle: &BlochBundle, table: &FormFactorTable, shifts: &[GIndex]) -> Result<f64> {
    check_flavor(Flavor::Spinless, table.flavor())?;
    let nt = table.transfers().len();
    let worst = (0..table.nk() * nt)
        .into_par_iter()
        .map(|i| {
            let (k, t) = (i / nt, i % nt);
            let mut w: f64 = 0.0;
            for &g in shifts {
                let l = lambda_general(bundle, GridMomentum { k, g }, table.transfers()[t]);
                w = w.max((l - table.entry(k, t)).norm());
            }
            w
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Largest off-diagonal magnitude of any spinless entry.
pub fn offdiagonal_residual(table: &FormFactorTable) -> f64 {
    let mut worst: f64 = 0.0;
    for e in table.entries() {
        for i in 0..e.nrows() {
            for j in 0..e.ncols() {
                if i != j {
                    worst = worst.max(e[(i, j)].norm());
                }
            }
        }
    }
    worst
}

/// `rho_{k,k'}(r) = sum_D e^{i D.r} Lambda_k(k' - k + D)` over the table.
pub fn pair_product(table: &FormFactorTable, k: usize, kp: usize, r: Vec2) -> CMat {
    let grid = table.grid();
    let lattice = grid.lattice();
    let q = grid.sub(kp, k);
    let mut out = CMat::zeros(table.dim(), table.dim());
    for (t, p) in table.transfers().iter().enumerate() {
        if p.k != q.k {
            continue;
        }
        let d = lattice.reciprocal([p.g[0] - q.g[0], p.g[1] - q.g[1]]);
        out += table.entry(k, t) * Complex64::from_polar(1.0, d.dot(&r));
    }
    out
}

/// `|Omega| <u_{mk}(r), u_{nk'}(r)>` evaluated from plane waves.
pub fn direct_pair_product_spinless(bundle: &BlochBundle, k: usize, kp: usize, r: Vec2) -> CMat {
    let lattice = bundle.lattice();
    let a = &bundle.states[k];
    let b = &bundle.states[kp];
    let ua = [a.band_spinor(0, lattice, r), a.band_spinor(1, lattice, r)];
    let ub = [b.band_spinor(0, lattice, r), b.band_spinor(1, lattice, r)];
    let mut out = CMat::zeros(2, 2);
    for m in 0..2 {
        for n in 0..2 {
            let s: Complex64 = (0..4).map(|c| ua[m][c].conj() * ub[n][c]).sum();
            out[(m, n)] = s * lattice.area;
        }
    }
    out
}

/// Direct pair product for any flavor, built from the bundle and its
/// time-reversed partner.
pub fn direct_pair_product(bundle: &BlochBundle, flavor: Flavor, k: usize, kp: usize, r: Vec2) -> CMat {
    let first = direct_pair_product_spinless(bundle, k, kp, r);
    if flavor == Flavor::Spinless {
        return first;
    }
    let partner = bundle.time_reversed_partner();
    let second = direct_pair_product_spinless(&partner, k, kp, r);
    let v = block_diag(&first, &second);
    match flavor {
        Flavor::Valley => v,
        _ => kron(&CMat::identity(2, 2), &v),
    }
}

pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = CMat::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SumRule {
    pub max: f64,
    pub worst_g: GIndex,
}

/// `max_G |sum_k Tr(Lambda_k(G) diag(1, -1))|`.
pub fn sum_rule_check(table: &FormFactorTable) -> Result<SumRule> {
    check_flavor(Flavor::Spinless, table.flavor())?;
    let mut best = SumRule { max: 0.0, worst_g: [0, 0] };
    for (t, p) in table.transfers().iter().enumerate() {
        if p.k != 0 {
            continue;
        }
        let terms: Vec<Complex64> = (0..table.nk())
            .map(|k| {
                let e = table.entry(k, t);
                e[(0, 0)] - e[(1, 1)]
            })
            .collect();
        let s = crate::linalg::tree_sum_c(&terms).norm();
        if s > best.max {
            best = SumRule { max: s, worst_g: p.g };
        }
    }
    Ok(best)
}

/// `max_G |Tr(Lambda_k(G) diag(1, -1))|` for a single `k`.
pub fn single_k_sum_rule(table: &FormFactorTable, k: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for (t, p) in table.transfers().iter().enumerate() {
        if p.k == 0 {
            let e = table.entry(k, t);
            worst = worst.max((e[(0, 0)] - e[(1, 1)]).norm());
        }
    }
    worst
}

/// Permutation exchanging the second and fourth valley-band index.
pub fn valley_permutation() -> CMat {
    crate::classify::permutation_matrix(&[0, 3, 2, 1])
}

/// Largest deviation of `Pi Lambda Pi` from `diag(a I_2, b I_2)` over the
/// valley blocks of every entry.
pub fn valley_structure_residual(table: &FormFactorTable) -> Result<f64> {
    let pi = valley_permutation();
    let blocks = match table.flavor() {
        Flavor::Valley => 1,
        Flavor::ValleySpin => 2,
        Flavor::Spinless => {
            return Err(Error::FlavorMismatch { expected: "valley".into(), found: "spinless".into() })
        }
    };
    let mut worst: f64 = 0.0;
    for e in table.entries() {
        for b in 0..blocks {
            let o = 4 * b;
            let v: CMat = e.view((o, o), (4, 4)).into_owned();
            let m = &pi * v * &pi;
            for i in 0..4 {
                for j in 0..4 {
                    let target = if i / 2 == j / 2 && i == j {
                        m[(2 * (i / 2), 2 * (i / 2))]
                    } else {
                        ZERO
                    };
                    worst = worst.max((m[(i, j)] - target).norm());
                }
            }
            for other in 0..blocks {
                if other != b {
                    let off = e.view((o, 4 * other), (4, 4));
                    worst = worst.max(off.iter().map(|z| z.norm()).fold(0.0, f64::max));
                }
            }
        }
    }
    Ok(worst)
}

/// Valley doubling through the time-reversed partner bundle, then spin.
///
/// The inter-valley blocks are zero. With spin the layout is
/// `I_2 (x) Lambda^V`, spin outermost.
pub fn extend_flavor(table: &FormFactorTable, bundle: &BlochBundle, target: Flavor) -> Result<FormFactorTable> {
    check_flavor(Flavor::Spinless, table.flavor())?;
    if target == Flavor::Spinless {
        return Ok(table.clone());
    }
    let partner = compute_table(&bundle.time_reversed_partner(), table.radius());
    if partner.transfers() != table.transfers() {
        return Err(Error::Precondition("table was not built from this bundle".into()));
    }
    let valley = table.map_entries(Flavor::Valley, |k, t, e| block_diag(e, partner.entry(k, t)))?;
    let out = match target {
        Flavor::Valley => valley,
        _ => {
            let id = CMat::identity(2, 2);
            valley.map_entries(Flavor::ValleySpin, |_, _, e| kron(&id, e))?
        }
    };
    let res = valley_structure_residual(&out)?;
    if res > STRUCTURE_TOL {
        return Err(Error::Convention(res));
    }
    Ok(out)
}

/// `sum_G ||Lambda_k(q + G)||_F^2` and the cell average of
/// `||rho_{k,k+q}(r)||_F^2` on an `n x n` grid, from the bundle directly.
pub fn parseval_pair(bundle: &BlochBundle, table: &FormFactorTable, k: usize, q: usize, n: usize) -> (f64, f64) {
    let lhs: f64 = table
        .transfers()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.k == q)
        .map(|(t, _)| table.entry(k, t).norm_squared())
        .sum();
    let kp = bundle.grid.add(k, GridMomentum { k: q, g: [0, 0] }).k;
    let points = crate::theta::cell_samples(bundle.lattice(), n, 0.0);
    let rhs: f64 = points
        .par_iter()
        .map(|&r| direct_pair_product(bundle, table.flavor(), k, kp, r).norm_squared())
        .sum::<f64>()
        / points.len() as f64;
    (lhs, rhs)
}
