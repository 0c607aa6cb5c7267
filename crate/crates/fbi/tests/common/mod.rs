#![allow(dead_code)]

use fbi::bands::{build_bundle, find_magic_alpha, BlochBundle, MagicAlpha};
use fbi::form_factors::{compute_table, extend_flavor, Flavor, FormFactorTable};
use fbi::{build_kgrid, build_lattice, Convention, MoireLattice};
use std::sync::OnceLock;

pub const SHELLS: f64 = fbi::DEFAULT_SHELLS as f64;

pub fn lattice() -> MoireLattice {
    build_lattice(Convention::Standard)
}

pub fn radius() -> f64 {
    SHELLS * lattice().g_norm()
}

pub fn magic() -> &'static MagicAlpha {
    static M: OnceLock<MagicAlpha> = OnceLock::new();
    M.get_or_init(|| find_magic_alpha(&lattice(), radius(), (0.3, 0.9), 1e-7).expect("magic coupling"))
}

pub fn bundle4() -> &'static BlochBundle {
    static B: OnceLock<BlochBundle> = OnceLock::new();
    B.get_or_init(|| {
        let grid = build_kgrid(&lattice(), 4, 4).unwrap();
        build_bundle(&grid, magic().alpha, radius()).unwrap()
    })
}

pub fn table_radius() -> f64 {
    (SHELLS - 1.0) * lattice().g_norm()
}

pub fn table4() -> &'static FormFactorTable {
    static T: OnceLock<FormFactorTable> = OnceLock::new();
    T.get_or_init(|| compute_table(bundle4(), table_radius()))
}

pub fn table4_flavor(flavor: Flavor) -> &'static FormFactorTable {
    static V: OnceLock<FormFactorTable> = OnceLock::new();
    static VS: OnceLock<FormFactorTable> = OnceLock::new();
    match flavor {
        Flavor::Spinless => table4(),
        Flavor::Valley => V.get_or_init(|| extend_flavor(table4(), bundle4(), Flavor::Valley).unwrap()),
        Flavor::ValleySpin => VS.get_or_init(|| extend_flavor(table4(), bundle4(), Flavor::ValleySpin).unwrap()),
    }
}

/// Two-point grid for the brute-force checks.
pub fn table21() -> &'static FormFactorTable {
    static T: OnceLock<FormFactorTable> = OnceLock::new();
    T.get_or_init(|| {
        let grid = build_kgrid(&lattice(), 2, 1).unwrap();
        let bundle = build_bundle(&grid, magic().alpha, radius()).unwrap();
        compute_table(&bundle, table_radius())
    })
}

/// Single-point grid.
pub fn table11() -> &'static FormFactorTable {
    static T: OnceLock<FormFactorTable> = OnceLock::new();
    T.get_or_init(|| {
        let grid = build_kgrid(&lattice(), 1, 1).unwrap();
        let bundle = build_bundle(&grid, magic().alpha, radius()).unwrap();
        compute_table(&bundle, table_radius())
    })
}
