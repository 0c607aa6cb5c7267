//! Flat-band interacting Hamiltonians for the chiral model of twisted
//! bilayer graphene: flat bands, form factors, Hartree-Fock energies and
//! the classification of Hartree-Fock ground states, with brute-force
//! Fock-space oracles for tiny grids.

pub mod bands;
pub mod chiral;
pub mod classify;
pub mod error;
pub mod ferro;
pub mod fock;
pub mod form_factors;
pub mod hf;
pub mod lattice;
pub mod linalg;
pub mod sylvester;
pub mod theta;

pub use error::{Error, Result};
pub use lattice::{build_kgrid, build_lattice, Convention, GridMomentum, KGrid, MoireLattice};

/// Number of reciprocal shells in the default plane-wave disk.
pub const DEFAULT_SHELLS: usize = 6;
