//! Desk-scale simulator of pair creation with ultracold atoms in a
//! bichromatic optical lattice.
//!
//! A staggered-mass tight-binding chain at half filling is the lattice
//! analogue of 1+1-dimensional electrons and positrons: the filled lower
//! band is the Dirac sea, a tilt potential plays the electric field, and
//! tunneling across the gap creates particle-hole pairs whose number is
//! exponentially suppressed in `πM²/E`. The crate builds the lattice
//! Hamiltonians, prepares and evolves Slater states through the staged
//! drive, extracts observables, validates the design formulas for a real
//! optical-lattice realization, and cross-checks the free-fermion machinery
//! against an exact Fock-space oracle (including the hardcore-boson route).

pub mod design;
pub mod dynamics;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod observables;
pub mod oracle;

pub mod config;
pub mod runner;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Result, SimError};
