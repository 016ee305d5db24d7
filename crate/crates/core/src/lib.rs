//! Microscopic model of nuclear-spin flip-flop relaxation in rare-earth-doped crystals.
//!
//! The pipeline runs lattice doping ([`crystal`]) → spin Hamiltonian
//! eigenstates ([`spinham`]) → dipole-dipole flip-flop matrix elements
//! ([`dipole`]) → golden-rule rates per ion ([`rates`]) → closed-form
//! three-level kinetics averaged over the ensemble ([`kinetics`]). [`fit`]
//! adjusts the six linewidth parameters against measured decay curves and
//! [`holeburn`] does the class bookkeeping for hole-burning spectra.

pub mod constants;
pub mod crystal;
pub mod dipole;
pub mod error;
pub mod fit;
pub mod holeburn;
pub mod kinetics;
pub mod optim;
pub mod rates;
pub mod spinham;

pub use error::{Error, Result};
