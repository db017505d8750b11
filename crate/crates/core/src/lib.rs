//! Numerical core of detforge: bit-level Slater determinants, Slater–Condon
//! matrix elements, selected configuration interaction, LUCJ state
//! construction and sampling, phaseless auxiliary-field QMC with
//! multi-determinant trials, and energy/variance extrapolation.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. File formats, configuration and the command-line driver live in
//! the `detforge` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod afqmc;
pub mod determinant;
pub mod error;
pub mod extrapolate;
pub mod fcidump;
pub mod hamiltonian;
pub mod linalg;
pub mod lucj;
pub mod sci;

mod math;

/// Hash map with a fixed hasher so iteration order is reproducible.
pub(crate) type FxMap<K, V> = hashbrown::HashMap<K, V, rustc_hash::FxBuildHasher>;

pub use determinant::{Determinant, ExcitationInfo};
pub use error::{Error, Result};
pub use fcidump::Integrals;
pub use hamiltonian::{CholeskyFactors, SubspaceHamiltonian};
pub use sci::{CIWavefunction, VarianceReport};

pub use num_complex::Complex64;
