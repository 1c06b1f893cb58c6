//! Finite-truncation laboratory for transfer operators of coupled map
//! lattices: lattice dynamics, Ulam discretizations, spectra, and
//! trajectory statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lattice;
pub mod rng;
pub mod sparse;
pub mod spectral;
pub mod stats;
pub mod transfer;

pub use error::{CmlError, Result};
