//! Dispersion curves, edge currents and lemma checks for magnetic Schrödinger
//! operators on strips and cylinders with even confining walls.

// NaN must fail parameter checks, so `!(x > 0.0)` is used on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod band;
pub mod current;
pub mod cylinder;
pub mod dispersion;
pub mod error;
pub mod fiber;
pub mod oracle;
pub mod potentials;
pub mod report;
pub mod tridiag;
pub mod verify;

pub use error::{Error, Result};
