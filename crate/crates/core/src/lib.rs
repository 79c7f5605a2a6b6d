//! Simulation of polarization-entangled photon-pair sources that turn the
//! birth-position correlation of SPDC pairs into polarization entanglement.
//!
//! The crate is organised bottom-up:
//!
//! - [`spectra`]: dispersion, SPDC spectrum sampling and interferometric phases
//! - [`qstate`]: two-qubit states, mixing and entanglement metrics
//! - [`elements`]: Jones-calculus wave plates, PBS, wedge and single-mode projection
//! - [`sources`]: interferometer, compact walk-off and 2f Ψ± source pipelines
//! - [`detect`]: polarization analysis, visibility and Monte Carlo counting
//! - [`tomo`]: linear-inversion and maximum-likelihood state tomography

pub mod detect;
pub mod elements;
mod error;
pub mod qstate;
pub mod sources;
pub mod spectra;
pub mod tomo;

pub use error::{Error, Result};
