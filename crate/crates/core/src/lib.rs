//! Multi-wavelength intensity interferometry.
//!
//! The crate is organised around the measurement chain:
//!
//! - [`sources`]: emitters, detector baselines and propagation phases.
//! - [`correlation`]: mutual coherence integrals and the two-point intensity
//!   correlation functions, with and without cross-wavelength interference.
//! - [`conversion`]: photon states and the three detection mechanisms that
//!   make photons of different wavelengths interfere.
//! - [`montecarlo`]: photon-pair simulation with coincidence counting.
//! - [`estimation`]: recovery of diameters, separations and pairwise center
//!   vectors from correlation curves.
//! - [`scenario`]: the declarative scenario format used by the CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conversion;
pub mod correlation;
pub mod error;
pub mod estimation;
pub mod montecarlo;
pub mod phase;
pub mod scenario;
pub mod sources;

pub use error::{Error, Result};
