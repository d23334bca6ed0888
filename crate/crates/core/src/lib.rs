//! End-to-end model of a photonic-crystal-fiber photon-pair source pumped
//! in the normal dispersion regime.
//!
//! The crate is organised along the physical chain:
//!
//! - [`dispersion`]: silica-strand waveguide dispersion and the
//!   zero-dispersion wavelength.
//! - [`phasematch`]: four-wave-mixing phase matching, sideband wavelengths
//!   and bandwidths.
//! - [`sim`]: Monte Carlo pulsed pair emission, detection and time-interval
//!   histogramming.
//! - [`inference`]: lumped efficiencies, pair rates, background bounds and
//!   the quadratic rate fit from count records.
//! - [`reproduce`]: the one-shot pipeline tying the above together, with
//!   pass/fail checks on the reference results.

pub mod config;
pub mod dispersion;
pub mod error;
pub mod inference;
pub mod phasematch;
pub mod plot;
pub mod reproduce;
pub mod roots;
pub mod sim;
pub mod special;

pub use error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
