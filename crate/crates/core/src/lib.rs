//! Simulator and post-processing library for free-running
//! reference-frame-independent (RFI) quantum key distribution.
//!
//! The crate models a decoy-state time-bin/phase link whose X/Y reference
//! frame drifts over time, simulates per-interval detection tallies, and
//! runs the slice-based post-processing chain:
//!
//! 1. estimate the misalignment angle of each sampling interval from its
//!    signal-state X/Y error rates ([`slicer::estimate_theta`]),
//! 2. bin the intervals into `m` angular slices ([`slicer::accumulate`]),
//! 3. bound single-photon yields and error rates per slice with the
//!    vacuum + weak decoy method ([`decoy::decoy_bounds`]),
//! 4. compute each slice's channel quality `C`, Eve's information and the
//!    secure key length ([`keyrate`]).
//!
//! [`analytic`] evaluates the same chain on expectation-level statistics,
//! which is what the loss and angle sweeps in [`scenario`] use by default.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod channel;
pub mod config;
pub mod decoy;
pub mod drift;
pub mod error;
pub mod exec;
pub mod keyrate;
pub mod log;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod slicer;
pub mod tally;

pub use error::{Error, Result};
