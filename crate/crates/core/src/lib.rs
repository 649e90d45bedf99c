//! Multistatic OTFS integrated sensing and communication simulator.
//!
//! The crate covers the whole chain from a delay-Doppler frame to the
//! metrics of a Monte Carlo sweep:
//!
//! - [`modem`] and [`qam`]: OTFS modulation for rectangular pulses and the
//!   delay-Doppler shift operator.
//! - [`channel`]: doubly-selective multipath propagation and AWGN.
//! - [`scene`]: anchor/receiver/target geometry and the range/Doppler link model.
//! - [`estimator`]: sequential matched-filter path search with interference
//!   cancellation.
//! - [`fusion`]: triangulation, nearest-neighbour selection and receiver
//!   placement scoring.
//! - [`motion`] and [`tracker`]: Ornstein-Uhlenbeck target motion and the
//!   Kalman-filter assisted sensing loop.
//! - [`isac`]: pilot-aided channel estimation, regularized data detection and
//!   the detection/re-estimation outer loop.
//! - [`harness`]: configuration, sweeps, aggregation and output files.
//!
//! Runnable walkthroughs for each capability live in the crate's `examples/`
//! directory.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod estimator;
pub mod fusion;
pub mod harness;
pub mod isac;
pub mod modem;
pub mod motion;
pub mod operator;
pub mod qam;
pub mod rng;
pub mod scene;
pub mod sensing;
pub mod tracker;

pub use error::{Error, Result};

/// Complex baseband sample type used throughout the crate.
pub type Cplx = num_complex::Complex64;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
