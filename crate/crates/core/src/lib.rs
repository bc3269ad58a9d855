//! Grant-free joint activity detection, channel estimation and data
//! detection for cell-free MIMO uplinks.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. Everything here is pure computation over in-memory matrices;
//! file formats, the Monte-Carlo harness and the command line live in the
//! companion `gfree-sim` crate.
//!
//! Module map:
//!
//! * [`frame_design`] low-coherence unit-norm pilot frames (coherence, Welch
//!   bound, sequential ball-constrained decorrelation, coherence-capped
//!   tightening).
//! * [`channel`] AP/user geometry, pathloss with shadowing, Bernoulli-Gaussian
//!   channel draws and the thermal noise floor.
//! * [`signal`] Gray QPSK, transmit frame assembly and `Y = HX + W`.
//! * [`init_ce`] pilot-only channel estimators (MMV-AMP, minimum-norm LS,
//!   genie LMMSE).
//! * [`bigabp`] activity-aware bilinear Gaussian belief propagation.
//! * [`detectors`] zero-forcing baseline.
//! * [`metrics`] BER with lost bits, NMSE, missed detection, throughput and
//!   state-evolution tracking.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bigabp;
pub mod channel;
pub mod detectors;
mod error;
pub mod frame_design;
pub mod init_ce;
pub mod linalg;
pub mod metrics;
pub mod seed;
pub mod signal;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used for every 2-D signal quantity.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense real matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;
