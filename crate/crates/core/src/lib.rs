//! Quasi-static phasor simulation of a low-voltage AC microgrid and a
//! communication-free protection relay driven by local voltage and current
//! measurements.

// Validation compares with `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod error;
pub mod estimate;
pub mod fault;
pub mod network;
pub mod output;
pub mod phasor;
pub mod relay;
pub mod scenario;
pub mod waveform;

pub use error::{Error, Result};
