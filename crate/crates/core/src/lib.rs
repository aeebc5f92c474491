//! Algorithmic core for grading diabetic sensorimotor polyneuropathy
//! severity from gait EMG and ground reaction force recordings.
//!
//! Everything here is pure computation over in-memory data and builds
//! without `std`; file formats, the CLI and thread pools live in the
//! companion `dspn` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

extern crate alloc;

pub mod dsp;
pub mod error;
pub mod features;
pub mod learn;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod segmentation;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
