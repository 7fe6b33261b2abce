//! Hierarchical correlation-filter visual tracking.
//!
//! Per-layer correlation filters are learned in the Fourier domain over a
//! feature pyramid, their responses are fused deepest-first into a
//! translation estimate, and a conservatively updated long-term filter
//! scores region proposals for failure recovery and scale estimation.
//!
//! The main entry points are [`tracker::Tracker`] for running the pipeline
//! frame by frame and [`eval`] for sequence I/O and benchmark metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corrfilter;
pub mod error;
pub mod eval;
mod fft;
pub mod features;
pub mod fusion;
pub mod longterm;
pub mod proposals;
pub mod tensor;
pub mod tracker;

pub use error::{Error, Result};
pub use proposals::BoundingBox;
pub use tensor::{FeatureMap, Image};
