//! Continuous spontaneous localization applied to a gas proportional counter.
//!
//! The crate follows one detection event from a two-branch superposition to a
//! classical outcome. [`sse`] is the bare stochastic equation for a single
//! system, [`detector`] turns counter geometry into an avalanche schedule, and
//! [`collapse`] drives the click amplitude through that schedule.
//! [`ensemble`] repeats runs and aggregates, [`config`] and [`output`] cover
//! the file formats.

pub mod collapse;
pub mod config;
pub mod detector;
pub mod ensemble;
pub mod error;
pub mod noise;
pub mod output;
pub mod sse;

pub use error::{CslError, Result};
