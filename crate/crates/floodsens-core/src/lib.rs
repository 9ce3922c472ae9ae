//! Flood-model sensitivity toolkit.
//!
//! The crate covers the full pipeline for ranking uncertain terrain inputs
//! by their influence on simulated flood depths:
//!
//! 1. [`ensemble`] builds a factorial database of elevation models crossing
//!    feature-detail level, per-cell measurement noise and grid resolution.
//! 2. [`solver`] runs each model through a well-balanced finite-volume
//!    shallow-water scheme and records the maximal water depth per cell.
//! 3. [`campaign`] orchestrates the Monte-Carlo simulation batch with a
//!    resumable on-disk store and convergence monitoring.
//! 4. [`gsa`] turns the result database into first-order variance-based
//!    sensitivity indices, bootstrap confidence intervals and sensitivity
//!    maps.
//!
//! [`raster`] supplies the shared grid container and its text format;
//! [`fixture`] generates a synthetic urban valley so the pipeline can run
//! without proprietary survey data; [`config`] holds the single-file
//! configuration that drives all stages.

pub mod campaign;
pub mod config;
pub mod ensemble;
pub mod fixture;
pub mod gsa;
pub mod probe;
pub mod raster;
pub mod solver;

pub use probe::{Probe, ProbeSet};
pub use raster::{Raster, RasterHeader};
