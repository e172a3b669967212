//! Wrist accelerometry step counting, open activity summaries and
//! survey-weighted survival analysis.
//!
//! The crate is organised as a pipeline:
//!
//! * [`ingest`] reads raw triaxial recordings and minute/covariate/mortality tables,
//! * [`dsp`] holds the shared signal kernels,
//! * [`detectors`] turns vector magnitude into per-second step counts,
//! * [`summaries`] computes Activity Counts and MIMS per epoch,
//! * [`validity`] applies the wear rules and aggregates minutes into days and subjects,
//! * [`stats`] and [`survival`] run the population-level analysis,
//! * [`simulate`] generates ground-truth data for all of the above.

pub mod detectors;
pub mod dsp;
pub mod error;
pub mod ingest;
pub mod model;
pub mod simulate;
pub mod stats;
pub mod summaries;
pub mod survival;
pub mod validity;

pub use error::{Error, Result};
