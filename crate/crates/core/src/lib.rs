//! Core library of the longitudinal trajectory pipeline: schema-driven
//! ingestion of raw recordings, leader identification and extraction into a
//! unified 13-label format, two-stage cleaning, per-timestamp performance
//! metrics, and dataset-level analysis.
//!
//! The heavy inner loops (per-scene extraction, per-trajectory cleaning and
//! metrics) run data-parallel on rayon by default; building with
//! `--no-default-features` swaps in sequential fallbacks with bit-identical
//! results.

pub mod analysis;
pub mod clean;
pub mod csvio;
pub mod error;
pub mod extract;
pub mod ingest;
pub mod kinematics;
pub mod metrics;
pub mod parallel;
pub mod record;

pub use error::{Error, Result};
pub use record::{Dataset, Label, LongitudinalTrajectory, UnifiedRecord};
