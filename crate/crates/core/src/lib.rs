//! Reconstruction of curative prostate-cancer treatment events and
//! biochemical recurrence (BCR) from longitudinal PSA measurements.
//!
//! Registry extracts often record PSA lab values reliably while the
//! surgery/radiotherapy record that explains a sudden PSA collapse is
//! missing. This crate provides the building blocks to repair and then
//! exploit such data:
//!
//! - [`timeline`]: per-patient event model (PSA draws, treatments) and
//!   calendar-day arithmetic used by every rule.
//! - [`drops`]: detection of significant PSA drops (peak → nadir).
//! - [`imputation`]: turning significant drops into imputed RP/RT
//!   treatment events where the record is silent.
//! - [`relapse`]: guideline-style relapse date rules after RP/RT, from
//!   PSA thresholds and from secondary-treatment patterns.
//! - [`bcr`]: consolidation of the individual relapse rules into a single
//!   BCR status/date per patient.
//! - [`synth`]: deterministic synthetic cohort generator with ground
//!   truth, used to validate the detectors end to end.
//! - [`eval`]: evaluation harness (treatment recovery and BCR accuracy
//!   metrics, time-to-relapse histograms).
//! - [`io`]: plain-CSV cohort reading/writing with stable, byte-exact
//!   output.
//!
//! All rule thresholds and duration constants live in [`config::RuleConfig`]
//! so they can be overridden for sensitivity analysis.

pub mod bcr;
pub mod config;
pub mod drops;
pub mod error;
pub mod eval;
pub mod imputation;
pub mod io;
pub mod relapse;
pub mod synth;
pub mod timeline;

pub use config::RuleConfig;
pub use error::{Error, Result};
