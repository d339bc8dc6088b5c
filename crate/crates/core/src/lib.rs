//! ERP-speller classification with max-decision SVM training and optimized
//! score-based decision functions.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`dataset`]: the stimulus dataset, its text format, preprocessing and a
//!   synthetic generator.
//! - [`linsvm`]: dual coordinate descent for linear SVMs and the M-SVM.
//! - [`scoring`]: decision values, quartile zones and score profiles.
//! - [`scoreopt`]: exact selection of zone scores and stopping threshold.
//! - [`eval`]: test-time decision rules, accuracy, bitrate and ITR.
//! - [`pipeline`]: config-driven end-to-end runs and report files.
//! - [`selftest`]: the desk-scale acceptance suite.
//! - [`harness`]: per-subject table reproduction from user-supplied data.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod harness;
pub mod linsvm;
pub mod pipeline;
pub mod scoreopt;
pub mod scoring;
pub mod selftest;

pub use error::{Error, Result};
