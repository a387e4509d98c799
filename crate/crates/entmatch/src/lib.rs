//! Optimal variable-ratio matched sampling for observational studies.
//!
//! Treated subjects are matched to 1..K controls apiece, with the ratio
//! chosen per subject from the entire number (the inverse odds of the
//! propensity score). Subjects are stratified by score intervals so each
//! stratum matches at a fixed ratio, which makes near-fine balance
//! constraints expressible; each stratum is then solved exactly as a
//! min-cost network flow over rank-based Mahalanobis distances with a
//! propensity-caliper penalty. Balance diagnostics cover standardized
//! differences, stratified permutation p-values, effective sample size,
//! and QQ data against the uniform distribution.

pub mod diagnostics;
pub mod distance;
pub mod error;
pub mod ingest;
pub mod matcher;
pub mod netflow;
pub mod pipeline;
pub mod propensity;

pub use error::{Error, Result};
