use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the matching pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("input contains no subjects")]
    NoSubjects,

    #[error("treatment column {column:?} has non-binary value {value:?} in row {row}")]
    NonBinaryTreatment {
        column: String,
        value: String,
        row: usize,
    },

    #[error("duplicate subject id {id:?}")]
    DuplicateId { id: String },

    #[error("column {column:?} not found in input")]
    MissingColumn { column: String },

    #[error("input must contain at least one treated and one control subject")]
    OneGroupEmpty,

    #[error("covariate {column:?} is entirely missing; cannot impute")]
    AllMissing { column: String },

    #[error(
        "logistic fit did not converge in {iterations} iterations; \
         try a positive ridge penalty"
    )]
    NoConvergence { iterations: usize },

    #[error("propensity score {value} outside the open interval (0, 1)")]
    ScoreOutOfRange { value: f64 },

    #[error("distance computation needs at least 2 subjects, got {n}")]
    TooFewSubjects { n: usize },

    #[error("node supplies must sum to zero, got {total}")]
    UnbalancedSupplies { total: i64 },

    #[error("arc {index} has negative capacity {capacity}")]
    NegativeCapacity { index: usize, capacity: i64 },

    #[error(
        "scaled cost {scaled:.3e} exceeds the representable range; \
         use a smaller cost scale"
    )]
    CostOverflow { scaled: f64 },

    #[error(
        "stratum {stratum}: {controls} controls cannot supply {needed} \
         matches at ratio 1:{ratio}"
    )]
    RatioInfeasible {
        stratum: usize,
        controls: usize,
        needed: usize,
        ratio: usize,
    },

    #[error("stratum {stratum} has more treated than controls and the common-support policy is `fail`")]
    CommonSupportFail { stratum: usize },

    #[error("trimming to common support would leave the {group} group empty")]
    TrimEmpties { group: String },

    #[error("column {column:?} is not discrete; interactions need binary or nominal columns")]
    NonDiscreteColumn { column: String },

    #[error("the match contains no matched sets")]
    EmptyMatch,

    #[error("cannot build QQ data from an empty p-value list")]
    EmptyPValues,

    #[error("distance file is missing an entry for pair ({treated}, {control})")]
    MissingDistance { treated: String, control: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
