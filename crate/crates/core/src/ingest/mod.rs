//! Event-log ingestion: parsing and validation, channel attribution, and
//! per-period aggregation.

mod bucket;
mod parse;
mod registry;

pub use bucket::{bucketize, write_aggregates_csv, DEFAULT_ACTIVE_THRESHOLD_S};
pub use parse::{
    parse_events, EventLog, InputFormat, Issue, ParseOptions, Parsed, ValidationReport,
};
pub use registry::{build_registry, Registry};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("active threshold must be positive")]
    ZeroThreshold,
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
