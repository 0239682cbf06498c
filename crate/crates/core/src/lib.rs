//! Growth accounting for freemium products.
//!
//! Turns raw user event logs into per-period virality, retention and growth
//! coefficients (K-factor, K-retention, K-growth), and projects a user base
//! forward with a saturating viral simulator that feeds a launch/iterate
//! gate.
//!
//! Pipeline: [`ingest::parse_events`] → [`ingest::build_registry`] →
//! [`ingest::bucketize`] → [`metrics::compute_series`] → [`report`].

pub mod ingest;
pub mod metrics;
pub mod model;
pub mod ratio;
pub mod report;
pub mod simulator;

pub use model::{period_of, Channel, Event, Granularity, PeriodAggregate, PeriodKey, UserRecord};
pub use ratio::Ratio;
