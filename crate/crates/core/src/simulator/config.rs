use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{measure_k_growth, SimError, SimParams, SimTrace};
use crate::ratio::Ratio;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] SimError),
    #[error("invalid parameter `paid_schedule`: period {0} listed twice")]
    DuplicatePaid(u64),
}

/// Simulation config as written on disk (TOML).
///
/// ```toml
/// k_viral = 0.2
/// r_retention = 0.9
/// market_size = 1000000
/// initial_active = 100
/// horizon = 10
/// organic_per_period = 0
/// paid_schedule = [[0, 100], [5, 50]]
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub k_viral: f64,
    pub r_retention: f64,
    pub market_size: u64,
    pub initial_active: u64,
    pub horizon: u64,
    #[serde(default)]
    pub organic_per_period: u64,
    #[serde(default)]
    pub paid_schedule: Vec<(u64, u64)>,
}

impl TryFrom<SimConfig> for SimParams {
    type Error = ConfigError;

    fn try_from(c: SimConfig) -> Result<Self, Self::Error> {
        let mut paid_schedule = std::collections::BTreeMap::new();
        for (t, count) in c.paid_schedule {
            if paid_schedule.insert(t, count).is_some() {
                return Err(ConfigError::DuplicatePaid(t));
            }
        }
        let params = SimParams {
            k_viral: c.k_viral,
            r_retention: c.r_retention,
            market_size: c.market_size,
            paid_schedule,
            organic_per_period: c.organic_per_period,
            initial_active: c.initial_active,
            horizon: c.horizon,
        };
        params.validate()?;
        Ok(params)
    }
}

pub fn load_params(text: &str) -> Result<SimParams, ConfigError> {
    let config: SimConfig = toml::from_str(text)?;
    config.try_into()
}

#[derive(Serialize)]
struct TraceRow {
    t: u64,
    active: u64,
    new: u64,
    invited: u64,
    cumulative: u64,
    k_growth: Option<Ratio>,
}

fn trace_rows(trace: &SimTrace) -> Vec<TraceRow> {
    let growth = std::iter::once(None).chain(measure_k_growth(trace));
    trace
        .states
        .iter()
        .zip(growth)
        .map(|(s, k)| TraceRow {
            t: s.t,
            active: s.active,
            new: s.new_this_period,
            invited: s.invited_this_period,
            cumulative: s.cumulative_acquired,
            k_growth: k,
        })
        .collect()
}

/// `t,active,new,invited,cumulative,k_growth`; `k_growth` is blank where
/// there is no previous audience.
pub fn write_trace_csv<W: Write>(out: W, trace: &SimTrace) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace_rows(trace) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_json<W: Write>(out: W, trace: &SimTrace) -> Result<(), serde_json::Error> {
    serde_json::to_writer_pretty(out, &trace_rows(trace))
}
