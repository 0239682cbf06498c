//! Deterministic discrete-time simulation of a freemium user base.
//!
//! Each step retains a fraction of the active audience, adds viral
//! invitations damped by market saturation, and injects paid and organic
//! users, all capped by the addressable market:
//!
//! ```text
//! viral    = round(k * active * (1 - C / M))
//! inflow   = viral + paid(t) + organic          (capped at M - C)
//! active'  = round(r * active) + inflow
//! C'       = C + inflow
//! ```
//!
//! Rounding is half away from zero. Invitees are booked in the period
//! after the one whose audience invited them.

mod config;
mod gate;

pub use config::{load_params, write_trace_csv, write_trace_json, ConfigError, SimConfig};
pub use gate::{launch_gate, Decision, GateError, GateOutcome, DEFAULT_WINDOW};

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use serde::Serialize;
use thiserror::Error;

use crate::metrics::{compute_active_series, k_growth_flow, ActiveCounts, CoefficientSeries};
use crate::model::{Granularity, PeriodKey};
use crate::ratio::Ratio;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Invited activations per active user per period.
    pub k_viral: f64,
    /// Fraction of active users still active next period, in `[0, 1)`.
    pub r_retention: f64,
    pub market_size: u64,
    /// Purchased users injected by the step leaving period `t`.
    pub paid_schedule: BTreeMap<u64, u64>,
    pub organic_per_period: u64,
    pub initial_active: u64,
    pub horizon: u64,
}

impl SimParams {
    /// Parameters with no paid or organic inflow.
    pub fn viral(
        k_viral: f64,
        r_retention: f64,
        market_size: u64,
        initial_active: u64,
        horizon: u64,
    ) -> Self {
        SimParams {
            k_viral,
            r_retention,
            market_size,
            paid_schedule: BTreeMap::new(),
            organic_per_period: 0,
            initial_active,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |key, reason: &str| {
            Err(SimError::InvalidParam {
                key,
                reason: reason.to_owned(),
            })
        };
        if !(self.k_viral.is_finite() && self.k_viral >= 0.0) {
            return invalid("k_viral", "must be a finite number >= 0");
        }
        if !(0.0..1.0).contains(&self.r_retention) {
            return invalid("r_retention", "must lie in [0, 1)");
        }
        if self.market_size == 0 {
            return invalid("market_size", "must be positive");
        }
        if self.initial_active > self.market_size {
            return invalid("initial_active", "cannot exceed market_size");
        }
        if self.horizon == 0 {
            return invalid("horizon", "must be positive");
        }
        if self.paid_schedule.keys().any(|&t| t >= self.horizon) {
            return invalid("paid_schedule", "period indices must be below horizon");
        }
        Ok(())
    }

    fn paid(&self, t: u64) -> u64 {
        self.paid_schedule.get(&t).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimState {
    pub t: u64,
    pub active: u64,
    /// Users ever acquired, including the initial audience.
    pub cumulative_acquired: u64,
    pub new_this_period: u64,
    pub invited_this_period: u64,
}

impl SimState {
    pub fn initial(params: &SimParams) -> Self {
        SimState {
            t: 0,
            active: params.initial_active,
            cumulative_acquired: params.initial_active,
            new_this_period: params.initial_active,
            invited_this_period: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub states: Vec<SimState>,
}

/// Share of the market still unreached: `1 - cumulative / market_size`,
/// floored at zero.
pub fn saturation_factor(cumulative: u64, market_size: u64) -> f64 {
    if market_size == 0 {
        return 0.0;
    }
    (1.0 - cumulative as f64 / market_size as f64).max(0.0)
}

fn round_count(x: f64) -> u64 {
    x.round() as u64
}

pub fn step(state: &SimState, params: &SimParams) -> SimState {
    let c = state.cumulative_acquired;
    let mut room = params.market_size.saturating_sub(c);

    // Fill remaining room paid first, then organic, then viral; this is the
    // same as trimming viral first, organic second, paid last.
    let viral_raw = round_count(
        params.k_viral * state.active as f64 * saturation_factor(c, params.market_size),
    );
    let mut take = |want: u64| {
        let got = want.min(room);
        room -= got;
        got
    };
    let paid = take(params.paid(state.t));
    let organic = take(params.organic_per_period);
    let invited = take(viral_raw);
    let inflow = paid + organic + invited;

    SimState {
        t: state.t + 1,
        active: round_count(params.r_retention * state.active as f64) + inflow,
        cumulative_acquired: c + inflow,
        new_this_period: inflow,
        invited_this_period: invited,
    }
}

pub fn run(params: &SimParams) -> Result<SimTrace, SimError> {
    params.validate()?;
    let mut states = Vec::with_capacity(params.horizon as usize + 1);
    let mut state = SimState::initial(params);
    states.push(state);
    for _ in 0..params.horizon {
        state = step(&state, params);
        states.push(state);
    }
    Ok(SimTrace { states })
}

impl SimTrace {
    /// The trace as active-audience counts on consecutive synthetic days
    /// starting 2000-01-01, for the metrics engine.
    pub fn active_counts(&self) -> Vec<(PeriodKey, ActiveCounts)> {
        let origin = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
        self.states
            .iter()
            .map(|s| {
                let day = origin + Days::new(s.t);
                (
                    PeriodKey::from_start(day, Granularity::Day).expect("days always align"),
                    ActiveCounts {
                        active: s.active,
                        new_active: s.new_this_period,
                        invited_active: s.invited_this_period,
                    },
                )
            })
            .collect()
    }

    pub fn to_series(&self) -> CoefficientSeries {
        compute_active_series(&self.active_counts())
    }

    /// First period at which the whole market has been acquired.
    pub fn saturation_period(&self, market_size: u64) -> Option<u64> {
        self.states
            .iter()
            .find(|s| s.cumulative_acquired >= market_size)
            .map(|s| s.t)
    }
}

/// K-growth of each step, `(active - new + invited) / active_prev`; one
/// entry per state after the first, `None` where the previous audience
/// was empty.
pub fn measure_k_growth(trace: &SimTrace) -> Vec<Option<Ratio>> {
    trace
        .states
        .windows(2)
        .map(|w| {
            k_growth_flow(
                w[1].active,
                w[1].new_this_period,
                w[1].invited_this_period,
                w[0].active,
            )
        })
        .collect()
}
