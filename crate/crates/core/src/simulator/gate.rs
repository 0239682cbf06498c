use std::fmt;

use thiserror::Error;

/// Periods averaged by the gate unless told otherwise.
pub const DEFAULT_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Launch,
    Iterate,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Launch => "LAUNCH",
            Decision::Iterate => "ITERATE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOutcome {
    pub decision: Decision,
    pub mean: f64,
    /// Number of trailing values actually averaged.
    pub window: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GateError {
    #[error("no K-growth values to judge")]
    EmptySeries,
    #[error("window must be at least 1")]
    ZeroWindow,
}

/// Launch when the mean of the last `window` K-growth values reaches
/// `threshold` (inclusive); otherwise keep iterating on the product.
pub fn launch_gate(
    series: &[f64],
    window: usize,
    threshold: f64,
) -> Result<GateOutcome, GateError> {
    if window == 0 {
        return Err(GateError::ZeroWindow);
    }
    if series.is_empty() {
        return Err(GateError::EmptySeries);
    }
    let n = window.min(series.len());
    let tail = &series[series.len() - n..];
    let mean = tail.iter().sum::<f64>() / n as f64;
    let decision = if mean >= threshold {
        Decision::Launch
    } else {
        Decision::Iterate
    };
    Ok(GateOutcome {
        decision,
        mean,
        window: n,
    })
}
