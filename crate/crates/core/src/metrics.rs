//! Virality, retention and growth coefficients.
//!
//! Symbols, per period:
//! - `dU`   all users with any activity
//! - `dNU`  newly registered users
//! - `dAU`  active users (session time above threshold)
//! - `dNAU` new users who are also active
//! - `dIU`  new active users who came through an invitation
//!
//! ```text
//! local K-factor        = dIU / dAU
//! conversion  IP_i      = IU / i
//! invites per user      = i / U
//! global K-factor       = (i / U) * (IU / i)
//! K-retention           = (dU  - dNU)  / dU_prev
//! K-retention (active)  = (dAU - dNAU) / dAU_prev
//! K-growth (flow)       = (dAU - dNAU + dIU) / dAU_prev
//! K-growth (sum)        = K-factor + K-retention (active)
//! K-growth (ratio)      = dAU / dAU_prev        (only when dNAU == dIU)
//! ```
//!
//! Every function returns `None` where its denominator is zero. The flow
//! form is the authoritative K-growth; the sum form divides dIU by the
//! current audience instead of the previous one and so only approximates it.

use serde::{Deserialize, Serialize};

use crate::model::{PeriodAggregate, PeriodKey};
use crate::ratio::Ratio;

pub fn local_k_factor(invited_active: u64, active: u64) -> Option<Ratio> {
    Ratio::of(invited_active, active)
}

/// Accepted invitations over invitations sent. May exceed 1 since a single
/// open link can bring in several users.
pub fn conversion_rate(invited_users: u64, invitations: u64) -> Option<Ratio> {
    Ratio::of(invited_users, invitations)
}

pub fn invites_per_user(invitations: u64, users: u64) -> Option<Ratio> {
    Ratio::of(invitations, users)
}

pub fn global_k_factor(invites_per_user: Ratio, conversion: Ratio) -> Ratio {
    invites_per_user * conversion
}

pub fn local_k_retention(users: u64, new_users: u64, prev_users: u64) -> Option<Ratio> {
    debug_assert!(new_users <= users);
    Ratio::of(users.saturating_sub(new_users), prev_users)
}

pub fn local_k_retention_active(active: u64, new_active: u64, prev_active: u64) -> Option<Ratio> {
    local_k_retention(active, new_active, prev_active)
}

pub fn k_growth_flow(
    active: u64,
    new_active: u64,
    invited_active: u64,
    prev_active: u64,
) -> Option<Ratio> {
    debug_assert!(new_active <= active && invited_active <= new_active);
    Ratio::of(
        active.saturating_sub(new_active) + invited_active,
        prev_active,
    )
}

pub fn k_growth_sum(k_factor: Ratio, k_retention: Ratio) -> Ratio {
    k_factor + k_retention
}

/// `dAU / dAU_prev`. Equals [`k_growth_flow`] when every new active user was
/// invited.
pub fn k_growth_ratio(active: u64, prev_active: u64) -> Option<Ratio> {
    Ratio::of(active, prev_active)
}

/// Additive split of the flow K-growth over the previous audience.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowthDecomposition {
    pub retention_part: Ratio,
    pub viral_part: Ratio,
}

impl GrowthDecomposition {
    pub fn total(&self) -> Ratio {
        self.retention_part + self.viral_part
    }
}

pub fn decompose_growth(
    active: u64,
    new_active: u64,
    invited_active: u64,
    prev_active: u64,
) -> Option<GrowthDecomposition> {
    Some(GrowthDecomposition {
        retention_part: Ratio::of(active.saturating_sub(new_active), prev_active)?,
        viral_part: Ratio::of(invited_active, prev_active)?,
    })
}

/// The three active-audience counts the growth coefficients need. This is
/// all a published weekly table provides, and all a simulated trace has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveCounts {
    #[serde(rename = "xAU")]
    pub active: u64,
    #[serde(rename = "xNU")]
    pub new_active: u64,
    #[serde(rename = "xIU")]
    pub invited_active: u64,
}

impl From<&PeriodAggregate> for ActiveCounts {
    fn from(a: &PeriodAggregate) -> Self {
        ActiveCounts {
            active: a.active_users,
            new_active: a.new_active_users,
            invited_active: a.invited_active_users,
        }
    }
}

/// Derived coefficients for one period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsRow {
    pub period: PeriodKey,
    pub counts: ActiveCounts,
    pub k_factor: Option<Ratio>,
    pub conversion_ipi: Option<Ratio>,
    pub invites_per_user: Option<Ratio>,
    pub invites_per_spreading_user: Option<Ratio>,
    pub k_retention: Option<Ratio>,
    pub k_retention_active: Option<Ratio>,
    pub k_growth_flow: Option<Ratio>,
    pub k_growth_sum: Option<Ratio>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoefficientSeries {
    pub rows: Vec<MetricsRow>,
    pub global_k_factor: Option<Ratio>,
    pub global_conversion: Option<Ratio>,
    pub global_invites_per_user: Option<Ratio>,
}

impl CoefficientSeries {
    /// K-growth values of every row that has one, in period order.
    pub fn k_growth_values(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.k_growth_flow)
            .map(|r| r.to_f64())
            .collect()
    }
}

fn row(
    period: PeriodKey,
    counts: ActiveCounts,
    prev: Option<ActiveCounts>,
    full: Option<(&PeriodAggregate, Option<&PeriodAggregate>)>,
) -> MetricsRow {
    let k_factor = local_k_factor(counts.invited_active, counts.active);
    let k_retention_active =
        prev.and_then(|p| local_k_retention_active(counts.active, counts.new_active, p.active));
    let k_growth_flow = prev.and_then(|p| {
        k_growth_flow(
            counts.active,
            counts.new_active,
            counts.invited_active,
            p.active,
        )
    });
    let k_growth_sum = match (k_factor, k_retention_active) {
        (Some(k), Some(r)) => Some(k_growth_sum(k, r)),
        _ => None,
    };

    let mut row = MetricsRow {
        period,
        counts,
        k_factor,
        conversion_ipi: None,
        invites_per_user: None,
        invites_per_spreading_user: None,
        k_retention: None,
        k_retention_active,
        k_growth_flow,
        k_growth_sum,
    };
    if let Some((agg, prev_agg)) = full {
        row.conversion_ipi = conversion_rate(agg.invited_registrations(), agg.invitations());
        row.invites_per_user = invites_per_user(agg.invitations(), agg.cumulative_users);
        row.invites_per_spreading_user = invites_per_user(agg.invites_sent, agg.spreading_users);
        row.k_retention =
            prev_agg.and_then(|p| local_k_retention(agg.users, agg.new_users, p.users));
    }
    row
}

/// Coefficients for each period of a gap-free, ordered aggregate sequence,
/// plus whole-span global coefficients.
pub fn compute_series(aggregates: &[PeriodAggregate]) -> CoefficientSeries {
    debug_assert!(aggregates
        .windows(2)
        .all(|w| w[0].period.successor() == w[1].period));
    let rows = aggregates
        .iter()
        .enumerate()
        .map(|(i, agg)| {
            let prev = i.checked_sub(1).map(|j| &aggregates[j]);
            row(
                agg.period,
                agg.into(),
                prev.map(ActiveCounts::from),
                Some((agg, prev)),
            )
        })
        .collect();

    let invitations: u64 = aggregates.iter().map(PeriodAggregate::invitations).sum();
    let invited: u64 = aggregates
        .iter()
        .map(PeriodAggregate::invited_registrations)
        .sum();
    let users = aggregates.last().map_or(0, |a| a.cumulative_users);
    let global_conversion = conversion_rate(invited, invitations);
    let global_invites_per_user = invites_per_user(invitations, users);
    let global_k_factor = match (global_invites_per_user, global_conversion) {
        (Some(a), Some(c)) => Some(global_k_factor(a, c)),
        _ => None,
    };
    CoefficientSeries {
        rows,
        global_k_factor,
        global_conversion,
        global_invites_per_user,
    }
}

/// Coefficients from active-audience counts alone. Fields that need the
/// full aggregate (all-user retention, invitation ratios, globals) are
/// absent.
pub fn compute_active_series(periods: &[(PeriodKey, ActiveCounts)]) -> CoefficientSeries {
    let rows = periods
        .iter()
        .enumerate()
        .map(|(i, &(period, counts))| {
            let prev = i.checked_sub(1).map(|j| periods[j].1);
            row(period, counts, prev, None)
        })
        .collect();
    CoefficientSeries {
        rows,
        ..Default::default()
    }
}
