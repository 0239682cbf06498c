use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use crate::model::{period_of, Action, Channel, Granularity, PeriodAggregate, PeriodKey};

use super::parse::EventLog;
use super::registry::Registry;
use super::IngestError;

/// A user is active in a period when their summed session time is strictly
/// greater than this many seconds.
pub const DEFAULT_ACTIVE_THRESHOLD_S: u64 = 300;

#[derive(Default)]
struct Scratch<'a> {
    seen: HashSet<&'a str>,
    new_users: Vec<&'a str>,
    session_s: HashMap<&'a str, u64>,
    invites_sent: u64,
    spreaders: HashSet<&'a str>,
    links_published: u64,
    link_publishers: HashSet<&'a str>,
}

/// Aggregates a validated log into one [`PeriodAggregate`] per period, from
/// the first event's period through the last, zero-filling empty periods.
///
/// Each session is booked wholly in the period of its timestamp.
pub fn bucketize(
    log: &EventLog,
    registry: &Registry,
    granularity: Granularity,
    active_threshold_s: u64,
) -> Result<Vec<PeriodAggregate>, IngestError> {
    if active_threshold_s == 0 {
        return Err(IngestError::ZeroThreshold);
    }
    let mut periods: BTreeMap<PeriodKey, Scratch> = BTreeMap::new();
    for event in log.events() {
        let scratch = periods.entry(period_of(event.ts, granularity)).or_default();
        let user = event.user_id.as_str();
        scratch.seen.insert(user);
        match &event.action {
            Action::Register { .. } => scratch.new_users.push(user),
            Action::Session { duration_s } => {
                *scratch.session_s.entry(user).or_default() += duration_s
            }
            Action::InviteDirect { .. } => {
                scratch.invites_sent += 1;
                scratch.spreaders.insert(user);
            }
            Action::LinkPublish { .. } => {
                scratch.links_published += 1;
                scratch.link_publishers.insert(user);
            }
        }
    }

    let (Some(&first), Some(&last)) = (periods.keys().next(), periods.keys().next_back()) else {
        return Ok(Vec::new());
    };

    let mut out = Vec::new();
    let mut cumulative = 0;
    let mut period = first;
    loop {
        let mut agg = PeriodAggregate::empty(period);
        if let Some(s) = periods.get(&period) {
            let is_active = |u: &str| {
                s.session_s
                    .get(u)
                    .is_some_and(|&secs| secs > active_threshold_s)
            };
            let channel_of = |u: &str| registry.get(u).map_or(Channel::Organic, |r| r.channel);

            agg.users = s.seen.len() as u64;
            agg.new_users = s.new_users.len() as u64;
            agg.active_users = s.session_s.keys().filter(|u| is_active(u)).count() as u64;
            let new_active: Vec<&str> = s
                .new_users
                .iter()
                .copied()
                .filter(|u| is_active(u))
                .collect();
            agg.new_active_users = new_active.len() as u64;
            agg.invited_active_users = new_active
                .iter()
                .filter(|u| channel_of(u).is_invited())
                .count() as u64;
            agg.invites_sent = s.invites_sent;
            agg.spreading_users = s.spreaders.len() as u64;
            agg.links_published = s.links_published;
            agg.link_publishers = s.link_publishers.len() as u64;
            for u in &s.new_users {
                match channel_of(u) {
                    Channel::InvitedDirect => agg.invites_accepted += 1,
                    Channel::InvitedOpen => agg.joins_via_link += 1,
                    _ => {}
                }
            }
        }
        cumulative += agg.new_users;
        agg.cumulative_users = cumulative;
        out.push(agg);
        if period == last {
            break;
        }
        period = period.successor();
    }
    Ok(out)
}

/// Writes aggregates as CSV, one row per period, columns named after the
/// aggregate fields.
pub fn write_aggregates_csv<W: Write>(
    out: W,
    aggregates: &[PeriodAggregate],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    if aggregates.is_empty() {
        w.write_record([
            "period",
            "dU",
            "dNU",
            "dAU",
            "dNAU",
            "dIU",
            "invites_sent",
            "spreading_users",
            "links_published",
            "link_publishers",
            "joins_via_link",
            "invites_accepted",
            "cumulative_users",
        ])?;
    }
    for agg in aggregates {
        w.serialize(agg)?;
    }
    w.flush()?;
    Ok(())
}
