//! Random event-log generator and a brute-force oracle that recomputes every
//! aggregate and coefficient by direct enumeration over users and events.
//!
//! The oracle shares nothing with the library beyond the `Ratio` value type
//! used to compare results.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Utc};
use kfactor_core::ingest::{bucketize, build_registry, parse_events, InputFormat, ParseOptions};
use kfactor_core::metrics::{compute_series, CoefficientSeries};
use kfactor_core::{Granularity, PeriodAggregate, Ratio};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub enum RawKind {
    Register {
        channel: &'static str,
        invite_id: Option<String>,
        link_id: Option<String>,
    },
    Session(u64),
    Invite(String),
    Publish(String),
}

#[derive(Debug, Clone)]
pub struct RawEvent {
    pub ts: i64,
    pub user: String,
    pub kind: RawKind,
}

#[derive(Debug, Clone)]
pub struct RandomLog {
    pub events: Vec<RawEvent>,
    pub granularity: Granularity,
    pub threshold: u64,
    pub format: InputFormat,
}

fn origin() -> i64 {
    Utc.with_ymd_and_hms(2014, 5, 5, 0, 0, 0)
        .unwrap()
        .timestamp()
}

/// Up to 50 users over at most four periods. Registrations land on even
/// seconds and all other activity on odd seconds, so an invitation and a
/// registration never share a timestamp.
pub fn random_log<R: Rng>(rng: &mut R) -> RandomLog {
    let granularity = if rng.gen_bool(0.7) {
        Granularity::Week
    } else {
        Granularity::Day
    };
    let span_days = match granularity {
        Granularity::Week => 7 * rng.gen_range(1..=4),
        Granularity::Day => rng.gen_range(1..=4),
    };
    let span = span_days * 86_400;
    let n_users = rng.gen_range(1..=50);
    let t0 = origin();

    let mut regs: Vec<i64> = (0..n_users)
        .map(|_| t0 + 2 * rng.gen_range(0..span / 2))
        .collect();
    regs.sort();
    let users: Vec<String> = (0..n_users).map(|i| format!("u{i}")).collect();

    let mut events = Vec::new();
    let mut links: Vec<String> = Vec::new();
    let mut invite_seq = 0;
    let odd_after = |rng: &mut R, after: i64, before: i64| -> Option<i64> {
        let lo = after + 1;
        let hi = before - 1;
        (lo <= hi).then(|| {
            let x = rng.gen_range(lo..=hi);
            if x % 2 == 0 {
                if x < hi {
                    x + 1
                } else {
                    x - 1
                }
            } else {
                x
            }
        })
    };

    for i in 0..n_users {
        let reg = regs[i];
        let choice = rng.gen_range(0..10);
        let (channel, invite_id, link_id) = match choice {
            0..=2 => ("organic", None, None),
            3..=4 => ("paid", None, None),
            5..=7 => {
                // direct invite from an earlier user, sometimes dangling
                let earlier: Vec<usize> = (0..i).filter(|&j| regs[j] + 2 < reg).collect();
                if !earlier.is_empty() && rng.gen_bool(0.85) {
                    let j = *earlier.choose(rng).unwrap();
                    let ts = odd_after(rng, regs[j], reg).unwrap();
                    invite_seq += 1;
                    let id = format!("i{invite_seq}");
                    events.push(RawEvent {
                        ts,
                        user: users[j].clone(),
                        kind: RawKind::Invite(id.clone()),
                    });
                    ("invite_direct", Some(id), None)
                } else {
                    ("invite_direct", Some(format!("ghost{i}")), None)
                }
            }
            _ => {
                if !links.is_empty() && rng.gen_bool(0.8) {
                    (
                        "invite_open",
                        None,
                        Some(links.choose(rng).unwrap().clone()),
                    )
                } else {
                    (
                        "invite_open",
                        None,
                        Some(format!("L{}", rng.gen_range(0..6))),
                    )
                }
            }
        };
        events.push(RawEvent {
            ts: reg,
            user: users[i].clone(),
            kind: RawKind::Register {
                channel,
                invite_id,
                link_id,
            },
        });

        let end = t0 + span;
        for _ in 0..rng.gen_range(0..4) {
            if let Some(ts) = odd_after(rng, reg, end) {
                let d = match rng.gen_range(0..6) {
                    0 => 300,
                    1 => 301,
                    _ => rng.gen_range(0..700),
                };
                events.push(RawEvent {
                    ts,
                    user: users[i].clone(),
                    kind: RawKind::Session(d),
                });
            }
        }
        if rng.gen_bool(0.3) {
            if let Some(ts) = odd_after(rng, reg, end) {
                let id = format!("L{}", rng.gen_range(0..6));
                links.push(id.clone());
                events.push(RawEvent {
                    ts,
                    user: users[i].clone(),
                    kind: RawKind::Publish(id),
                });
            }
        }
        if rng.gen_bool(0.2) {
            if let Some(ts) = odd_after(rng, reg, end) {
                invite_seq += 1;
                events.push(RawEvent {
                    ts,
                    user: users[i].clone(),
                    kind: RawKind::Invite(format!("i{invite_seq}")),
                });
            }
        }
    }
    events.shuffle(rng);

    RandomLog {
        events,
        granularity,
        threshold: *[300u64, 300, 120, 450].choose(rng).unwrap(),
        format: if rng.gen_bool(0.5) {
            InputFormat::Jsonl
        } else {
            InputFormat::Csv
        },
    }
}

fn rfc3339(ts: i64) -> String {
    Utc.timestamp_opt(ts, 0).unwrap().to_rfc3339()
}

pub fn render(log: &RandomLog) -> String {
    let mut out = String::new();
    match log.format {
        InputFormat::Jsonl => {
            for e in &log.events {
                let mut obj = serde_json::json!({"ts": rfc3339(e.ts), "user": e.user});
                match &e.kind {
                    RawKind::Register {
                        channel,
                        invite_id,
                        link_id,
                    } => {
                        obj["kind"] = "register".into();
                        obj["channel"] = (*channel).into();
                        if let Some(i) = invite_id {
                            obj["invite_id"] = i.as_str().into();
                        }
                        if let Some(l) = link_id {
                            obj["link_id"] = l.as_str().into();
                        }
                    }
                    RawKind::Session(d) => {
                        obj["kind"] = "session".into();
                        obj["duration_s"] = (*d).into();
                    }
                    RawKind::Invite(id) => {
                        obj["kind"] = "invite_direct".into();
                        obj["invite_id"] = id.as_str().into();
                    }
                    RawKind::Publish(id) => {
                        obj["kind"] = "link_publish".into();
                        obj["link_id"] = id.as_str().into();
                    }
                }
                out.push_str(&obj.to_string());
                out.push('\n');
            }
        }
        InputFormat::Csv => {
            out.push_str("ts,kind,user,duration_s,channel,inviter,invite_id,link_id\n");
            for e in &log.events {
                let ts = rfc3339(e.ts);
                let line = match &e.kind {
                    RawKind::Register {
                        channel,
                        invite_id,
                        link_id,
                    } => format!(
                        "{ts},register,{},,{channel},,{},{}",
                        e.user,
                        invite_id.as_deref().unwrap_or(""),
                        link_id.as_deref().unwrap_or("")
                    ),
                    RawKind::Session(d) => format!("{ts},session,{},{d},,,,", e.user),
                    RawKind::Invite(id) => format!("{ts},invite_direct,{},,,,{id},", e.user),
                    RawKind::Publish(id) => format!("{ts},link_publish,{},,,,,{id}", e.user),
                };
                out.push_str(&line);
                out.push('\n');
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleUser {
    pub reg: i64,
    pub channel: &'static str,
    pub inviter: Option<String>,
}

/// Channel and inviter of every user, from the attribution rules.
pub fn oracle_users(events: &[RawEvent]) -> BTreeMap<String, OracleUser> {
    let mut users = BTreeMap::new();
    for e in events {
        if let RawKind::Register {
            channel,
            invite_id,
            link_id,
        } = &e.kind
        {
            let reg_of = |u: &str| {
                events.iter().find_map(|x| match x.kind {
                    RawKind::Register { .. } if x.user == u => Some(x.ts),
                    _ => None,
                })
            };
            let (channel, inviter) = match *channel {
                "invite_direct" => {
                    let sender = events
                        .iter()
                        .filter(|x| {
                            matches!(&x.kind, RawKind::Invite(id) if Some(id) == invite_id.as_ref())
                                && x.ts < e.ts
                        })
                        .min_by_key(|x| x.ts)
                        .map(|x| x.user.clone());
                    match sender {
                        Some(s) => ("invite_direct", Some(s)),
                        None => ("organic", None),
                    }
                }
                "invite_open" => {
                    let publishers: BTreeSet<&str> = events
                        .iter()
                        .filter(|x| matches!(&x.kind, RawKind::Publish(id) if Some(id) == link_id.as_ref()))
                        .map(|x| x.user.as_str())
                        .collect();
                    let inviter = (publishers.len() == 1)
                        .then(|| publishers.into_iter().next().unwrap().to_owned())
                        .filter(|p| reg_of(p).is_some_and(|r| r < e.ts));
                    ("invite_open", inviter)
                }
                other => (other, None),
            };
            users.insert(
                e.user.clone(),
                OracleUser {
                    reg: e.ts,
                    channel,
                    inviter,
                },
            );
        }
    }
    users
}

fn period_start(ts: i64, g: Granularity) -> NaiveDate {
    let date = DateTime::<Utc>::from_timestamp(ts, 0).unwrap().date_naive();
    match g {
        Granularity::Day => date,
        Granularity::Week => {
            date - Duration::days(i64::from(date.weekday().num_days_from_monday()))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleCounts {
    pub start: Option<NaiveDate>,
    pub du: u64,
    pub dnu: u64,
    pub dau: u64,
    pub dnau: u64,
    pub diu: u64,
    pub invites: u64,
    pub spreaders: u64,
    pub links: u64,
    pub publishers: u64,
    pub joins_link: u64,
    pub accepted: u64,
    pub cumulative: u64,
}

pub fn oracle_aggregates(log: &RandomLog) -> Vec<OracleCounts> {
    let g = log.granularity;
    let users = oracle_users(&log.events);
    let Some(first) = log.events.iter().map(|e| period_start(e.ts, g)).min() else {
        return Vec::new();
    };
    let last = log
        .events
        .iter()
        .map(|e| period_start(e.ts, g))
        .max()
        .unwrap();
    let step = match g {
        Granularity::Day => 1,
        Granularity::Week => 7,
    };

    let mut out = Vec::new();
    let mut start = first;
    while start <= last {
        let in_p = |e: &&RawEvent| period_start(e.ts, g) == start;
        let events: Vec<&RawEvent> = log.events.iter().filter(in_p).collect();
        let mut c = OracleCounts {
            start: Some(start),
            ..Default::default()
        };
        for (u, rec) in &users {
            let mine: Vec<&&RawEvent> = events.iter().filter(|e| &e.user == u).collect();
            let any = !mine.is_empty();
            let registered_here = period_start(rec.reg, g) == start;
            let secs: u64 = mine
                .iter()
                .map(|e| {
                    if let RawKind::Session(d) = e.kind {
                        d
                    } else {
                        0
                    }
                })
                .sum();
            let active = secs > log.threshold;
            let invites = mine
                .iter()
                .filter(|e| matches!(e.kind, RawKind::Invite(_)))
                .count() as u64;
            let links = mine
                .iter()
                .filter(|e| matches!(e.kind, RawKind::Publish(_)))
                .count() as u64;
            c.du += u64::from(any);
            c.dnu += u64::from(registered_here);
            c.dau += u64::from(active);
            c.dnau += u64::from(registered_here && active);
            c.diu += u64::from(registered_here && active && rec.channel.starts_with("invite"));
            c.invites += invites;
            c.spreaders += u64::from(invites > 0);
            c.links += links;
            c.publishers += u64::from(links > 0);
            c.joins_link += u64::from(registered_here && rec.channel == "invite_open");
            c.accepted += u64::from(registered_here && rec.channel == "invite_direct");
        }
        c.cumulative = users
            .values()
            .filter(|r| period_start(r.reg, g) <= start)
            .count() as u64;
        out.push(c);
        start += Duration::days(step);
    }
    out
}

pub fn matches_aggregate(o: &OracleCounts, a: &PeriodAggregate) -> bool {
    Some(a.period.start()) == o.start
        && a.users == o.du
        && a.new_users == o.dnu
        && a.active_users == o.dau
        && a.new_active_users == o.dnau
        && a.invited_active_users == o.diu
        && a.invites_sent == o.invites
        && a.spreading_users == o.spreaders
        && a.links_published == o.links
        && a.link_publishers == o.publishers
        && a.joins_via_link == o.joins_link
        && a.invites_accepted == o.accepted
        && a.cumulative_users == o.cumulative
}

fn frac(n: u64, d: u64) -> Option<Ratio> {
    Ratio::of(n, d)
}

/// Checks every coefficient of `series` against direct formulas over the
/// oracle counts. Returns a description of the first mismatch.
pub fn check_series(oracle: &[OracleCounts], series: &CoefficientSeries) -> Result<(), String> {
    if oracle.len() != series.rows.len() {
        return Err(format!(
            "{} oracle periods vs {} rows",
            oracle.len(),
            series.rows.len()
        ));
    }
    for (i, (o, row)) in oracle.iter().zip(&series.rows).enumerate() {
        let prev = i.checked_sub(1).map(|j| &oracle[j]);
        let expect = [
            ("k_factor", frac(o.diu, o.dau), row.k_factor),
            (
                "conversion_ipi",
                frac(o.accepted + o.joins_link, o.invites + o.links),
                row.conversion_ipi,
            ),
            (
                "invites_per_user",
                frac(o.invites + o.links, o.cumulative),
                row.invites_per_user,
            ),
            (
                "invites_per_spreading_user",
                frac(o.invites, o.spreaders),
                row.invites_per_spreading_user,
            ),
            (
                "k_retention",
                prev.and_then(|p| frac(o.du - o.dnu, p.du)),
                row.k_retention,
            ),
            (
                "k_retention_active",
                prev.and_then(|p| frac(o.dau - o.dnau, p.dau)),
                row.k_retention_active,
            ),
            (
                "k_growth_flow",
                prev.and_then(|p| frac(o.dau - o.dnau + o.diu, p.dau)),
                row.k_growth_flow,
            ),
            (
                "k_growth_sum",
                prev.filter(|p| p.dau > 0 && o.dau > 0)
                    .and_then(|p| frac(o.diu * p.dau + (o.dau - o.dnau) * o.dau, o.dau * p.dau)),
                row.k_growth_sum,
            ),
        ];
        for (name, want, got) in expect {
            if want != got {
                return Err(format!(
                    "period {i} {name}: oracle {want:?} vs engine {got:?}"
                ));
            }
        }
    }
    let invitations: u64 = oracle.iter().map(|o| o.invites + o.links).sum();
    let invited: u64 = oracle.iter().map(|o| o.accepted + o.joins_link).sum();
    let users = oracle.last().map_or(0, |o| o.cumulative);
    let global = if invitations > 0 && users > 0 {
        frac(invited, users)
    } else {
        None
    };
    if series.global_k_factor != global {
        return Err(format!(
            "global K-factor: oracle {global:?} vs engine {:?}",
            series.global_k_factor
        ));
    }
    Ok(())
}

/// Runs the full pipeline on a random log and compares it with the oracle.
pub fn check_random_log(log: &RandomLog) -> Result<(), String> {
    let text = render(log);
    let parsed = parse_events(text.as_bytes(), log.format, ParseOptions { strict: true })
        .map_err(|r| format!("rejected generated log:\n{r}"))?;
    let (registry, _) = build_registry(&parsed.log);

    let users = oracle_users(&log.events);
    for (id, want) in &users {
        let got = registry
            .get(id)
            .ok_or_else(|| format!("user {id} missing"))?;
        if got.channel.as_str() != want.channel || got.inviter_id != want.inviter {
            return Err(format!("user {id}: oracle {want:?} vs engine {got:?}"));
        }
    }

    let aggs = bucketize(&parsed.log, &registry, log.granularity, log.threshold)
        .map_err(|e| e.to_string())?;
    let oracle = oracle_aggregates(log);
    if aggs.len() != oracle.len() {
        return Err(format!(
            "{} aggregates vs {} oracle periods",
            aggs.len(),
            oracle.len()
        ));
    }
    for (o, a) in oracle.iter().zip(&aggs) {
        if !matches_aggregate(o, a) {
            return Err(format!("aggregate mismatch:\noracle {o:?}\nengine {a:?}"));
        }
        a.check_invariants()?;
    }
    check_series(&oracle, &compute_series(&aggs))
}
