//! Shared domain types and period (time-bucket) arithmetic.
//!
//! A "user" is always a registered user. Every timestamp is UTC with second
//! precision; weekly periods are ISO-8601 weeks anchored on Monday.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Days, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

/// How a user arrived at the product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "organic")]
    Organic,
    #[serde(rename = "paid")]
    Paid,
    /// Accepted a personal invitation sent by an existing user.
    #[serde(rename = "invite_direct")]
    InvitedDirect,
    /// Joined through a publicly posted invitation link.
    #[serde(rename = "invite_open")]
    InvitedOpen,
}

impl Channel {
    pub fn is_invited(self) -> bool {
        matches!(self, Channel::InvitedDirect | Channel::InvitedOpen)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Organic => "organic",
            Channel::Paid => "paid",
            Channel::InvitedDirect => "invite_direct",
            Channel::InvitedOpen => "invite_open",
        }
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "organic" => Ok(Channel::Organic),
            "paid" => Ok(Channel::Paid),
            "invite_direct" => Ok(Channel::InvitedDirect),
            "invite_open" => Ok(Channel::InvitedOpen),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Discriminant of an [`Action`], as it appears on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Register,
    Session,
    InviteDirect,
    LinkPublish,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Register => "register",
            EventKind::Session => "session",
            EventKind::InviteDirect => "invite_direct",
            EventKind::LinkPublish => "link_publish",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "register" => Ok(EventKind::Register),
            "session" => Ok(EventKind::Session),
            "invite_direct" => Ok(EventKind::InviteDirect),
            "link_publish" => Ok(EventKind::LinkPublish),
            other => Err(format!("unknown kind `{other}`")),
        }
    }
}

/// Kind-specific payload of an event. Each variant carries exactly the
/// conditional fields its kind allows, so a constructed `Action` always
/// satisfies the per-kind field rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Register {
        channel: Channel,
        inviter_id: Option<String>,
        invite_id: Option<String>,
        link_id: Option<String>,
    },
    Session {
        duration_s: u64,
    },
    InviteDirect {
        invite_id: String,
    },
    LinkPublish {
        link_id: String,
    },
}

impl Action {
    pub fn kind(&self) -> EventKind {
        match self {
            Action::Register { .. } => EventKind::Register,
            Action::Session { .. } => EventKind::Session,
            Action::InviteDirect { .. } => EventKind::InviteDirect,
            Action::LinkPublish { .. } => EventKind::LinkPublish,
        }
    }
}

/// One timestamped user action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub ts: DateTime<Utc>,
    pub user_id: String,
    pub action: Action,
}

impl Event {
    pub fn register(ts: DateTime<Utc>, user: &str, channel: Channel) -> Self {
        Event {
            ts,
            user_id: user.to_owned(),
            action: Action::Register {
                channel,
                inviter_id: None,
                invite_id: None,
                link_id: None,
            },
        }
    }

    /// Registration through a direct invitation `invite_id`.
    pub fn register_direct(ts: DateTime<Utc>, user: &str, invite_id: &str) -> Self {
        Event {
            ts,
            user_id: user.to_owned(),
            action: Action::Register {
                channel: Channel::InvitedDirect,
                inviter_id: None,
                invite_id: Some(invite_id.to_owned()),
                link_id: None,
            },
        }
    }

    /// Registration through the open link `link_id`.
    pub fn register_open(ts: DateTime<Utc>, user: &str, link_id: &str) -> Self {
        Event {
            ts,
            user_id: user.to_owned(),
            action: Action::Register {
                channel: Channel::InvitedOpen,
                inviter_id: None,
                invite_id: None,
                link_id: Some(link_id.to_owned()),
            },
        }
    }

    pub fn session(ts: DateTime<Utc>, user: &str, duration_s: u64) -> Self {
        Event {
            ts,
            user_id: user.to_owned(),
            action: Action::Session { duration_s },
        }
    }

    pub fn invite_direct(ts: DateTime<Utc>, user: &str, invite_id: &str) -> Self {
        Event {
            ts,
            user_id: user.to_owned(),
            action: Action::InviteDirect {
                invite_id: invite_id.to_owned(),
            },
        }
    }

    pub fn link_publish(ts: DateTime<Utc>, user: &str, link_id: &str) -> Self {
        Event {
            ts,
            user_id: user.to_owned(),
            action: Action::LinkPublish {
                link_id: link_id.to_owned(),
            },
        }
    }

    pub fn kind(&self) -> EventKind {
        self.action.kind()
    }
}

/// A registered user with a resolved acquisition channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserRecord {
    pub user_id: String,
    pub registered_at: DateTime<Utc>,
    pub channel: Channel,
    /// Set only for invited channels, and only when the inviter registered
    /// strictly before this user.
    pub inviter_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Day,
    Week,
}

impl Granularity {
    fn days(self) -> u64 {
        match self {
            Granularity::Day => 1,
            Granularity::Week => 7,
        }
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" => Ok(Granularity::Day),
            "week" => Ok(Granularity::Week),
            other => Err(format!("unknown granularity `{other}`")),
        }
    }
}

/// A calendar bucket: a single UTC day, or a Monday-to-Sunday week.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeriodKey {
    granularity: Granularity,
    start: NaiveDate,
}

impl PeriodKey {
    /// The period of `granularity` containing `date`.
    pub fn containing(date: NaiveDate, granularity: Granularity) -> Self {
        let start = match granularity {
            Granularity::Day => date,
            Granularity::Week => {
                let back = u64::from(date.weekday().num_days_from_monday());
                date - Days::new(back)
            }
        };
        PeriodKey { granularity, start }
    }

    /// Builds a key from its first day. Returns `None` when a weekly start
    /// is not a Monday.
    pub fn from_start(start: NaiveDate, granularity: Granularity) -> Option<Self> {
        let key = Self::containing(start, granularity);
        (key.start == start).then_some(key)
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    /// Last day of the period, inclusive.
    pub fn end(&self) -> NaiveDate {
        self.start + Days::new(self.granularity.days() - 1)
    }

    pub fn predecessor(&self) -> Self {
        PeriodKey {
            granularity: self.granularity,
            start: self.start - Days::new(self.granularity.days()),
        }
    }

    pub fn successor(&self) -> Self {
        PeriodKey {
            granularity: self.granularity,
            start: self.start + Days::new(self.granularity.days()),
        }
    }

    pub fn contains_date(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end()
    }

    /// True when every day of `other` falls inside `self`.
    pub fn covers(&self, other: &PeriodKey) -> bool {
        self.contains_date(other.start) && self.contains_date(other.end())
    }
}

impl fmt::Display for PeriodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.start.format("%Y-%m-%d"))
    }
}

/// The unique period of `granularity` that contains `ts`.
pub fn period_of(ts: DateTime<Utc>, granularity: Granularity) -> PeriodKey {
    PeriodKey::containing(ts.date_naive(), granularity)
}

/// Raw per-period counts produced by bucketing an event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeriodAggregate {
    #[serde(serialize_with = "serialize_period")]
    pub period: PeriodKey,
    /// Distinct registered users with at least one event in the period.
    #[serde(rename = "dU")]
    pub users: u64,
    /// Users who registered in the period.
    #[serde(rename = "dNU")]
    pub new_users: u64,
    /// Users whose summed session time in the period exceeds the threshold.
    #[serde(rename = "dAU")]
    pub active_users: u64,
    /// Registered in the period and active in it.
    #[serde(rename = "dNAU")]
    pub new_active_users: u64,
    /// New active users whose channel is an invitation channel.
    #[serde(rename = "dIU")]
    pub invited_active_users: u64,
    pub invites_sent: u64,
    pub spreading_users: u64,
    pub links_published: u64,
    pub link_publishers: u64,
    pub joins_via_link: u64,
    pub invites_accepted: u64,
    pub cumulative_users: u64,
}

impl PeriodAggregate {
    pub fn empty(period: PeriodKey) -> Self {
        PeriodAggregate {
            period,
            users: 0,
            new_users: 0,
            active_users: 0,
            new_active_users: 0,
            invited_active_users: 0,
            invites_sent: 0,
            spreading_users: 0,
            links_published: 0,
            link_publishers: 0,
            joins_via_link: 0,
            invites_accepted: 0,
            cumulative_users: 0,
        }
    }

    /// Direct and open invitations issued in the period.
    pub fn invitations(&self) -> u64 {
        self.invites_sent + self.links_published
    }

    /// Registrations that came through either invitation channel.
    pub fn invited_registrations(&self) -> u64 {
        self.invites_accepted + self.joins_via_link
    }

    /// Checks the count ordering that every bucketed aggregate satisfies.
    pub fn check_invariants(&self) -> Result<(), String> {
        let checks = [
            (self.new_active_users <= self.new_users, "dNAU <= dNU"),
            (self.new_active_users <= self.active_users, "dNAU <= dAU"),
            (
                self.invited_active_users <= self.new_active_users,
                "dIU <= dNAU",
            ),
            (self.active_users <= self.users, "dAU <= dU"),
            (self.new_users <= self.users, "dNU <= dU"),
            (self.spreading_users <= self.users, "spreading_users <= dU"),
            (
                self.invites_accepted <= self.new_users,
                "invites_accepted <= dNU",
            ),
            (
                self.joins_via_link <= self.new_users,
                "joins_via_link <= dNU",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, rule)) => Err(format!("{}: violated {rule}", self.period)),
            None => Ok(()),
        }
    }
}

pub(crate) fn serialize_period<S: serde::Serializer>(
    p: &PeriodKey,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_str(p)
}
