use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::model::{Action, Channel, UserRecord};

use super::parse::{EventLog, Issue};

/// Registered users keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    users: BTreeMap<String, UserRecord>,
}

impl Registry {
    pub fn get(&self, user_id: &str) -> Option<&UserRecord> {
        self.users.get(user_id)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn invited_count(&self) -> usize {
        self.users
            .values()
            .filter(|u| u.channel.is_invited())
            .count()
    }
}

/// Resolves every registration to a [`UserRecord`].
///
/// Direct registrations must reference an `invite_direct` event that
/// precedes them in the log; the inviter is that event's sender. A dangling
/// reference downgrades the user to `Organic` with a warning. Open-link
/// registrations credit the link's publisher only when exactly one user
/// ever published that link id.
pub fn build_registry(log: &EventLog) -> (Registry, Vec<Issue>) {
    let mut warnings = Vec::new();

    let mut publishers: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for event in log.events() {
        if let Action::LinkPublish { link_id } = &event.action {
            publishers
                .entry(link_id)
                .or_default()
                .insert(&event.user_id);
        }
    }

    let mut invites: HashMap<&str, &str> = HashMap::new();
    let mut registry = Registry::default();
    for (event, &line) in log.events().iter().zip(log.lines()) {
        match &event.action {
            Action::InviteDirect { invite_id } => {
                if invites.contains_key(invite_id.as_str()) {
                    warnings.push(Issue::new(
                        line,
                        "duplicate-invite-id",
                        format!(
                            "invite id `{invite_id}` reused; the first sender keeps the credit"
                        ),
                    ));
                } else {
                    invites.insert(invite_id, &event.user_id);
                }
            }
            Action::Register {
                channel,
                inviter_id,
                invite_id,
                link_id,
            } => {
                let (channel, inviter) = match channel {
                    Channel::InvitedDirect => {
                        match invite_id.as_deref().and_then(|id| invites.get(id)) {
                            Some(sender) => (Channel::InvitedDirect, Some((*sender).to_owned())),
                            None => {
                                warnings.push(Issue::new(
                                line,
                                "dangling-invite",
                                format!(
                                    "`{}` claims a direct invitation `{}` that was never sent; counted as organic",
                                    event.user_id,
                                    invite_id.as_deref().unwrap_or("")
                                ),
                            ));
                                (Channel::Organic, None)
                            }
                        }
                    }
                    Channel::InvitedOpen => {
                        let unique = link_id
                            .as_deref()
                            .and_then(|id| publishers.get(id))
                            .filter(|set| set.len() == 1)
                            .and_then(|set| set.iter().next())
                            .map(|p| (*p).to_owned());
                        (Channel::InvitedOpen, unique)
                    }
                    other => {
                        if inviter_id.is_some() || invite_id.is_some() || link_id.is_some() {
                            warnings.push(Issue::new(
                                line,
                                "ignored-field",
                                format!(
                                    "invitation references on a {other} registration were ignored"
                                ),
                            ));
                        }
                        (*other, None)
                    }
                };

                // Inviters must have registered strictly earlier.
                let inviter = inviter.filter(|id| {
                    let earlier = registry.get(id).is_some_and(|r| r.registered_at < event.ts);
                    if !earlier {
                        warnings.push(Issue::new(
                            line,
                            "inviter-dropped",
                            format!(
                                "inviter `{id}` of `{}` did not register strictly earlier",
                                event.user_id
                            ),
                        ));
                    }
                    earlier
                });

                registry.users.insert(
                    event.user_id.clone(),
                    UserRecord {
                        user_id: event.user_id.clone(),
                        registered_at: event.ts,
                        channel,
                        inviter_id: inviter,
                    },
                );
            }
            _ => {}
        }
    }
    (registry, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Event;
    use chrono::{DateTime, TimeZone, Utc};

    fn t(minute: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2014, 5, 12, 9, minute, 0).unwrap()
    }

    fn registry(events: Vec<Event>) -> (Registry, Vec<Issue>) {
        build_registry(&EventLog::from_events(events).unwrap())
    }

    #[test]
    fn direct_invitation_resolves_sender() {
        let (reg, warnings) = registry(vec![
            Event::register(t(0), "u1", Channel::Organic),
            Event::invite_direct(t(1), "u1", "i1"),
            Event::register_direct(t(2), "u2", "i1"),
        ]);
        let u2 = reg.get("u2").unwrap();
        assert_eq!(u2.channel, Channel::InvitedDirect);
        assert_eq!(u2.inviter_id.as_deref(), Some("u1"));
        assert!(warnings.is_empty());
    }

    #[test]
    fn paid_user_has_no_inviter() {
        let (reg, _) = registry(vec![Event::register(t(0), "u4", Channel::Paid)]);
        let u4 = reg.get("u4").unwrap();
        assert_eq!(u4.channel, Channel::Paid);
        assert!(u4.inviter_id.is_none());
    }

    #[test]
    fn dangling_invite_downgrades_to_organic() {
        let (reg, warnings) = registry(vec![
            Event::register(t(0), "u1", Channel::Organic),
            Event::register_direct(t(1), "u2", "nope"),
        ]);
        assert_eq!(reg.get("u2").unwrap().channel, Channel::Organic);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].rule, "dangling-invite");
    }

    #[test]
    fn invite_sent_after_registration_is_dangling() {
        let (reg, warnings) = registry(vec![
            Event::register(t(0), "u1", Channel::Organic),
            Event::register_direct(t(1), "u2", "i1"),
            Event::invite_direct(t(2), "u1", "i1"),
        ]);
        assert_eq!(reg.get("u2").unwrap().channel, Channel::Organic);
        assert_eq!(warnings[0].rule, "dangling-invite");
    }

    #[test]
    fn open_link_with_one_publisher_credits_them() {
        let (reg, _) = registry(vec![
            Event::register(t(0), "u1", Channel::Organic),
            Event::link_publish(t(1), "u1", "L1"),
            Event::register_open(t(2), "u3", "L1"),
        ]);
        let u3 = reg.get("u3").unwrap();
        assert_eq!(u3.channel, Channel::InvitedOpen);
        assert_eq!(u3.inviter_id.as_deref(), Some("u1"));
    }

    #[test]
    fn open_link_with_two_publishers_leaves_inviter_absent() {
        let (reg, _) = registry(vec![
            Event::register(t(0), "u1", Channel::Organic),
            Event::register(t(0), "u2", Channel::Organic),
            Event::link_publish(t(1), "u1", "L1"),
            Event::register_open(t(2), "u3", "L1"),
            Event::link_publish(t(3), "u2", "L1"),
        ]);
        let u3 = reg.get("u3").unwrap();
        assert_eq!(u3.channel, Channel::InvitedOpen);
        assert!(u3.inviter_id.is_none());
    }

    #[test]
    fn open_link_publisher_must_predate_joiner() {
        // u3 joins through L1 before u9 (its only publisher) even registers.
        let (reg, warnings) = registry(vec![
            Event::register(t(0), "u1", Channel::Organic),
            Event::register_open(t(1), "u3", "L1"),
            Event::register(t(2), "u9", Channel::Organic),
            Event::link_publish(t(3), "u9", "L1"),
        ]);
        assert!(reg.get("u3").unwrap().inviter_id.is_none());
        assert_eq!(warnings[0].rule, "inviter-dropped");
    }
}
