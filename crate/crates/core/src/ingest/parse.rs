use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, SubsecRound, Utc};
use serde::Serialize;

use crate::model::{Action, Channel, Event, EventKind};

const FIELDS: [&str; 8] = [
    "ts",
    "kind",
    "user",
    "duration_s",
    "channel",
    "inviter",
    "invite_id",
    "link_id",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "ndjson" | "json" => Some(InputFormat::Jsonl),
            "csv" => Some(InputFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Reject unknown fields instead of warning about them.
    pub strict: bool,
}

/// A single finding tied to a source line (1-based; 0 when not tied to a line).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub line: usize,
    pub rule: &'static str,
    pub message: String,
}

impl Issue {
    pub(crate) fn new(line: usize, rule: &'static str, message: impl Into<String>) -> Self {
        Issue {
            line,
            rule,
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: [{}] {}", self.line, self.rule, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_accepted(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// A validated event log, sorted by timestamp (stable on ties).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<Event>,
    lines: Vec<usize>,
}

impl EventLog {
    /// Sorts and validates already-decoded events. Line numbers in any
    /// report are the 1-based positions in `events`.
    pub fn from_events(events: Vec<Event>) -> Result<Self, ValidationReport> {
        let lines = (1..=events.len()).collect();
        let mut report = ValidationReport::default();
        let log = Self::assemble(events, lines, &mut report);
        if report.is_accepted() {
            Ok(log)
        } else {
            Err(report)
        }
    }

    fn assemble(events: Vec<Event>, lines: Vec<usize>, report: &mut ValidationReport) -> Self {
        let mut order: Vec<usize> = (0..events.len()).collect();
        order.sort_by_key(|&i| events[i].ts);

        let mut slots: Vec<Option<Event>> = events.into_iter().map(Some).collect();
        let mut log = EventLog::default();
        let mut registered = HashSet::new();
        for i in order {
            let event = slots[i].take().expect("each index visited once");
            let line = lines[i];
            match event.action {
                Action::Register { .. } => {
                    if !registered.insert(event.user_id.clone()) {
                        report.errors.push(Issue::new(
                            line,
                            "duplicate-register",
                            format!("user `{}` registers more than once", event.user_id),
                        ));
                    }
                }
                _ if !registered.contains(&event.user_id) => {
                    report.errors.push(Issue::new(
                        line,
                        "activity-before-registration",
                        format!(
                            "{} by `{}` precedes their registration",
                            event.kind().as_str(),
                            event.user_id
                        ),
                    ));
                }
                _ => {}
            }
            log.events.push(event);
            log.lines.push(line);
        }
        log
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Source line of each event, parallel to [`EventLog::events`].
    pub fn lines(&self) -> &[usize] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// A successfully parsed log together with any non-fatal findings.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub log: EventLog,
    pub warnings: Vec<Issue>,
}

/// Parses a JSONL or CSV event log. Every offending line is reported; the
/// log is returned only if there are no errors.
pub fn parse_events<R: Read>(
    source: R,
    format: InputFormat,
    opts: ParseOptions,
) -> Result<Parsed, ValidationReport> {
    let mut report = ValidationReport::default();
    let records = match format {
        InputFormat::Jsonl => read_jsonl(source, &mut report),
        InputFormat::Csv => read_csv(source, &mut report),
    };

    let mut events = Vec::with_capacity(records.len());
    let mut lines = Vec::with_capacity(records.len());
    for (line, fields) in records {
        if let Some(event) = decode(line, fields, opts, &mut report) {
            events.push(event);
            lines.push(line);
        }
    }

    let log = EventLog::assemble(events, lines, &mut report);
    report.errors.sort_by_key(|e| e.line);
    if report.is_accepted() {
        Ok(Parsed {
            log,
            warnings: report.warnings,
        })
    } else {
        Err(report)
    }
}

#[derive(Debug)]
enum Value {
    Text(String),
    Int(u64),
    Other(String),
}

type Record = BTreeMap<String, Value>;

fn read_jsonl<R: Read>(source: R, report: &mut ValidationReport) -> Vec<(usize, Record)> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let lineno = idx + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                report.errors.push(Issue::new(lineno, "io", e.to_string()));
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let obj = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(obj)) => obj,
            Ok(_) => {
                report
                    .errors
                    .push(Issue::new(lineno, "syntax", "expected a JSON object"));
                continue;
            }
            Err(e) => {
                report
                    .errors
                    .push(Issue::new(lineno, "syntax", e.to_string()));
                continue;
            }
        };
        let record = obj
            .into_iter()
            .filter_map(|(k, v)| {
                let v = match v {
                    serde_json::Value::Null => return None,
                    serde_json::Value::String(s) => Value::Text(s),
                    serde_json::Value::Number(n) => match n.as_u64() {
                        Some(u) => Value::Int(u),
                        None => Value::Other(n.to_string()),
                    },
                    other => Value::Other(other.to_string()),
                };
                Some((k, v))
            })
            .collect();
        out.push((lineno, record));
    }
    out
}

fn read_csv<R: Read>(source: R, report: &mut ValidationReport) -> Vec<(usize, Record)> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_reader(source);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => {
            report.errors.push(Issue::new(1, "syntax", e.to_string()));
            return Vec::new();
        }
    };
    if headers.is_empty() {
        return Vec::new();
    }
    let missing: Vec<_> = FIELDS
        .iter()
        .filter(|f| !headers.iter().any(|h| h == **f))
        .collect();
    if !missing.is_empty() {
        let names: Vec<_> = missing.iter().map(|s| s.to_string()).collect();
        report.errors.push(Issue::new(
            1,
            "bad-header",
            format!("missing column(s): {}", names.join(", ")),
        ));
        return Vec::new();
    }

    let mut out = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                report
                    .errors
                    .push(Issue::new(line, "syntax", e.to_string()));
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line() as usize);
        let record = headers
            .iter()
            .zip(row.iter())
            .filter(|(_, cell)| !cell.is_empty())
            .map(|(h, cell)| (h.to_owned(), Value::Text(cell.to_owned())))
            .collect();
        out.push((line, record));
    }
    out
}

struct Fields<'a> {
    line: usize,
    record: Record,
    report: &'a mut ValidationReport,
    failed: bool,
}

impl Fields<'_> {
    fn error(&mut self, rule: &'static str, message: String) {
        self.report
            .errors
            .push(Issue::new(self.line, rule, message));
        self.failed = true;
    }

    fn take_text(&mut self, name: &str) -> Option<String> {
        match self.record.remove(name)? {
            Value::Text(s) => Some(s),
            Value::Int(n) => Some(n.to_string()),
            Value::Other(raw) => {
                self.error(
                    "invalid-value",
                    format!("`{name}` must be a string, got {raw}"),
                );
                None
            }
        }
    }

    fn take_u64(&mut self, name: &str) -> Option<u64> {
        match self.record.remove(name)? {
            Value::Int(n) => Some(n),
            Value::Text(s) => match s.trim().parse::<u64>() {
                Ok(n) => Some(n),
                Err(_) => {
                    self.error(
                        "invalid-value",
                        format!("`{name}` must be a non-negative integer, got `{s}`"),
                    );
                    None
                }
            },
            Value::Other(raw) => {
                self.error(
                    "invalid-value",
                    format!("`{name}` must be a non-negative integer, got {raw}"),
                );
                None
            }
        }
    }

    fn require<T>(&mut self, value: Option<T>, name: &str, kind: EventKind) -> Option<T> {
        if value.is_none() && !self.failed {
            self.error(
                "missing-field",
                format!("`{name}` is required for {}", kind.as_str()),
            );
        }
        value
    }

    fn forbid(&mut self, present: bool, name: &str, kind: EventKind) {
        if present {
            self.error(
                "unexpected-field",
                format!("`{name}` is not allowed on {}", kind.as_str()),
            );
        }
    }

    fn ignore(&mut self, present: bool, name: &str, kind: EventKind) {
        if present {
            self.report.warnings.push(Issue::new(
                self.line,
                "ignored-field",
                format!(
                    "`{name}` has no meaning on {} and was ignored",
                    kind.as_str()
                ),
            ));
        }
    }
}

fn decode(
    line: usize,
    record: Record,
    opts: ParseOptions,
    report: &mut ValidationReport,
) -> Option<Event> {
    let mut f = Fields {
        line,
        record,
        report,
        failed: false,
    };

    let ts_raw = f.take_text("ts");
    let kind_raw = f.take_text("kind");
    let user = f.take_text("user");
    let duration_s = f.take_u64("duration_s");
    let channel_raw = f.take_text("channel");
    let inviter = f.take_text("inviter");
    let invite_id = f.take_text("invite_id");
    let link_id = f.take_text("link_id");

    let unknown: Vec<String> = std::mem::take(&mut f.record).into_keys().collect();
    for name in unknown {
        if opts.strict {
            f.error("unknown-field", format!("unknown field `{name}`"));
        } else {
            f.report.warnings.push(Issue::new(
                line,
                "unknown-field",
                format!("unknown field `{name}` ignored"),
            ));
        }
    }

    let ts = match ts_raw {
        None => {
            f.error("missing-field", "`ts` is required".into());
            None
        }
        Some(raw) => match DateTime::parse_from_rfc3339(&raw) {
            Ok(t) => Some(t.with_timezone(&Utc).trunc_subsecs(0)),
            Err(e) => {
                f.error(
                    "invalid-value",
                    format!("`ts` is not RFC 3339 (`{raw}`): {e}"),
                );
                None
            }
        },
    };

    let user = match user {
        Some(u) if !u.is_empty() => Some(u),
        _ => {
            f.error(
                "missing-field",
                "`user` is required and must be non-empty".into(),
            );
            None
        }
    };

    let kind = match kind_raw {
        None => {
            f.error("missing-field", "`kind` is required".into());
            return None;
        }
        Some(raw) => match raw.parse::<EventKind>() {
            Ok(k) => k,
            Err(msg) => {
                f.error("unknown-kind", msg);
                return None;
            }
        },
    };

    let channel = match channel_raw {
        Some(raw) if kind == EventKind::Register => match raw.parse::<Channel>() {
            Ok(c) => Some(c),
            Err(msg) => {
                f.error("invalid-value", msg);
                None
            }
        },
        other => {
            f.forbid(other.is_some(), "channel", kind);
            None
        }
    };

    let action = match kind {
        EventKind::Register => {
            f.forbid(duration_s.is_some(), "duration_s", kind);
            let channel = f.require(channel, "channel", kind);
            channel.map(|channel| Action::Register {
                channel,
                inviter_id: inviter,
                invite_id,
                link_id,
            })
        }
        EventKind::Session => {
            f.ignore(inviter.is_some(), "inviter", kind);
            f.ignore(invite_id.is_some(), "invite_id", kind);
            f.ignore(link_id.is_some(), "link_id", kind);
            f.require(duration_s, "duration_s", kind)
                .map(|duration_s| Action::Session { duration_s })
        }
        EventKind::InviteDirect => {
            f.forbid(duration_s.is_some(), "duration_s", kind);
            f.ignore(inviter.is_some(), "inviter", kind);
            f.ignore(link_id.is_some(), "link_id", kind);
            f.require(invite_id, "invite_id", kind)
                .map(|invite_id| Action::InviteDirect { invite_id })
        }
        EventKind::LinkPublish => {
            f.forbid(duration_s.is_some(), "duration_s", kind);
            f.ignore(inviter.is_some(), "inviter", kind);
            f.ignore(invite_id.is_some(), "invite_id", kind);
            f.require(link_id, "link_id", kind)
                .map(|link_id| Action::LinkPublish { link_id })
        }
    };

    if f.failed {
        return None;
    }
    Some(Event {
        ts: ts?,
        user_id: user?,
        action: action?,
    })
}
