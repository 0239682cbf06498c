//! Report rendering (table, CSV, JSON) and the pre-aggregated input reader.
//!
//! The CSV report carries `period_start,xAU,xNU,xIU` so a report can be fed
//! straight back in as pre-aggregated input.

use std::fmt::Write as _;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::metrics::{ActiveCounts, CoefficientSeries, MetricsRow};
use crate::model::{serialize_period, Granularity, PeriodKey};
use crate::ratio::Ratio;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    BadRow { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rounding {
    /// Integer percentages, halves away from zero.
    #[default]
    Percent,
    /// Unrounded percentages.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Percent {
    Rounded(u64),
    Raw(f64),
}

impl Percent {
    fn of(r: Ratio, rounding: Rounding) -> Self {
        match rounding {
            Rounding::Percent => Percent::Rounded(r.percent_rounded() as u64),
            Rounding::Raw => Percent::Raw(r.percent()),
        }
    }
}

impl std::fmt::Display for Percent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Percent::Rounded(n) => write!(f, "{n}"),
            Percent::Raw(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Percent::Rounded(n) => s.serialize_u64(n),
            Percent::Raw(x) => s.serialize_f64(x),
        }
    }
}

/// One rendered report line.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    #[serde(serialize_with = "serialize_period")]
    pub period_start: PeriodKey,
    #[serde(flatten)]
    pub counts: ActiveCounts,
    pub k_factor_pct: Option<Percent>,
    pub k_retention_pct: Option<Percent>,
    pub k_growth_pct: Option<Percent>,
    pub k_factor: Option<Ratio>,
    pub conversion_ipi: Option<Ratio>,
    pub invites_per_user: Option<Ratio>,
    pub invites_per_spreading_user: Option<Ratio>,
    pub k_retention: Option<Ratio>,
    pub k_retention_active: Option<Ratio>,
    pub k_growth_flow: Option<Ratio>,
    pub k_growth_sum: Option<Ratio>,
}

const REPORT_COLUMNS: [&str; 15] = [
    "period_start",
    "xAU",
    "xNU",
    "xIU",
    "k_factor_pct",
    "k_retention_pct",
    "k_growth_pct",
    "k_factor",
    "conversion_ipi",
    "invites_per_user",
    "invites_per_spreading_user",
    "k_retention",
    "k_retention_active",
    "k_growth_flow",
    "k_growth_sum",
];

impl ReportRow {
    /// The published K-retention row is the active-audience variant.
    pub fn from_row(row: &MetricsRow, rounding: Rounding) -> Self {
        let pct = |r: Option<Ratio>| r.map(|r| Percent::of(r, rounding));
        ReportRow {
            period_start: row.period,
            counts: row.counts,
            k_factor_pct: pct(row.k_factor),
            k_retention_pct: pct(row.k_retention_active),
            k_growth_pct: pct(row.k_growth_flow),
            k_factor: row.k_factor,
            conversion_ipi: row.conversion_ipi,
            invites_per_user: row.invites_per_user,
            invites_per_spreading_user: row.invites_per_spreading_user,
            k_retention: row.k_retention,
            k_retention_active: row.k_retention_active,
            k_growth_flow: row.k_growth_flow,
            k_growth_sum: row.k_growth_sum,
        }
    }
}

pub fn report_rows(series: &CoefficientSeries, rounding: Rounding) -> Vec<ReportRow> {
    series
        .rows
        .iter()
        .map(|r| ReportRow::from_row(r, rounding))
        .collect()
}

pub fn write_series_csv<W: Write>(
    out: W,
    series: &CoefficientSeries,
    rounding: Rounding,
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for row in report_rows(series, rounding) {
        // csv cannot serialize flattened structs, so write fields by hand.
        let cell = |v: Option<String>| v.unwrap_or_default();
        let pct = |p: Option<Percent>| cell(p.map(|p| p.to_string()));
        let ratio = |r: Option<Ratio>| cell(r.map(|r| r.to_f64().to_string()));
        w.write_record([
            row.period_start.to_string(),
            row.counts.active.to_string(),
            row.counts.new_active.to_string(),
            row.counts.invited_active.to_string(),
            pct(row.k_factor_pct),
            pct(row.k_retention_pct),
            pct(row.k_growth_pct),
            ratio(row.k_factor),
            ratio(row.conversion_ipi),
            ratio(row.invites_per_user),
            ratio(row.invites_per_spreading_user),
            ratio(row.k_retention),
            ratio(row.k_retention_active),
            ratio(row.k_growth_flow),
            ratio(row.k_growth_sum),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonReport {
    rows: Vec<ReportRow>,
    global_k_factor: Option<Ratio>,
    global_conversion: Option<Ratio>,
    global_invites_per_user: Option<Ratio>,
}

pub fn write_series_json<W: Write>(
    out: W,
    series: &CoefficientSeries,
    rounding: Rounding,
) -> Result<(), ReportError> {
    let report = JsonReport {
        rows: report_rows(series, rounding),
        global_k_factor: series.global_k_factor,
        global_conversion: series.global_conversion,
        global_invites_per_user: series.global_invites_per_user,
    };
    serde_json::to_writer_pretty(out, &report)?;
    Ok(())
}

/// Human-readable layout: one column per period, one line per quantity.
pub fn render_table(series: &CoefficientSeries, rounding: Rounding) -> String {
    let rows = report_rows(series, rounding);
    let mut lines: Vec<(String, Vec<String>)> = vec![
        (
            "week".into(),
            rows.iter().map(|r| r.period_start.to_string()).collect(),
        ),
        (
            "xAU".into(),
            rows.iter().map(|r| r.counts.active.to_string()).collect(),
        ),
        (
            "xNU".into(),
            rows.iter()
                .map(|r| r.counts.new_active.to_string())
                .collect(),
        ),
        (
            "xIU".into(),
            rows.iter()
                .map(|r| r.counts.invited_active.to_string())
                .collect(),
        ),
    ];
    let suffix = if rounding == Rounding::Percent {
        ", %"
    } else {
        ", % (raw)"
    };
    let show = |p: Option<Percent>| p.map_or_else(String::new, |p| p.to_string());
    lines.push((
        format!("K-Factor{suffix}"),
        rows.iter().map(|r| show(r.k_factor_pct)).collect(),
    ));
    lines.push((
        format!("K-Retention{suffix}"),
        rows.iter().map(|r| show(r.k_retention_pct)).collect(),
    ));
    lines.push((
        format!("K-Growth{suffix}"),
        rows.iter().map(|r| show(r.k_growth_pct)).collect(),
    ));

    let label_w = lines.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let cell_w = lines
        .iter()
        .flat_map(|(_, cells)| cells.iter().map(String::len))
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for (label, cells) in &lines {
        let _ = write!(out, "{label:<label_w$}");
        for c in cells {
            let _ = write!(out, "  {c:>cell_w$}");
        }
        out.push('\n');
    }
    for (name, value) in [
        ("global K-factor", series.global_k_factor),
        ("global conversion", series.global_conversion),
        ("global invites per user", series.global_invites_per_user),
    ] {
        if let Some(v) = value {
            let _ = writeln!(out, "{name}: {v}");
        }
    }
    out
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, ReportError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| ReportError::MissingColumn(name.to_owned()))
}

/// Reads `period_start,xAU,xNU,xIU` rows (extra columns are ignored).
/// Periods must be aligned to `granularity`, contiguous, and satisfy
/// `xIU <= xNU <= xAU`.
pub fn read_pre_aggregated<R: Read>(
    source: R,
    granularity: Granularity,
) -> Result<Vec<(PeriodKey, ActiveCounts)>, ReportError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let idx = [
        column(&headers, "period_start")?,
        column(&headers, "xAU")?,
        column(&headers, "xNU")?,
        column(&headers, "xIU")?,
    ];

    let mut out: Vec<(PeriodKey, ActiveCounts)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| ReportError::BadRow { line, message };
        let get = |i: usize| rec.get(i).unwrap_or("").trim();

        let date = NaiveDate::parse_from_str(get(idx[0]), "%Y-%m-%d")
            .map_err(|e| bad(format!("period_start `{}`: {e}", get(idx[0]))))?;
        let period = PeriodKey::from_start(date, granularity)
            .ok_or_else(|| bad(format!("{date} does not start a {granularity:?} period")))?;
        let count = |i: usize, name: &str| {
            get(i)
                .parse::<u64>()
                .map_err(|_| bad(format!("{name} `{}` is not a count", get(i))))
        };
        let counts = ActiveCounts {
            active: count(idx[1], "xAU")?,
            new_active: count(idx[2], "xNU")?,
            invited_active: count(idx[3], "xIU")?,
        };
        if counts.new_active > counts.active || counts.invited_active > counts.new_active {
            return Err(bad("counts must satisfy xIU <= xNU <= xAU".into()));
        }
        if let Some((last, _)) = out.last() {
            if last.successor() != period {
                return Err(bad(format!("{period} does not follow {last}")));
            }
        }
        out.push((period, counts));
    }
    Ok(out)
}

/// Reads the K-growth series from a metrics or simulation CSV: column
/// `k_growth` if present, else `k_growth_flow`. Blank cells are skipped.
pub fn read_k_growth_column<R: Read>(source: R) -> Result<Vec<f64>, ReportError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let idx = column(&headers, "k_growth").or_else(|_| column(&headers, "k_growth_flow"))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let cell = rec.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        let value = cell.parse::<f64>().map_err(|_| ReportError::BadRow {
            line: rec.position().map_or(0, |p| p.line()),
            message: format!("k_growth `{cell}` is not a number"),
        })?;
        out.push(value);
    }
    Ok(out)
}
