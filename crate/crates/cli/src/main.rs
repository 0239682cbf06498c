use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use kfactor_core::ingest::{
    bucketize, build_registry, parse_events, InputFormat, Issue, ParseOptions, ValidationReport,
    DEFAULT_ACTIVE_THRESHOLD_S,
};
use kfactor_core::metrics::{compute_active_series, compute_series, CoefficientSeries};
use kfactor_core::report::{
    read_k_growth_column, read_pre_aggregated, render_table, write_series_csv, write_series_json,
    ReportError, Rounding,
};
use kfactor_core::simulator::{
    launch_gate, load_params, run, write_trace_csv, write_trace_json, Decision, GateError,
    SimTrace, DEFAULT_WINDOW,
};
use kfactor_core::Granularity;

#[derive(Parser)]
#[command(
    name = "kfactor",
    version,
    about = "Viral growth coefficients from product event logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an event log; exit 0 if it has no errors, 1 otherwise.
    Validate {
        events: PathBuf,
        #[command(flatten)]
        parse: ParseArgs,
    },
    /// Compute per-period growth coefficients.
    Metrics {
        input: PathBuf,
        /// Input is a `period_start,xAU,xNU,xIU` CSV instead of an event log.
        #[arg(long)]
        pre_aggregated: bool,
        #[arg(long, value_enum, default_value_t = Bucket::Week)]
        bucket: Bucket,
        /// Seconds of session time a user must exceed to count as active.
        #[arg(long, default_value_t = DEFAULT_ACTIVE_THRESHOLD_S)]
        active_threshold: u64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long, value_enum, default_value_t = RoundingArg::Percent)]
        rounding: RoundingArg,
        #[command(flatten)]
        parse: ParseArgs,
    },
    /// Run the growth simulator described by a TOML config.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Trailing periods averaged in the summary line.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
    },
    /// Decide LAUNCH (exit 0) or ITERATE (exit 3) from a K-growth series.
    Gate {
        /// CSV with a `k_growth` or `k_growth_flow` column.
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
    },
}

#[derive(clap::Args)]
struct ParseArgs {
    /// Event log format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    events_format: Option<EventsFormat>,
    /// Treat unknown fields as errors rather than warnings.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bucket {
    Day,
    Week,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoundingArg {
    Percent,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum EventsFormat {
    Jsonl,
    Csv,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 1,
            error: error.into(),
        }
    }

    fn io(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: 2,
            error: error.into(),
        }
    }
}

const EXIT_ITERATE: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Validate { events, parse } => validate(&events, &parse),
        Command::Metrics {
            input,
            pre_aggregated,
            bucket,
            active_threshold,
            format,
            rounding,
            parse,
        } => {
            let granularity = match bucket {
                Bucket::Day => Granularity::Day,
                Bucket::Week => Granularity::Week,
            };
            let series = if pre_aggregated {
                let rows =
                    read_pre_aggregated(open(&input)?, granularity).map_err(report_failure)?;
                compute_active_series(&rows)
            } else {
                series_from_events(&input, &parse, granularity, active_threshold)?
            };
            let rounding = match rounding {
                RoundingArg::Percent => Rounding::Percent,
                RoundingArg::Raw => Rounding::Raw,
            };
            emit_series(&series, format, rounding)?;
            Ok(0)
        }
        Command::Simulate {
            config,
            format,
            window,
        } => simulate(&config, format, window),
        Command::Gate {
            input,
            window,
            threshold,
        } => {
            let values = read_k_growth_column(open(&input)?).map_err(report_failure)?;
            let outcome = launch_gate(&values, window, threshold).map_err(|e| match e {
                GateError::EmptySeries => {
                    Failure::input(anyhow::anyhow!("{}: no K-growth values", input.display()))
                }
                other => Failure::input(other),
            })?;
            println!(
                "{} mean K-growth {:.4} over the last {} periods",
                outcome.decision, outcome.mean, outcome.window
            );
            Ok(match outcome.decision {
                Decision::Launch => 0,
                Decision::Iterate => EXIT_ITERATE,
            })
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(Failure::io)
}

fn report_failure(e: ReportError) -> Failure {
    match e {
        ReportError::Io(_) => Failure::io(e),
        other => Failure::input(other),
    }
}

fn events_format(path: &Path, args: &ParseArgs) -> Result<InputFormat, Failure> {
    match args.events_format {
        Some(EventsFormat::Jsonl) => Ok(InputFormat::Jsonl),
        Some(EventsFormat::Csv) => Ok(InputFormat::Csv),
        None => InputFormat::from_path(path).ok_or_else(|| {
            Failure::input(anyhow::anyhow!(
                "cannot infer the format of {}; pass --events-format jsonl|csv",
                path.display()
            ))
        }),
    }
}

fn print_issues(kind: &str, issues: &[Issue]) {
    for issue in issues {
        eprintln!("{kind}: {issue}");
    }
}

/// Parse failures whose only errors are read failures are I/O problems.
fn parse_failure(report: &ValidationReport) -> Failure {
    eprint!("{report}");
    if report.errors.iter().all(|i| i.rule == "io") {
        Failure::io(anyhow::anyhow!("could not read the event log"))
    } else {
        Failure::input(anyhow::anyhow!(
            "{} validation error(s)",
            report.errors.len()
        ))
    }
}

fn validate(path: &Path, args: &ParseArgs) -> Result<u8, Failure> {
    let format = events_format(path, args)?;
    let parsed = parse_events(
        open(path)?,
        format,
        ParseOptions {
            strict: args.strict,
        },
    )
    .map_err(|r| parse_failure(&r))?;
    print_issues("warning", &parsed.warnings);
    let (registry, issues) = build_registry(&parsed.log);
    print_issues("warning", &issues);
    eprintln!("ok: {} events, {} users", parsed.log.len(), registry.len());
    Ok(0)
}

fn series_from_events(
    path: &Path,
    args: &ParseArgs,
    granularity: Granularity,
    threshold: u64,
) -> Result<CoefficientSeries, Failure> {
    let format = events_format(path, args)?;
    let parsed = parse_events(
        open(path)?,
        format,
        ParseOptions {
            strict: args.strict,
        },
    )
    .map_err(|r| parse_failure(&r))?;
    print_issues("warning", &parsed.warnings);
    let (registry, issues) = build_registry(&parsed.log);
    print_issues("warning", &issues);
    let aggregates =
        bucketize(&parsed.log, &registry, granularity, threshold).map_err(Failure::input)?;
    Ok(compute_series(&aggregates))
}

fn emit_series(
    series: &CoefficientSeries,
    format: Format,
    rounding: Rounding,
) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    match format {
        Format::Table => out
            .write_all(render_table(series, rounding).as_bytes())
            .map_err(Failure::io)?,
        Format::Csv => write_series_csv(&mut out, series, rounding).map_err(report_failure)?,
        Format::Json => {
            write_series_json(&mut out, series, rounding).map_err(report_failure)?;
            writeln!(out).map_err(Failure::io)?;
        }
    }
    out.flush().map_err(Failure::io)
}

fn simulate(path: &Path, format: Format, window: usize) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::io)?;
    let params = load_params(&text)
        .with_context(|| format!("invalid config {}", path.display()))
        .map_err(Failure::input)?;
    let trace = run(&params).map_err(Failure::input)?;

    let mut out = io::stdout().lock();
    match format {
        Format::Table => out
            .write_all(trace_table(&trace).as_bytes())
            .map_err(Failure::io)?,
        Format::Csv => write_trace_csv(&mut out, &trace).map_err(Failure::io)?,
        Format::Json => {
            write_trace_json(&mut out, &trace).map_err(Failure::io)?;
            writeln!(out).map_err(Failure::io)?;
        }
    }
    out.flush().map_err(Failure::io)?;

    // The summary goes to stderr so stdout stays machine-readable.
    let last = trace
        .states
        .last()
        .expect("a trace holds at least the initial state");
    let saturation = trace
        .saturation_period(params.market_size)
        .map_or_else(|| "not reached".to_owned(), |t| t.to_string());
    let growth = trace.to_series().k_growth_values();
    let mean = launch_gate(&growth, window, 1.0).map_or_else(
        |_| "n/a".to_owned(),
        |g| format!("{:.4} over the last {} periods", g.mean, g.window),
    );
    eprintln!(
        "final active {}, cumulative {} of {}, saturation period {saturation}, mean K-growth {mean}",
        last.active, last.cumulative_acquired, params.market_size
    );
    Ok(0)
}

fn trace_table(trace: &SimTrace) -> String {
    let growth = trace.to_series();
    let mut out = format!(
        "{:>6} {:>12} {:>12} {:>12} {:>14} {:>10}\n",
        "t", "active", "new", "invited", "cumulative", "k_growth"
    );
    for (state, row) in trace.states.iter().zip(&growth.rows) {
        let g = row
            .k_growth_flow
            .map_or_else(String::new, |g| format!("{:.4}", g.to_f64()));
        out.push_str(&format!(
            "{:>6} {:>12} {:>12} {:>12} {:>14} {:>10}\n",
            state.t,
            state.active,
            state.new_this_period,
            state.invited_this_period,
            state.cumulative_acquired,
            g
        ));
    }
    out
}
