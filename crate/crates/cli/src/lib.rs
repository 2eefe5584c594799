//! Operator command line: ingest dumps, run extraction, summarize cohorts,
//! compute estimates, write the HTML report and launch the service.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use indemnity_core::corpus::{CohortFilter, IngestReport, Store};
use indemnity_core::elicitation::{PointEstimator, PoolingMode};
use indemnity_core::extraction::extract_from_decision;
use indemnity_core::pipeline::{self, Outcome};
use indemnity_core::report::render_report;
use indemnity_core::wire::{CohortSummaryWire, EstimateRequestWire, OpinionWire, PoolingWire};
use indemnity_core::{Error, Money};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_REJECTED_ROWS: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "indemnity",
    version,
    about = "Decision support for moral-damage indemnity amounts"
)]
pub struct Cli {
    /// Corpus store file.
    #[arg(long, global = true, env = indemnity_service::ENV_STORE, default_value = indemnity_service::DEFAULT_STORE)]
    pub store: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a line-delimited JSON dump ("-" reads stdin).
    Ingest {
        path: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Extract the awarded amount from a decision text ("-" or no path reads stdin).
    Extract { path: Option<PathBuf> },
    /// Summarize the cohort selected by the filter.
    Summary {
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, value_enum, default_value_t = SummaryFormat::Text)]
        format: SummaryFormat,
    },
    /// Suggest an indemnity amount.
    Estimate {
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        estimate: EstimateArgs,
        #[arg(long, value_enum, default_value_t = EstimateFormat::Text)]
        format: EstimateFormat,
    },
    /// Write a self-contained HTML report of an estimate.
    Report {
        #[command(flatten)]
        filter: FilterArgs,
        #[command(flatten)]
        estimate: EstimateArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the cohort in the ingestion format.
    Export {
        #[command(flatten)]
        filter: FilterArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service. The bearer token for ingestion is read from the
    /// environment only.
    Serve {
        #[arg(long, env = indemnity_service::ENV_LISTEN, default_value = indemnity_service::DEFAULT_LISTEN)]
        listen: std::net::SocketAddr,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SummaryFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimateFormat {
    Text,
    ReportJson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    PriorOnly,
    Pooled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Mean,
    Mode,
}

#[derive(Debug, Default, Args)]
pub struct FilterArgs {
    #[arg(long = "class")]
    pub classes: Vec<String>,
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
    #[arg(long = "county")]
    pub counties: Vec<String>,
    #[arg(long = "judge")]
    pub judges: Vec<String>,
    /// First decision date, inclusive (YYYY-MM-DD).
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Last decision date, inclusive (YYYY-MM-DD).
    #[arg(long)]
    pub to: Option<NaiveDate>,
}

fn to_set(v: &[String]) -> Option<BTreeSet<String>> {
    (!v.is_empty()).then(|| v.iter().cloned().collect())
}

impl FilterArgs {
    pub fn to_filter(&self) -> CohortFilter {
        CohortFilter {
            classes: to_set(&self.classes),
            subjects: to_set(&self.subjects),
            date_from: self.from,
            date_to: self.to,
            counties: to_set(&self.counties),
            judges: to_set(&self.judges),
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct EstimateArgs {
    /// Opinion on the 0 (pay the minimum) to 10 (pay the maximum) scale.
    #[arg(long, conflicts_with_all = ["alpha", "beta"])]
    pub scale: Option<u8>,
    #[arg(long, requires = "beta")]
    pub alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    pub beta: Option<f64>,
    /// Fit the prior to the cohort; --scale, if given, is the fallback.
    #[arg(long, conflicts_with_all = ["alpha", "beta"])]
    pub auto: bool,
    #[arg(long, conflicts_with_all = ["alpha", "beta"])]
    pub concentration: Option<f64>,
    /// Calibration constant in minor units (centavos).
    #[arg(long, allow_negative_numbers = true)]
    pub calibration: Option<i64>,
    /// Weight of each cohort value in the pooled posterior, in [0, 1].
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Credible interval mass, in (0, 1).
    #[arg(long)]
    pub mass: Option<f64>,
}

impl EstimateArgs {
    pub fn to_wire(&self, filter: CohortFilter) -> EstimateRequestWire {
        EstimateRequestWire {
            filter,
            opinion: OpinionWire {
                scale: self.scale,
                concentration: self.concentration,
                alpha: self.alpha,
                beta: self.beta,
                auto: self.auto.then_some(true),
            },
            pooling: PoolingWire {
                mode: self.mode.map(|m| match m {
                    ModeArg::PriorOnly => PoolingMode::PriorOnly,
                    ModeArg::Pooled => PoolingMode::Pooled,
                }),
                data_weight: self.weight,
            },
            calibration_minor_units: self.calibration,
            point_estimator: self.estimator.map(|e| match e {
                EstimatorArg::Mean => PointEstimator::PosteriorMean,
                EstimatorArg::Mode => PointEstimator::PosteriorMode,
            }),
            interval_mass: self.mass,
        }
    }
}

/// A failed command: message for stderr plus exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    /// Downstream closed the pipe (e.g. `| head`); not worth reporting.
    fn is_broken_pipe(&self) -> bool {
        self.code == EXIT_OK
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Invalid(_)) {
            EXIT_USAGE
        } else {
            EXIT_FAILURE
        };
        Failure {
            code,
            message: format!("{}: {e}", e.code()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        let code = if e.kind() == io::ErrorKind::BrokenPipe {
            EXIT_OK
        } else {
            EXIT_FAILURE
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn emit(text: &str) -> io::Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()
}

fn to_json<T: serde::Serialize>(value: &T) -> io::Result<String> {
    serde_json::to_string(value).map_err(io::Error::other)
}

type CmdResult = Result<u8, Failure>;

fn open_input(path: &Path) -> io::Result<Box<dyn Read>> {
    if path == Path::new("-") {
        Ok(Box::new(io::stdin().lock()))
    } else {
        Ok(Box::new(File::open(path).map_err(|e| {
            io::Error::new(e.kind(), format!("{}: {e}", path.display()))
        })?))
    }
}

fn print_ingest(report: &IngestReport, json: bool, out: &mut impl Write) -> io::Result<()> {
    if json {
        return writeln!(out, "{}", to_json(report)?);
    }
    writeln!(
        out,
        "accepted {}  duplicates {}  rejected {}  corpus version {}",
        report.accepted, report.duplicates, report.rejected, report.corpus_version
    )?;
    for r in &report.rejections {
        let id = r
            .case_id
            .as_deref()
            .map(|id| format!(" [{id}]"))
            .unwrap_or_default();
        writeln!(out, "line {}{id}: {}: {}", r.line, r.code, r.message)?;
    }
    if report.rejected as usize > report.rejections.len() {
        writeln!(
            out,
            "... {} more rejections not shown",
            report.rejected as usize - report.rejections.len()
        )?;
    }
    Ok(())
}

fn cmd_ingest(store: &Path, path: &Path, json: bool) -> CmdResult {
    let input = open_input(path)?;
    let store = Store::open(store)?;
    let report = store.ingest_reader(BufReader::with_capacity(1 << 20, input))?;
    let mut text = Vec::new();
    print_ingest(&report, json, &mut text)?;
    emit(&String::from_utf8_lossy(&text))?;
    Ok(if report.rejected == 0 {
        EXIT_OK
    } else {
        EXIT_REJECTED_ROWS
    })
}

fn cmd_extract(path: Option<&Path>) -> CmdResult {
    let mut text = String::new();
    open_input(path.unwrap_or(Path::new("-")))?.read_to_string(&mut text)?;
    let result = extract_from_decision(&text, None);
    emit(&(serde_json::to_string_pretty(&result).map_err(io::Error::other)? + "\n"))?;
    Ok(EXIT_OK)
}

fn format_summary(s: &CohortSummaryWire) -> String {
    let mut out = format!(
        "cohort {}  (corpus version {})\nn        {}\nmin      {}\nmax      {}\nmean     {}\nvariance {}\n",
        s.cohort_id,
        s.corpus_version,
        s.n,
        Money(s.min_minor_units),
        Money(s.max_minor_units),
        Money::round_half_up(s.mean_minor_units),
        s.variance
    );
    for (level, v) in &s.quantiles_minor_units {
        out.push_str(&format!("q{level:<7} {}\n", Money(*v)));
    }
    out
}

fn cmd_summary(store: &Path, filter: &FilterArgs, format: SummaryFormat) -> CmdResult {
    let store = Store::open(store)?;
    let summary = pipeline::cohort_summary_wire(&store.snapshot()?, &filter.to_filter())?;
    match format {
        SummaryFormat::Json => emit(&(to_json(&summary)? + "\n"))?,
        SummaryFormat::Text => emit(&format_summary(&summary))?,
    }
    Ok(EXIT_OK)
}

fn compute(store: &Path, filter: &FilterArgs, args: &EstimateArgs) -> Result<Outcome, Failure> {
    let wire = args.to_wire(filter.to_filter());
    let store = Store::open(store)?;
    let snap = store.snapshot()?;
    Ok(pipeline::run_estimate(&snap, &wire)?)
}

/// Human-readable estimate; the first line is the suggested amount.
pub fn format_estimate(o: &Outcome) -> String {
    let e = &o.estimate;
    let mut out = format!(
        "suggested  {}\ninterval   {} to {} ({}% credible)\npi_hat     {}\nprior      Beta({}, {})\nposterior  Beta({}, {})\ncohort     n={} min={} max={} id={} corpus version {}\n",
        e.theta_hat,
        e.interval_low,
        e.interval_high,
        e.interval_mass * 100.0,
        e.pi_hat.value(),
        e.prior.alpha(),
        e.prior.beta(),
        e.posterior.alpha(),
        e.posterior.beta(),
        o.summary.n,
        o.summary.min,
        o.summary.max,
        o.summary.cohort_id,
        o.corpus_version,
    );
    if e.clamped {
        out.push_str(
            "CLAMPED    calibration pushed the suggestion below zero; reported as R$ 0,00\n",
        );
    }
    out
}

fn cmd_estimate(
    store: &Path,
    filter: &FilterArgs,
    args: &EstimateArgs,
    format: EstimateFormat,
) -> CmdResult {
    let outcome = compute(store, filter, args)?;
    match format {
        EstimateFormat::Text => emit(&format_estimate(&outcome))?,
        EstimateFormat::ReportJson => emit(&(to_json(&outcome.response())? + "\n"))?,
    }
    Ok(EXIT_OK)
}

fn cmd_report(store: &Path, filter: &FilterArgs, args: &EstimateArgs, out: &Path) -> CmdResult {
    let outcome = compute(store, filter, args)?;
    let generated_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let html = render_report(&outcome, &generated_at);
    std::fs::write(out, html)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", out.display())))?;
    emit(&format!(
        "{}  {}\n",
        outcome.estimate.theta_hat,
        out.display()
    ))?;
    Ok(EXIT_OK)
}

fn cmd_export(store: &Path, filter: &FilterArgs, out: Option<&Path>) -> CmdResult {
    let store = Store::open(store)?;
    let snap = store.snapshot()?;
    let n = match out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            let n = snap.export_cohort(&filter.to_filter(), &mut w)?;
            w.flush()?;
            n
        }
        None => snap.export_cohort(&filter.to_filter(), BufWriter::new(io::stdout().lock()))?,
    };
    eprintln!("exported {n} records");
    Ok(EXIT_OK)
}

fn cmd_serve(store: PathBuf, listen: std::net::SocketAddr) -> CmdResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let token = std::env::var(indemnity_service::ENV_TOKEN)
        .ok()
        .filter(|t| !t.is_empty());
    let config = indemnity_service::Config {
        listen,
        store,
        token,
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(indemnity_service::serve(config))?;
    Ok(EXIT_OK)
}

pub fn run(cli: Cli) -> CmdResult {
    let store = cli.store;
    match cli.command {
        Command::Ingest { path, json } => cmd_ingest(&store, &path, json),
        Command::Extract { path } => cmd_extract(path.as_deref()),
        Command::Summary { filter, format } => cmd_summary(&store, &filter, format),
        Command::Estimate {
            filter,
            estimate,
            format,
        } => cmd_estimate(&store, &filter, &estimate, format),
        Command::Report {
            filter,
            estimate,
            out,
        } => cmd_report(&store, &filter, &estimate, &out),
        Command::Export { filter, out } => cmd_export(&store, &filter, out.as_deref()),
        Command::Serve { listen } => cmd_serve(store, listen),
    }
}

/// Parses `args` and runs the command, mapping every outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) if f.is_broken_pipe() => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
