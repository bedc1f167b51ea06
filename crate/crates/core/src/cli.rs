//! The `mobility-report` command line.
//!
//! Exit codes: 0 on success, 2 for configuration errors (bad flags, bad
//! config files), 3 for data errors (unreadable or empty inputs).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Deserialize;

use crate::bounding::{propose_bounds, ContributionBound};
use crate::error::{Error, Result};
use crate::eval::{run_experiment, write_aggregate_csv, write_errors_csv, ExperimentConfig};
use crate::html::render_html;
use crate::measures::{load_bins, TimeWindow};
use crate::mechanisms::PrivacyMode;
use crate::model::{dataset_stats, parse_trips, ColumnMapping, Dataset, ParseOptions};
use crate::report::{generate_report, parse_measure_selection, serialize_json, ReportConfig};
use crate::tessellation::{load_tessellation, Tessellation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mobility-report", version, about = "Differentially private mobility reports")]
struct Cli {
    /// JSON file with default values for any flag; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a private report.
    Report(ReportArgs),
    /// Sweep contribution bounds and budgets and record utility errors.
    Evaluate(EvaluateArgs),
    /// Print dataset statistics and candidate contribution bounds.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Trip CSV file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Field delimiter of the trip file.
    #[arg(long)]
    delimiter: Option<char>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    input: InputArgs,
    /// GeoJSON FeatureCollection of tiles with a `tile_id` property.
    #[arg(long)]
    tessellation: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// user, item or off.
    #[arg(long)]
    privacy_mode: Option<PrivacyMode>,
    /// A positive integer or `unbounded`.
    #[arg(long)]
    max_trips_per_user: Option<ContributionBound>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file mapping measure ids to {min, max, bin_width}.
    #[arg(long)]
    bins: Option<PathBuf>,
    /// `all` or a comma-separated list of measure ids.
    #[arg(long)]
    measures: Option<String>,
    /// HTML output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON output path.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    tessellation: Option<PathBuf>,
    /// `auto` or a comma-separated list of bounds.
    #[arg(long)]
    m_candidates: Option<String>,
    /// Comma-separated list of budgets; may be empty.
    #[arg(long)]
    epsilons: Option<String>,
    /// Also run the noise-free baseline.
    #[arg(long)]
    include_without_dp: bool,
    #[arg(long)]
    repetitions: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// user or item.
    #[arg(long)]
    privacy_mode: Option<PrivacyMode>,
    /// Per-run error CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mean/SD CSV; defaults to `<out stem>_aggregate.csv`.
    #[arg(long)]
    out_aggregate: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
}

/// Contents of a `--config` file. Keys mirror the long flags with
/// underscores; a few settings exist only here.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    input: Option<PathBuf>,
    delimiter: Option<char>,
    columns: Option<ColumnMapping>,
    tessellation: Option<PathBuf>,
    epsilon: Option<f64>,
    epsilon_overrides: Option<BTreeMap<String, f64>>,
    privacy_mode: Option<PrivacyMode>,
    max_trips_per_user: Option<ContributionBound>,
    seed: Option<u64>,
    bins: Option<PathBuf>,
    measures: Option<String>,
    out: Option<PathBuf>,
    out_json: Option<PathBuf>,
    time_windows: Option<Vec<TimeWindow>>,
    entropy_normalized: Option<bool>,
    time_range: Option<[NaiveDate; 2]>,
    m_candidates: Option<String>,
    epsilons: Option<String>,
    include_without_dp: Option<bool>,
    repetitions: Option<u32>,
    out_aggregate: Option<PathBuf>,
}

const DEFAULT_SEED: u64 = 0;

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn warn(&mut self, msg: &str) {
        let _ = writeln!(self.err, "warning: {msg}");
    }
}

enum Failure {
    Usage(clap::Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn missing(flag: &str) -> Failure {
    Failure::Usage(Cli::command().error(
        ErrorKind::MissingRequiredArgument,
        format!("the following required argument was not provided: --{flag}"),
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let reader = open(path).map_err(|e| Error::Config(format!("config file: {e}")))?;
    serde_json::from_reader(reader).map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))
}

fn load_dataset(input: &InputArgs, file: &FileConfig, io: &mut Io) -> CliResult<Dataset> {
    let path = input.input.clone().or(file.input.clone()).ok_or_else(|| missing("input"))?;
    let delimiter = input.delimiter.or(file.delimiter).unwrap_or(',');
    if !delimiter.is_ascii() {
        return Err(Error::Config(format!("delimiter `{delimiter}` is not a single-byte character")).into());
    }
    let options = ParseOptions {
        columns: file.columns.clone().unwrap_or_default(),
        delimiter: delimiter as u8,
    };
    let parsed = parse_trips(open(&path)?, &options)?;
    if let Some(first) = parsed.rejections.first() {
        io.warn(&format!(
            "skipped {} invalid row(s); first at line {}: {}",
            parsed.rejections.len(),
            first.line,
            first.reason
        ));
    }
    Ok(parsed.dataset)
}

fn load_tiles(flag: &Option<PathBuf>, file: &FileConfig, io: &mut Io) -> CliResult<Tessellation> {
    let path = flag.clone().or(file.tessellation.clone()).ok_or_else(|| missing("tessellation"))?;
    let loaded = load_tessellation(open(&path)?)?;
    if let Some(first) = loaded.rejections.first() {
        io.warn(&format!(
            "skipped {} invalid tile(s); first is feature {}: {}",
            loaded.rejections.len(),
            first.feature,
            first.reason
        ));
    }
    Ok(loaded.tessellation)
}

fn cmd_report(args: ReportArgs, file: FileConfig, io: &mut Io) -> CliResult<()> {
    let mode = args.privacy_mode.or(file.privacy_mode).unwrap_or_default();
    let epsilon = args.epsilon.or(file.epsilon);
    let overrides = file.epsilon_overrides.clone().unwrap_or_default();
    let (out_html, out_json) = (args.out.or(file.out.clone()), args.out_json.or(file.out_json.clone()));
    if out_html.is_none() && out_json.is_none() {
        return Err(missing("out"));
    }
    let mut bins = BTreeMap::new();
    if let Some(path) = args.bins.or(file.bins.clone()) {
        bins = load_bins(open(&path).map_err(|e| Error::Config(format!("bins file: {e}")))?)?;
    }
    let mut config = ReportConfig {
        epsilon,
        epsilon_overrides: overrides,
        privacy_mode: mode,
        max_trips_per_user: args.max_trips_per_user.or(file.max_trips_per_user).unwrap_or_default(),
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        measures: parse_measure_selection(args.measures.as_deref().or(file.measures.as_deref()).unwrap_or("all"))?,
        bins,
        time_windows: file.time_windows.clone(),
        entropy_normalized: file.entropy_normalized.unwrap_or(true),
        time_range: file.time_range,
    };
    if mode == PrivacyMode::WithoutDp {
        if epsilon.is_some() || !config.epsilon_overrides.is_empty() {
            io.warn("--privacy-mode off ignores --epsilon");
        }
        config.epsilon = None;
        config.epsilon_overrides.clear();
    } else if args.epsilon.is_some() && !config.epsilon_overrides.is_empty() {
        io.warn("--epsilon replaces the epsilon overrides from the config file");
        config.epsilon_overrides.clear();
    }
    // Fail on configuration problems before touching the data.
    crate::report::allocate_budget(&config)?;

    let dataset = load_dataset(&args.input, &file, io)?;
    let tiles = load_tiles(&args.tessellation, &file, io)?;
    let report = generate_report(&dataset, &tiles, &config)?;
    let mut written = Vec::new();
    if let Some(path) = &out_html {
        let mut w = create(path)?;
        w.write_all(&render_html(&report)).map_err(Error::Io)?;
        w.flush().map_err(Error::Io)?;
        written.push(path.display().to_string());
    }
    if let Some(path) = &out_json {
        let mut w = create(path)?;
        w.write_all(&serialize_json(&report)).map_err(Error::Io)?;
        w.flush().map_err(Error::Io)?;
        written.push(path.display().to_string());
    }
    let eps = match (mode, config.epsilon) {
        (PrivacyMode::WithoutDp, _) => "off".to_string(),
        (_, Some(e)) => e.to_string(),
        (_, None) => "per-release".to_string(),
    };
    let _ = writeln!(
        io.out,
        "read {} trips, retained {} after bounding, epsilon {eps}, M {}, mode {mode}, wrote {}",
        report.trips_read,
        report.trips_retained,
        config.max_trips_per_user,
        written.join(", ")
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("invalid {what} `{p}`"))))
        .collect()
}

fn aggregate_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "errors".into());
    out.with_file_name(format!("{stem}_aggregate.csv"))
}

fn cmd_evaluate(args: EvaluateArgs, file: FileConfig, io: &mut Io) -> CliResult<()> {
    let out = args.out.or(file.out.clone()).ok_or_else(|| missing("out"))?;
    let out_aggregate = args.out_aggregate.or(file.out_aggregate.clone()).unwrap_or_else(|| aggregate_path(&out));
    let epsilons: Vec<f64> = parse_list(
        args.epsilons.as_deref().or(file.epsilons.as_deref()).unwrap_or("0.01,0.1,1,10,100"),
        "epsilon",
    )?;
    let m_spec = args.m_candidates.or(file.m_candidates.clone()).unwrap_or_else(|| "auto".into());
    let mut config = ExperimentConfig {
        m_candidates: Vec::new(),
        epsilons,
        include_without_dp: args.include_without_dp || file.include_without_dp.unwrap_or(false),
        repetitions: args.repetitions.or(file.repetitions).unwrap_or(10),
        seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        privacy_mode: args.privacy_mode.or(file.privacy_mode).unwrap_or_default(),
    };
    if !m_spec.trim().eq_ignore_ascii_case("auto") {
        config.m_candidates = parse_list(&m_spec, "M candidate")?;
    } else {
        // Placeholder so the rest of the grid is checked before loading data.
        config.m_candidates = vec![1];
    }
    config.validate()?;

    let dataset = load_dataset(&args.input, &file, io)?;
    let tiles = load_tiles(&args.tessellation, &file, io)?;
    if m_spec.trim().eq_ignore_ascii_case("auto") {
        config.m_candidates = propose_bounds(&dataset)?;
    }
    let result = run_experiment(&dataset, &tiles, &config)?;
    let mut w = create(&out)?;
    write_errors_csv(&result.records, &mut w)?;
    w.flush().map_err(Error::Io)?;
    let mut w = create(&out_aggregate)?;
    write_aggregate_csv(&result.aggregates, &mut w)?;
    w.flush().map_err(Error::Io)?;
    let settings = config.settings().len();
    let _ = writeln!(
        io.out,
        "grid: {} M value(s) x {} epsilon setting(s) x {} repetition(s) = {} runs; wrote {}, {}",
        config.m_candidates.len(),
        settings,
        config.repetitions,
        config.total_runs(),
        out.display(),
        out_aggregate.display()
    );
    Ok(())
}

fn cmd_stats(args: StatsArgs, file: FileConfig, io: &mut Io) -> CliResult<()> {
    let dataset = load_dataset(&args.input, &file, io)?;
    let stats = dataset_stats(&dataset)?;
    let d = &stats.trips_per_user;
    let candidates = propose_bounds(&dataset)?;
    let list = candidates.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
    let _ = writeln!(
        io.out,
        "Trip count: {}\nUser count: {}\nTrips per user: min {}, median {}, mean {:.2}, sd {:.2}, max {}\nProposed M candidates: {list}",
        stats.trip_count,
        stats.user_count,
        d.min(),
        d.median(),
        d.mean(),
        d.std_dev(),
        d.max()
    );
    Ok(())
}

/// Runs the command line on `args` (program name first) and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut io = Io { out, err };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => return report_usage(&e, &mut io),
    };
    let file = match read_config(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => return report_error(&e, &mut io),
    };
    let outcome = match cli.command {
        Command::Report(a) => cmd_report(a, file, &mut io),
        Command::Evaluate(a) => cmd_evaluate(a, file, &mut io),
        Command::Stats(a) => cmd_stats(a, file, &mut io),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(e)) => report_usage(&e, &mut io),
        Err(Failure::Run(e)) => report_error(&e, &mut io),
    }
}

fn report_usage(e: &clap::Error, io: &mut Io) -> i32 {
    let text = e.render().to_string();
    if e.use_stderr() {
        let _ = write!(io.err, "{text}");
        EXIT_CONFIG
    } else {
        let _ = write!(io.out, "{text}");
        EXIT_OK
    }
}

fn report_error(e: &Error, io: &mut Io) -> i32 {
    let _ = writeln!(io.err, "error: {e}");
    if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_DATA
    }
}
