//! `featpress` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 malformed data, 3 I/O failure.
//! Diagnostics go to stderr; stdout carries data only.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use featpress_core::codec::{self, read_header, seal, unpack};
use featpress_core::experiment::{
    config_grid, operating_region, report_csv, run_config, run_config_grouped, sweep, sweep_grouped,
    write_report, EvalOptions, FittedPipeline, PipelineConfig, ReportOptions,
};
use featpress_core::forest::{F1Average, ForestParams, MaxFeatures};
use featpress_core::quantizer::{decode, decode_like, encode};
use featpress_core::selector::rank_features;
use featpress_core::tabular::{
    canonical_csv, load_csv, parse_csv, stratified_split, synth_generate, to_csv_string, write_csv,
    CsvColumns, FeatureTable, SynthSpec,
};

// Aliases keep clap from treating these as optional or repeated arguments;
// `none` is parsed explicitly.
type MaybeU32 = Option<u32>;
type MaybeUsize = Option<usize>;
type MaybeF64 = Option<f64>;
type ListU32 = Vec<Option<u32>>;
type ListUsize = Vec<Option<usize>>;
type ListF64 = Vec<Option<f64>>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "featpress", version, about = "Task-aware lossy compression of traffic feature logs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic feature log as CSV
    Synth(SynthArgs),
    /// Stratified train/test split of a CSV feature log
    Split(SplitArgs),
    /// Quantize a CSV feature log into an .nfq container
    Compress(CompressArgs),
    /// Decode an .nfq container back to CSV
    Decompress(DecompressArgs),
    /// Evaluate one pipeline configuration; prints a report row
    Eval(EvalArgs),
    /// Sweep configurations and write a tradeoff report and plot
    Sweep(SweepArgs),
    /// Print the header of an .nfq container
    Inspect(InspectArgs),
    /// Rank features by forest impurity importance
    Rank(RankArgs),
}

#[derive(Debug, Args)]
struct Columns {
    /// Column holding class labels
    #[arg(long, default_value = "label")]
    label: String,
    /// Column holding per-row timestamps in seconds [default: `timestamp` if present]
    #[arg(long)]
    timestamp: Option<String>,
    /// Column holding a group key (for example an AS number)
    #[arg(long)]
    group: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Features whose mean depends on the class
    #[arg(long, default_value_t = 20)]
    informative: usize,
    /// Features independent of the class
    #[arg(long, default_value_t = 10)]
    noise: usize,
    #[arg(long, default_value_t = 400)]
    rows_per_class: usize,
    /// Class-mean spacing in within-class standard deviations
    #[arg(long, default_value_t = 3.0)]
    separation: f64,
    /// Fraction of informative features drawn log-normally
    #[arg(long, default_value_t = 0.3)]
    heavy_tail: f64,
    /// Records per second, for the timestamp column
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV [default: stdout]
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    input: PathBuf,
    #[command(flatten)]
    columns: Columns,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Debug, Args)]
struct CompressArgs {
    input: PathBuf,
    #[command(flatten)]
    columns: Columns,
    /// Bits per stored value, 1..=32
    #[arg(long, default_value_t = 8)]
    bits: u32,
    /// PCA variance target in (0, 1], or `none`
    #[arg(long, default_value = "none", value_parser = parse_opt_f64)]
    pca: MaybeF64,
    /// Keep only the top-k features, or `none`
    #[arg(long, default_value = "none", value_parser = parse_opt_usize)]
    select_k: MaybeUsize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// DEFLATE level, 1..=9
    #[arg(long, default_value_t = codec::DEFAULT_LEVEL)]
    level: u32,
    /// Fit PCA on raw values instead of z-scores
    #[arg(long)]
    no_standardize: bool,
    /// Output .nfq; the label sidecar and manifest are written next to it
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct DecompressArgs {
    input: PathBuf,
    /// Ignore the label sidecar even if present
    #[arg(long)]
    no_sidecar: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ForestArgs {
    /// Trees per forest
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Candidate features per split: sqrt, all, or a count
    #[arg(long, default_value = "sqrt", value_parser = parse_max_features)]
    max_features: MaxFeatures,
    #[arg(long, default_value_t = 2)]
    min_samples_split: usize,
    /// Maximum tree depth, or `none`
    #[arg(long, default_value = "none", value_parser = parse_opt_usize)]
    max_depth: MaybeUsize,
}

#[derive(Debug, Args)]
struct EvalCommon {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    columns: Columns,
    #[command(flatten)]
    forest: ForestArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = codec::DEFAULT_LEVEL)]
    level: u32,
    /// F1 averaging: macro or weighted
    #[arg(long, default_value = "macro", value_parser = parse_average)]
    f1: F1Average,
    /// Seconds covered by the test split, when it has no timestamps
    #[arg(long)]
    duration: Option<f64>,
    /// Train one model per group key value
    #[arg(long)]
    per_group: bool,
    /// Fit PCA on raw values instead of z-scores
    #[arg(long)]
    no_standardize: bool,
    /// Record wall-clock time per configuration in the report
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: EvalCommon,
    /// Bits per stored value, or `none` for lossless storage
    #[arg(long, default_value = "none", value_parser = parse_opt_u32)]
    bits: MaybeU32,
    #[arg(long, default_value = "none", value_parser = parse_opt_f64)]
    pca: MaybeF64,
    #[arg(long, default_value = "none", value_parser = parse_opt_usize)]
    select_k: MaybeUsize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: EvalCommon,
    /// Comma-separated bit widths; `none` is the lossless baseline
    #[arg(long, default_value = "none,32,16,8,4,2", value_parser = parse_u32_list)]
    bits_list: ListU32,
    /// Comma-separated PCA variance targets
    #[arg(long, default_value = "none,0.99,0.8", value_parser = parse_f64_list)]
    pca_list: ListF64,
    /// Comma-separated top-k selection sizes
    #[arg(long, default_value = "none", value_parser = parse_usize_list)]
    select_list: ListUsize,
    /// Largest F1 drop allowed inside the operating region
    #[arg(long, default_value_t = 0.02)]
    epsilon: f64,
    /// Worker threads; the report does not depend on this
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Skip the SVG plot
    #[arg(long)]
    no_svg: bool,
    /// Output directory
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    input: PathBuf,
}

#[derive(Debug, Args)]
struct RankArgs {
    input: PathBuf,
    #[command(flatten)]
    columns: Columns,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV [default: stdout]
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn list<T>(s: &str, one: fn(&str) -> Result<Option<T>, String>) -> Result<Vec<Option<T>>, String> {
    s.split(',').map(|t| one(t.trim())).collect()
}

fn parse_opt_u32(s: &str) -> Result<Option<u32>, String> {
    parse_opt(s)
}

fn parse_opt_usize(s: &str) -> Result<Option<usize>, String> {
    parse_opt(s)
}

fn parse_opt_f64(s: &str) -> Result<Option<f64>, String> {
    parse_opt(s)
}

fn parse_opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, String> {
    if s == "none" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| format!("expected a number or `none`, got `{s}`"))
}

fn parse_u32_list(s: &str) -> Result<Vec<Option<u32>>, String> {
    list(s, parse_opt_u32)
}

fn parse_usize_list(s: &str) -> Result<Vec<Option<usize>>, String> {
    list(s, parse_opt_usize)
}

fn parse_f64_list(s: &str) -> Result<Vec<Option<f64>>, String> {
    list(s, parse_opt_f64)
}

fn parse_max_features(s: &str) -> Result<MaxFeatures, String> {
    match s {
        "sqrt" => Ok(MaxFeatures::Sqrt),
        "all" => Ok(MaxFeatures::All),
        n => n
            .parse()
            .map(MaxFeatures::Count)
            .map_err(|_| format!("expected sqrt, all or a count, got `{n}`")),
    }
}

fn parse_average(s: &str) -> Result<F1Average, String> {
    match s {
        "macro" => Ok(F1Average::Macro),
        "weighted" => Ok(F1Average::Weighted),
        other => Err(format!("expected macro or weighted, got `{other}`")),
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(featpress_core::Error),
    Io(PathBuf, std::io::Error),
}

impl From<featpress_core::Error> for Failure {
    fn from(e: featpress_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Core(e) if e.is_io() => EXIT_IO,
            Failure::Core(_) => EXIT_DATA,
            Failure::Io(..) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {f}");
            f.exit_code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    match command {
        Command::Synth(a) => synth(a, stdout),
        Command::Split(a) => split(a, stderr),
        Command::Compress(a) => compress(a, stderr),
        Command::Decompress(a) => decompress(a, stderr),
        Command::Eval(a) => eval(a, stdout),
        Command::Sweep(a) => run_sweep(a, stderr),
        Command::Inspect(a) => inspect(a, stdout),
        Command::Rank(a) => rank(a, stdout),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| Failure::Io(path.to_path_buf(), e))
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Io(PathBuf::from("<stdout>"), e))
}

/// Resolves the column flags against the file header: an unset timestamp
/// flag picks up a `timestamp` column when there is one.
fn csv_columns(columns: &Columns, path: &Path) -> CliResult<CsvColumns> {
    let mut cols = CsvColumns::new(columns.label.clone());
    cols.group = columns.group.clone();
    cols.timestamp = match &columns.timestamp {
        Some(t) => Some(t.clone()),
        None => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(path.to_path_buf(), e))?;
            let header = text.lines().next().unwrap_or("");
            header
                .trim_end_matches('\r')
                .split(',')
                .any(|h| h == "timestamp")
                .then(|| "timestamp".to_string())
        }
    };
    Ok(cols)
}

fn load(columns: &Columns, path: &Path) -> CliResult<(FeatureTable, CsvColumns)> {
    let cols = csv_columns(columns, path)?;
    Ok((load_csv(path, &cols)?, cols))
}

fn synth(a: SynthArgs, stdout: &mut dyn Write) -> CliResult {
    let spec = SynthSpec {
        n_classes: a.classes,
        n_informative: a.informative,
        n_noise: a.noise,
        rows_per_class: a.rows_per_class,
        separation: a.separation,
        heavy_tail_fraction: a.heavy_tail,
        record_rate_hz: a.rate,
        seed: a.seed,
    };
    let table = synth_generate(&spec)?;
    let text = to_csv_string(&table, &CsvColumns::default().timestamp("timestamp"))?;
    match a.output {
        Some(path) => write_file(&path, text.as_bytes()),
        None => emit(stdout, &text),
    }
}

fn split(a: SplitArgs, stderr: &mut dyn Write) -> CliResult {
    let (table, cols) = load(&a.columns, &a.input)?;
    let (train, test) = stratified_split(&table, a.test_fraction, a.seed)?;
    write_csv(&train, &cols, &a.train_out)?;
    write_csv(&test, &cols, &a.test_out)?;
    let _ = writeln!(stderr, "train {} rows, test {} rows", train.n_rows(), test.n_rows());
    Ok(())
}

fn sidecar_path(nfq: &Path) -> PathBuf {
    let mut s = nfq.as_os_str().to_owned();
    s.push(".labels.csv");
    PathBuf::from(s)
}

fn manifest_path(nfq: &Path) -> PathBuf {
    let mut s = nfq.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct Manifest<'a> {
    source: String,
    label: &'a str,
    timestamp: Option<&'a str>,
    group: Option<&'a str>,
    rows: usize,
    level: u32,
    config: &'a PipelineConfig,
    fitted: &'a FittedPipeline,
}

/// Label sidecar: the designated columns only, as a zero-feature CSV.
fn sidecar_csv(table: &FeatureTable, cols: &CsvColumns) -> CliResult<String> {
    let empty = table.with_features(Vec::new(), Vec::new())?;
    Ok(to_csv_string(&empty, cols)?)
}

fn compress(a: CompressArgs, stderr: &mut dyn Write) -> CliResult {
    let (table, cols) = load(&a.columns, &a.input)?;
    let config = PipelineConfig::baseline(a.seed)
        .with_bits(Some(a.bits))
        .with_pca(a.pca)
        .with_selection(a.select_k);
    let options = EvalOptions {
        standardize_pca: !a.no_standardize,
        ..EvalOptions::default()
    };
    let (fitted, stage) = FittedPipeline::fit(&table, &config, &options)?;
    let ranges = fitted.ranges.as_ref().expect("bits are set");
    let codes = encode(&stage, ranges, a.bits)?;
    let sealed = seal(&codec::pack(&codes, ranges)?, a.level)?;
    write_file(&a.output, &sealed)?;
    write_file(&sidecar_path(&a.output), sidecar_csv(&table, &cols)?.as_bytes())?;
    let manifest = Manifest {
        source: a.input.display().to_string(),
        label: &cols.label,
        timestamp: cols.timestamp.as_deref(),
        group: cols.group.as_deref(),
        rows: table.n_rows(),
        level: a.level,
        config: &config,
        fitted: &fitted,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path(&a.output), json.as_bytes())?;
    let _ = writeln!(
        stderr,
        "{}: {} rows x {} features at {} bits, {} bytes",
        a.output.display(),
        stage.n_rows(),
        stage.n_features(),
        a.bits,
        sealed.len()
    );
    Ok(())
}

fn decompress(a: DecompressArgs, stderr: &mut dyn Write) -> CliResult {
    let bytes = fs::read(&a.input).map_err(|e| Failure::Io(a.input.clone(), e))?;
    let container = codec::open(&bytes)?;
    let (codes, ranges) = unpack(&container)?;
    let sidecar = sidecar_path(&a.input);
    let text = if !a.no_sidecar && sidecar.exists() {
        let side = fs::read_to_string(&sidecar).map_err(|e| Failure::Io(sidecar.clone(), e))?;
        let cols = sidecar_columns(&a.input, &side);
        let labels = parse_csv(&side, &cols)?;
        let table = decode_like(&codes, &ranges, &labels)?;
        to_csv_string(&table, &cols)?
    } else {
        canonical_csv(&decode(&codes, &ranges)?)
    };
    write_file(&a.output, text.as_bytes())?;
    let _ = writeln!(stderr, "{}: {} rows", a.output.display(), codes.n_rows());
    Ok(())
}

/// Column roles for the sidecar, from the manifest when it exists; otherwise
/// the first sidecar column is taken as the label and the rest are ignored.
fn sidecar_columns(nfq: &Path, sidecar: &str) -> CsvColumns {
    let field = |v: &serde_json::Value, k: &str| v.get(k).and_then(|x| x.as_str()).map(String::from);
    if let Some(v) = fs::read_to_string(manifest_path(nfq))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
    {
        if let Some(label) = field(&v, "label") {
            let mut cols = CsvColumns::new(label);
            cols.timestamp = field(&v, "timestamp");
            cols.group = field(&v, "group");
            return cols;
        }
    }
    let first = sidecar.lines().next().unwrap_or("").split(',').next().unwrap_or("label");
    CsvColumns::new(first)
}

fn forest_params(f: &ForestArgs, seed: u64) -> ForestParams {
    ForestParams {
        n_trees: f.trees,
        max_features: f.max_features,
        min_samples_split: f.min_samples_split,
        max_depth: f.max_depth,
        bootstrap: true,
        seed,
    }
}

fn eval_inputs(c: &EvalCommon, jobs: Option<usize>) -> CliResult<(FeatureTable, FeatureTable, EvalOptions)> {
    let (train, _) = load(&c.columns, &c.train)?;
    let (test, _) = load(&c.columns, &c.test)?;
    let options = EvalOptions {
        level: c.level,
        average: c.f1,
        duration_seconds: c.duration,
        standardize_pca: !c.no_standardize,
        jobs,
    };
    Ok((train, test, options))
}

fn eval(a: EvalArgs, stdout: &mut dyn Write) -> CliResult {
    let c = &a.common;
    let (train, test, options) = eval_inputs(c, None)?;
    let config = PipelineConfig::baseline(c.seed)
        .with_forest(forest_params(&c.forest, c.seed))
        .with_bits(a.bits)
        .with_pca(a.pca)
        .with_selection(a.select_k);
    let point = if c.per_group {
        run_config_grouped(&train, &test, &config, &options)?
    } else {
        run_config(&train, &test, &config, &options)?
    };
    emit(stdout, &report_csv(&[point], c.timing))
}

fn run_sweep(a: SweepArgs, stderr: &mut dyn Write) -> CliResult {
    let c = &a.common;
    if a.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let (train, test, options) = eval_inputs(c, Some(a.jobs))?;
    let configs = config_grid(
        &a.select_list,
        &a.pca_list,
        &a.bits_list,
        &forest_params(&c.forest, c.seed),
        c.seed,
    );
    let points = if c.per_group {
        sweep_grouped(&train, &test, &configs, &options)?
    } else {
        sweep(&train, &test, &configs, &options)?
    };
    let region = match operating_region(&points, a.epsilon) {
        Ok(r) => Some(r),
        Err(e) => {
            let _ = writeln!(stderr, "no operating region: {e}");
            None
        }
    };
    let files = write_report(
        &points,
        region.as_ref(),
        &a.output,
        ReportOptions {
            svg: !a.no_svg,
            timing: c.timing,
        },
    )?;
    if let Some(r) = &region {
        let _ = writeln!(
            stderr,
            "operating region (epsilon {}): {} of {} configurations, reduction {:.2}x to {:.2}x",
            r.epsilon,
            r.members.len(),
            points.len(),
            r.min_reduction,
            r.max_reduction
        );
    }
    let _ = writeln!(stderr, "wrote {}", files.csv.display());
    Ok(())
}

fn inspect(a: InspectArgs, stdout: &mut dyn Write) -> CliResult {
    let bytes = fs::read(&a.input).map_err(|e| Failure::Io(a.input.clone(), e))?;
    let h = read_header(&bytes)?;
    let mut out = String::new();
    out.push_str(&format!("version: {}\n", h.version));
    out.push_str(&format!("bits: {}\n", h.bits));
    out.push_str(&format!("rows: {}\n", h.n_rows));
    out.push_str(&format!("features: {}\n", h.ranges.len()));
    out.push_str(&format!("header_bytes: {}\n", h.header_bytes));
    out.push_str(&format!("payload_raw_bytes: {}\n", h.payload_raw_len));
    out.push_str(&format!("payload_compressed_bytes: {}\n", h.payload_compressed_len));
    out.push_str(&format!("file_bytes: {}\n", bytes.len()));
    out.push_str("name,lo,hi\n");
    for (j, name) in h.ranges.feature_names().iter().enumerate() {
        out.push_str(&format!("{name},{},{}\n", h.ranges.lo()[j], h.ranges.hi()[j]));
    }
    emit(stdout, &out)
}

fn rank(a: RankArgs, stdout: &mut dyn Write) -> CliResult {
    let (table, _) = load(&a.columns, &a.input)?;
    let ranking = rank_features(&table, a.seed)?;
    match a.output {
        Some(path) => Ok(ranking.write_csv(&path)?),
        None => emit(stdout, &ranking.to_csv()),
    }
}
