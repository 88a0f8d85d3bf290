//! `dsi` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid archive content or failed computation,
//! 2 usage error, 3 I/O error. The environment variable `DSI_THREADS` caps
//! worker threads (`0` or unset means one per core).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dsi_core::analysis::{eps_grid, model_hint, sweep_with, DEFAULT_HINT_HIGH, DEFAULT_HINT_LOW};
use dsi_core::clustering::DEFAULT_DENSE_CAP;
use dsi_core::vcr::{dataset_vcr_with, prune_with, DEFAULT_ALPHA, DEFAULT_EPS};
use dsi_core::{
    apply_prune, load_dataset, render_report, similarity_matrix, validate, write_dataset,
    AnalysisError, ClusterOptions, DatasetFeatures, EpsPolicy, Metric, MetricError, PruneManifest,
    Report, ReportFormat, StoreError, VcrError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const THREADS_ENV: &str = "DSI_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "dsi",
    version,
    about = "Dataset structural index over feature archives"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an archive and list every problem found
    Validate {
        root: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Class similarity matrix (cosine distance between class centroids)
    Simmat {
        root: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Variety contribution ratio per class
    Vcr {
        root: PathBuf,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a manifest of redundant samples to remove
    Prune {
        root: PathBuf,
        /// Where to write the prune manifest (JSON)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        threshold: ThresholdArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write a new archive keeping only the samples a manifest keeps
    ApplyPrune {
        root: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for the pruned archive
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// VCR of one class over a grid of thresholds
    Sweep {
        root: PathBuf,
        #[arg(long = "class")]
        class: String,
        /// start:stop:step, inclusive of stop
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        grid: Grid,
        #[arg(long, default_value_t = Metric::Cosine, value_parser = parse_metric)]
        metric: Metric,
        #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
        dense_cap: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Suggest model capacity from the class similarity matrix
    Hint {
        root: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HINT_LOW, value_parser = parse_positive, allow_hyphen_values = true)]
        low: f64,
        #[arg(long, default_value_t = DEFAULT_HINT_HIGH, value_parser = parse_positive, allow_hyphen_values = true)]
        high: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// csv, json or markdown
    #[arg(long, default_value = "markdown", value_parser = parse_format)]
    pub format: ReportFormat,
    /// Write the report to this file instead of standard output
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Cosine-distance threshold under which samples are redundant
    #[arg(long, default_value_t = DEFAULT_EPS, value_parser = parse_positive, allow_hyphen_values = true)]
    pub eps: f64,
    /// Tighten eps for classes close to another class: min(eps, alpha * nearest)
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = DEFAULT_ALPHA, value_parser = parse_alpha, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = Metric::Cosine, value_parser = parse_metric)]
    pub metric: Metric,
    /// Classes above this size are clustered without a stored distance matrix
    #[arg(long, default_value_t = DEFAULT_DENSE_CAP)]
    pub dense_cap: usize,
}

impl ThresholdArgs {
    fn policy(&self) -> EpsPolicy {
        if self.adaptive {
            EpsPolicy::Adaptive {
                base_eps: self.eps,
                alpha: self.alpha,
            }
        } else {
            EpsPolicy::fixed(self.eps)
        }
    }

    fn cluster_options(&self) -> ClusterOptions {
        ClusterOptions {
            metric: self.metric,
            dense_cap: self.dense_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be a positive finite number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let v = parse_positive(s)?;
    if v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must be in (0, 1], got {v}"))
    }
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse()
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err("expected start:stop:step".into());
    };
    let grid = Grid {
        start: parse_positive(a)?,
        stop: parse_positive(b)?,
        step: parse_positive(c)?,
    };
    if grid.stop < grid.start {
        return Err("stop must not be below start".into());
    }
    Ok(grid)
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) | Failure::Io(m) => m,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Failure {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Failure {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

impl From<VcrError> for Failure {
    fn from(e: VcrError) -> Failure {
        Failure::Invalid(e.to_string())
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Failure {
        Failure::Invalid(e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Failure {
        match e {
            AnalysisError::InvalidThresholds { .. } | AnalysisError::GridNotIncreasing(..) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Invalid(other.to_string()),
        }
    }
}

/// Parses `args` (program name first) and executes the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
            } else {
                let _ = stdout.write_all(text.as_bytes());
            }
            return code;
        }
    };

    let result = thread_pool().and_then(|pool| pool.install(|| execute(&config.command)));
    match result {
        Ok((text, output, code)) => match emit(&text, output, stdout) {
            Ok(()) => code,
            Err(f) => report_failure(&f, stderr),
        },
        Err(f) => report_failure(&f, stderr),
    }
}

fn report_failure(f: &Failure, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "dsi: error: {}", f.message());
    f.code()
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map_err(|_| {
            Failure::Usage(format!(
                "{THREADS_ENV} must be a non-negative integer, got {v:?}"
            ))
        })?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Io(format!("cannot start worker threads: {e}")))
}

fn emit(text: &str, output: &OutputArgs, stdout: &mut dyn Write) -> Result<(), Failure> {
    match &output.report {
        Some(path) => fs::write(path, text).map_err(|e| Failure::io(path, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("standard output: {e}"))),
    }
}

fn render<R: Report>(r: &R, output: &OutputArgs) -> String {
    render_report(r, output.format)
}

fn load(root: &Path) -> Result<DatasetFeatures, Failure> {
    Ok(load_dataset(root)?)
}

fn execute(command: &Command) -> Result<(String, &OutputArgs, i32), Failure> {
    match command {
        Command::Validate { root, output } => {
            let report = validate(root)?;
            let code = if report.is_valid() {
                EXIT_OK
            } else {
                EXIT_INVALID
            };
            Ok((render(&report, output), output, code))
        }
        Command::Simmat { root, output } => {
            let m = similarity_matrix(&load(root)?)?;
            Ok((render(&m, output), output, EXIT_OK))
        }
        Command::Vcr {
            root,
            threshold,
            output,
        } => {
            let ds = load(root)?;
            let report = dataset_vcr_with(&ds, threshold.policy(), &threshold.cluster_options())?;
            Ok((render(&report, output), output, EXIT_OK))
        }
        Command::Prune {
            root,
            out,
            threshold,
            output,
        } => {
            let ds = load(root)?;
            let manifest = prune_with(&ds, threshold.policy(), &threshold.cluster_options())?;
            fs::write(out, manifest.to_json()).map_err(|e| Failure::io(out, e))?;
            Ok((render(&manifest, output), output, EXIT_OK))
        }
        Command::ApplyPrune {
            root,
            manifest,
            out,
            output,
        } => {
            let ds = load(root)?;
            let text = fs::read_to_string(manifest).map_err(|e| Failure::io(manifest, e))?;
            let m: PruneManifest = serde_json::from_str::<PruneManifest>(&text)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", manifest.display())))?;
            let pruned = apply_prune(&ds, &m)?;
            write_dataset(&pruned, out)?;
            let report = validate(out)?;
            let code = if report.is_valid() {
                EXIT_OK
            } else {
                EXIT_INVALID
            };
            Ok((render(&report, output), output, code))
        }
        Command::Sweep {
            root,
            class,
            grid,
            metric,
            dense_cap,
            output,
        } => {
            let ds = load(root)?;
            let cfs = ds
                .class(class)
                .ok_or_else(|| Failure::Usage(format!("no class named {class:?} in archive")))?;
            let values = eps_grid(grid.start, grid.stop, grid.step);
            let opts = ClusterOptions {
                metric: *metric,
                dense_cap: *dense_cap,
            };
            let curve = sweep_with(cfs, &values, &opts)?;
            Ok((render(&curve, output), output, EXIT_OK))
        }
        Command::Hint {
            root,
            low,
            high,
            output,
        } => {
            if low >= high {
                return Err(Failure::Usage(format!(
                    "--low ({low}) must be below --high ({high})"
                )));
            }
            let m = similarity_matrix(&load(root)?)?;
            let hint = model_hint(&m, *low, *high)?;
            Ok((render(&hint, output), output, EXIT_OK))
        }
    }
}
