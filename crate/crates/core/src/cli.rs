//! Command-line front end. Exit codes: 0 success, 2 configuration,
//! 3 runtime stage failure, 4 I/O.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{PipelineConfig, Protocol};
use crate::domain::Channel;
use crate::error::Error;
use crate::learn::{Grid, ModelKind, ModelSpec};
use crate::pipeline::{self, Stage, StageError};
use crate::synthgen::{generate_dataset, SynthConfig};
use crate::telemetry::{read_csv, serve_stream, write_csv, Ingester, LinkConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "breath-har", version, about = "Activity recognition from exhaled-breath temperature and humidity")]
pub struct Cli {
    /// Pipeline configuration (TOML). Flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Top-level seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Target sampling rate in Hz.
    #[arg(long, global = true)]
    pub sampling_hz: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct InOut {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled synthetic sessions as CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        subjects: u32,
        #[arg(long, default_value_t = 1800.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 0.0)]
        outlier_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        gap_rate: f64,
        /// Disable measurement noise.
        #[arg(long)]
        noise_free: bool,
    },
    /// Stream a CSV session to an ingester over TCP as NDJSON.
    Serve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        connect: String,
        #[arg(long, default_value_t = 0.0)]
        drop_probability: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter_ms: f64,
        /// Pace records at real time divided by this factor; omit to send at once.
        #[arg(long)]
        time_scale: Option<f64>,
    },
    /// Accept telemetry sessions and write one CSV per device.
    Ingest {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        out: PathBuf,
        /// Stop after this many sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Outlier removal and 1/sampling_hz grid alignment.
    Preprocess(InOut),
    /// Low-pass, wavelet bank and envelope on cleaned series.
    Filter(InOut),
    /// STL decomposition of cleaned series.
    Decompose {
        #[command(flatten)]
        io: InOut,
        /// Seasonal period in samples.
        #[arg(long)]
        period: Option<usize>,
    },
    /// Statistics, breath peaks and correlation of cleaned series.
    Analyze(InOut),
    /// Extract features, evaluate and fit a model on cleaned series.
    Train {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        model: Option<ModelKind>,
        /// Hyperparameter grid: inline JSON object or path to a JSON file.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, value_parser = parse_protocol)]
        protocol: Option<Protocol>,
    },
    /// Score a saved model on cleaned series.
    Evaluate {
        #[command(flatten)]
        io: InOut,
        #[arg(long)]
        model: PathBuf,
    },
    /// Render report.html and SVG plots from an artifacts directory.
    Report {
        #[arg(long)]
        artifacts: PathBuf,
    },
    /// Full pipeline from raw CSVs to report and manifest.
    Run(InOut),
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    match s {
        "cv" => Ok(Protocol::Cv),
        "holdout" => Ok(Protocol::Holdout),
        other => Err(format!("unknown protocol `{other}` (cv|holdout)")),
    }
}

/// Error classified for an exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Stage(StageError),
    Plain(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => f.write_str(m),
            CliError::Stage(e) => e.fmt(f),
            CliError::Plain(e) => e.fmt(f),
        }
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidParameter { .. } => EXIT_CONFIG,
        Error::Io { .. } | Error::Transport(_) => EXIT_IO,
        _ => EXIT_RUNTIME,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Stage(e) if e.stage == Stage::Config => EXIT_CONFIG,
            CliError::Stage(e) => match exit_code_for(&e.source) {
                EXIT_IO => EXIT_IO,
                EXIT_CONFIG if matches!(e.source, Error::InvalidConfig(_)) => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            },
            CliError::Plain(e) => exit_code_for(e),
        }
    }
}

impl From<StageError> for CliError {
    fn from(e: StageError) -> Self {
        CliError::Stage(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Plain(e)
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => CliError::Plain(e),
            other => CliError::Config(other.to_string()),
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(fs) = cli.sampling_hz {
        if cli.config.is_none() {
            cfg.filter = crate::config::FilterSection::for_sampling(fs);
        }
        cfg.sampling_hz = fs;
    }
    Ok(cfg)
}

fn checked(cfg: PipelineConfig) -> Result<PipelineConfig, CliError> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn parse_grid(arg: &str) -> Result<Grid, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| CliError::Plain(Error::io(arg, e)))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("grid: {e}")))
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Plain(Error::io(dir, e)))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth { out, subjects, duration_s, outlier_rate, gap_rate, noise_free } => {
            let cfg = checked(cfg)?;
            let mut synth = SynthConfig {
                duration_s,
                sampling_hz: cfg.sampling_hz,
                outlier_rate,
                gap_rate,
                seed: cfg.seed,
                ..Default::default()
            };
            if noise_free {
                synth = synth.noise_free();
            }
            synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
            ensure_dir(&out)?;
            let sessions = generate_dataset(&cfg.activities, subjects, &synth)?;
            let mut truth = serde_json::Map::new();
            for s in &sessions {
                write_csv(&s.series, out.join(format!("{}.csv", s.series.device_id)))?;
                truth.insert(
                    s.series.device_id.clone(),
                    serde_json::json!({ "truth": s.truth, "anomalies": s.anomalies }),
                );
            }
            let path = out.join("synth_truth.json");
            std::fs::write(&path, serde_json::to_string_pretty(&truth).map_err(Error::from)? + "\n")
                .map_err(|e| Error::io(&path, e))?;
            log::info!("wrote {} sessions to {}", sessions.len(), out.display());
        }
        Command::Serve { input, connect, drop_probability, jitter_ms, time_scale } => {
            let link = LinkConfig { drop_probability, max_jitter_ms: jitter_ms, seed: cfg.seed };
            link.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if time_scale.is_some_and(|s| !(s > 0.0)) {
                return Err(CliError::Config("time_scale must be > 0".into()));
            }
            let series = read_csv(&input)?;
            let summary = serve_stream(&series, &link, connect.as_str(), time_scale).map_err(Error::from)?;
            print_json(&summary);
        }
        Command::Ingest { listen, out, sessions } => {
            ensure_dir(&out)?;
            let ingester = Ingester::bind(listen.as_str())?;
            log::info!("listening on {}", ingester.local_addr()?);
            let mut failed = None;
            for r in ingester.run(&out, sessions)? {
                match r {
                    Ok(report) => print_json(&report),
                    Err(e) => {
                        log::error!("session failed: {e}");
                        failed = Some(e);
                    }
                }
            }
            if let Some(e) = failed {
                return Err(e.into());
            }
        }
        Command::Preprocess(io) => {
            let cfg = checked(cfg)?;
            let raw = pipeline::load_series(&io.input, &cfg, false)?;
            pipeline::preprocess_stage(&cfg, &raw, &io.out)?;
        }
        Command::Filter(io) => {
            let cfg = checked(cfg)?;
            let series = pipeline::load_series(&io.input, &cfg, false)?;
            pipeline::filter_stage(&cfg, &series, &io.out)?;
        }
        Command::Decompose { io, period } => {
            if period.is_some() {
                cfg.stl.period_samples = period;
            }
            let cfg = checked(cfg)?;
            let series = pipeline::load_series(&io.input, &cfg, false)?;
            pipeline::decompose_stage(&cfg, &series, &io.out)?;
        }
        Command::Analyze(io) => {
            let cfg = checked(cfg)?;
            let series = pipeline::load_series(&io.input, &cfg, false)?;
            ensure_dir(&io.out)?;
            let a = pipeline::analyze_stage(&cfg, &series, &io.out)?;
            for s in &a.series {
                if s.channel == Channel::Temperature {
                    println!("{} {} peaks={} rate={:.3} Hz", s.device_id, s.activity, s.peak_count, s.breath_rate_hz);
                }
            }
        }
        Command::Train { io, model, grid, folds, protocol } => {
            if let Some(kind) = model {
                if kind != cfg.model.kind() {
                    cfg.model = ModelSpec::default_for(kind);
                }
            }
            if let Some(g) = grid {
                cfg.evaluation.grid = Some(parse_grid(&g)?);
            }
            if let Some(f) = folds {
                cfg.evaluation.folds = f;
            }
            if let Some(p) = protocol {
                cfg.evaluation.protocol = p;
            }
            let cfg = checked(cfg)?;
            let series = pipeline::load_series(&io.input, &cfg, false)?;
            ensure_dir(&io.out)?;
            let outcome = pipeline::learn_stage(&cfg, &series, &io.out)?;
            println!("{}: accuracy {:.4}", outcome.evaluation.description, outcome.evaluation.report.accuracy);
        }
        Command::Evaluate { io, model } => {
            let cfg = checked(cfg)?;
            let series = pipeline::load_series(&io.input, &cfg, false)?;
            ensure_dir(&io.out)?;
            let doc = pipeline::evaluate_stage(&cfg, &model, &series, &io.out)?;
            println!("accuracy {:.4} over {} windows", doc.report.accuracy, doc.windows);
        }
        Command::Report { artifacts } => {
            crate::report::render_report(&artifacts)?;
        }
        Command::Run(io) => {
            let cfg = checked(cfg)?;
            let summary = pipeline::run_pipeline(&cfg, &io.input, &io.out)?;
            println!(
                "{} series; {}: accuracy {:.4}",
                summary.series, summary.evaluation.description, summary.evaluation.report.accuracy
            );
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
