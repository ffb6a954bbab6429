//! Batch pipeline: preprocess, filter, decompose, analyze, learn, report.
//!
//! Artifact layout under the output directory:
//!
//! ```text
//! cleaned/<device>.csv          cleaning.json
//! filtered/<device>.csv  filtered/<device>_<channel>.svg
//! decomposed/<device>_<channel>.csv
//! peaks.csv  stats.csv  correlation.csv  analysis.json
//! features.csv  model.json  eval_report.json  confusion.csv  label_verification.json  [grid.json]
//! report.html  plots/*.svg
//! manifest.json                 (FAILED instead when a stage aborts)
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::breath_analysis::{
    breath_peaks, cross_activity_channels, pearson_matrix, summarize, CorrelationMatrix, PeakSet, StatsSummary,
};
use crate::config::{PipelineConfig, Protocol};
use crate::domain::{default_profiles, ActivityLabel, ActivityProfile, Channel, LabeledSeries};
use crate::dsp::run_chain;
use crate::error::{Error, Result};
use crate::learn::{
    cross_validate, extract_dataset, grid_search, holdout, verify_labels, ConfusionMatrix, Dataset, EvalReport,
    FeatureVector, GridResult, LabelVerification, ModelSpec, TrainedModel, ALPHABETICAL_ORDER, FEATURE_NAMES,
};
use crate::preprocess::{clean, CleaningReport};
use crate::stl::stl_decompose;
use crate::telemetry::{read_csv, write_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Load,
    Preprocess,
    Filter,
    Decompose,
    Analyze,
    Learn,
    Evaluate,
    Report,
    Manifest,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Preprocess => "preprocess",
            Stage::Filter => "filter",
            Stage::Decompose => "decompose",
            Stage::Analyze => "analyze",
            Stage::Learn => "learn",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
            Stage::Manifest => "manifest",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A stage failure with the file being processed, when there was one.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub file: Option<PathBuf>,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed", self.stage)?;
        if let Some(p) = &self.file {
            write!(f, " on {}", p.display())?;
        }
        write!(f, ": {}", self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait Context<T> {
    fn at(self, stage: Stage, file: Option<&Path>) -> StageResult<T>;
}

impl<T> Context<T> for Result<T> {
    fn at(self, stage: Stage, file: Option<&Path>) -> StageResult<T> {
        self.map_err(|source| StageError { stage, file: file.map(Path::to_path_buf), source })
    }
}

/// A series together with the file it came from.
#[derive(Debug, Clone)]
pub struct SourcedSeries {
    pub path: PathBuf,
    pub series: LabeledSeries,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn profile(label: ActivityLabel) -> Result<ActivityProfile> {
    default_profiles().get(&label).copied().ok_or(Error::MissingProfile(label))
}

/// Reads every `*.csv` in `dir` (sorted by file name), keeping configured
/// activities only. With `require_all`, every configured activity must be
/// present.
pub fn load_series(dir: &Path, cfg: &PipelineConfig, require_all: bool) -> StageResult<Vec<SourcedSeries>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e)).at(Stage::Load, Some(dir))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let series = read_csv(&path).at(Stage::Load, Some(&path))?;
        if cfg.activities.contains(&series.label) {
            out.push(SourcedSeries { path, series });
        } else {
            log::info!("{}: activity {} not configured, skipped", path.display(), series.label);
        }
    }
    for label in cfg.activities.iter().filter(|_| require_all) {
        if !out.iter().any(|s| s.series.label == *label) {
            return Err(Error::InsufficientData(format!("no input series for activity {label}")))
                .at(Stage::Load, Some(dir));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningEntry {
    pub device_id: String,
    pub activity: ActivityLabel,
    pub source: String,
    pub report: CleaningReport,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Outlier removal and alignment; writes `cleaned/` and `cleaning.json`.
pub fn preprocess_stage(cfg: &PipelineConfig, input: &[SourcedSeries], out: &Path) -> StageResult<Vec<SourcedSeries>> {
    let tol = cfg.preprocess.tolerance().at(Stage::Config, None)?;
    let dir = out.join("cleaned");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e)).at(Stage::Preprocess, Some(&dir))?;
    let mut cleaned = Vec::with_capacity(input.len());
    let mut log_entries = Vec::with_capacity(input.len());
    for s in input {
        let at = Some(s.path.as_path());
        let p = profile(s.series.label).at(Stage::Preprocess, at)?;
        let bounds = cfg.preprocess.bounds.bounds(&p, tol).at(Stage::Preprocess, at)?;
        let (series, report) = clean(&s.series, &bounds, cfg.sampling_hz).at(Stage::Preprocess, at)?;
        for w in &report.warnings {
            log::warn!("{}: {w}", s.path.display());
        }
        let path = dir.join(format!("{}.csv", series.device_id));
        write_csv(&series, &path).at(Stage::Preprocess, Some(&path))?;
        log_entries.push(CleaningEntry {
            device_id: series.device_id.clone(),
            activity: series.label,
            source: file_name(&s.path),
            report,
        });
        cleaned.push(SourcedSeries { path, series });
    }
    let path = out.join("cleaning.json");
    write_json(&path, &log_entries).at(Stage::Preprocess, Some(&path))?;
    Ok(cleaned)
}

fn channel_values(s: &SourcedSeries, ch: Channel, stage: Stage) -> StageResult<Vec<f64>> {
    s.series
        .complete_channel(ch)
        .ok_or_else(|| Error::Validation(format!("{ch} channel has missing samples; run preprocess first")))
        .at(stage, Some(&s.path))
}

fn centred(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - m).collect()
}

/// Low-pass, wavelet bank and envelope per channel; writes `filtered/`
/// (CSV per series, SVG per channel).
pub fn filter_stage(cfg: &PipelineConfig, series: &[SourcedSeries], out: &Path) -> StageResult<()> {
    let chain = cfg.chain();
    series.par_iter().try_for_each(|s| {
        let mut outputs = Vec::new();
        for ch in Channel::BOTH {
            let x = channel_values(s, ch, Stage::Filter)?;
            outputs.push(run_chain(&x, &chain).at(Stage::Filter, Some(&s.path))?);
        }
        let mut text = String::from("timestamp_s");
        for ch in Channel::BOTH {
            for part in ["prefiltered", "wavelet", "envelope"] {
                let _ = write!(text, ",{ch}_{part}");
            }
        }
        text.push('\n');
        for (i, t) in s.series.timestamps().iter().enumerate() {
            let _ = write!(text, "{t}");
            for o in &outputs {
                let _ = write!(text, ",{},{},{}", o.prefiltered[i], o.wavelet[i], o.envelope[i]);
            }
            text.push('\n');
        }
        let path = out.join("filtered").join(format!("{}.csv", s.series.device_id));
        write_text(&path, &text).at(Stage::Filter, Some(&path))?;
        let ts = s.series.timestamps();
        let n = ((PREVIEW_SECONDS * cfg.sampling_hz) as usize).min(ts.len());
        for (ch, o) in Channel::BOTH.iter().zip(&outputs) {
            let svg = crate::report::line_plot_svg(
                &format!("{} {ch}: first {PREVIEW_SECONDS} s", s.series.device_id),
                &ts[..n],
                &[
                    ("prefiltered - mean", &centred(&o.prefiltered)[..n], "#888"),
                    ("wavelet", &o.wavelet[..n], "#1f5fa8"),
                    ("envelope", &o.envelope[..n], "#c00"),
                ],
            );
            let path = out.join("filtered").join(format!("{}_{ch}.svg", s.series.device_id));
            write_text(&path, &svg).at(Stage::Filter, Some(&path))?;
        }
        Ok(())
    })
}

/// STL per channel; writes `decomposed/<device>_<channel>.csv`.
pub fn decompose_stage(cfg: &PipelineConfig, series: &[SourcedSeries], out: &Path) -> StageResult<()> {
    series.par_iter().try_for_each(|s| {
        let at = Some(s.path.as_path());
        let p = profile(s.series.label).at(Stage::Decompose, at)?;
        let stl_cfg = cfg.stl.config(cfg.sampling_hz, &p).at(Stage::Decompose, at)?;
        let ts = s.series.timestamps();
        for ch in Channel::BOTH {
            let x = channel_values(s, ch, Stage::Decompose)?;
            let d = stl_decompose(&x, &stl_cfg).at(Stage::Decompose, at)?;
            let mut text = String::from("timestamp_s,trend,seasonal,residual\n");
            for i in 0..d.len() {
                let _ = writeln!(text, "{},{},{},{}", ts[i], d.trend[i], d.seasonal[i], d.residual[i]);
            }
            let path = out.join("decomposed").join(format!("{}_{ch}.csv", s.series.device_id));
            write_text(&path, &text).at(Stage::Decompose, Some(&path))?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesAnalysis {
    pub device_id: String,
    pub activity: ActivityLabel,
    pub channel: Channel,
    pub stats: StatsSummary,
    pub peak_count: usize,
    pub confident_peaks: usize,
    pub breath_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityStats {
    pub activity: ActivityLabel,
    pub channel: Channel,
    pub stats: StatsSummary,
}

/// First stretch of one series, kept for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub device_id: String,
    pub activity: ActivityLabel,
    pub channel: Channel,
    pub timestamps: Vec<f64>,
    pub observed: Vec<f64>,
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub response: Vec<f64>,
    pub peaks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub series: Vec<SeriesAnalysis>,
    pub activities: Vec<ActivityStats>,
    pub correlation: Option<CorrelationMatrix>,
    pub preview: Option<Preview>,
}

const PREVIEW_SECONDS: f64 = 300.0;

/// Descriptive statistics, breath peaks and cross-activity correlation.
pub fn analyze_stage(cfg: &PipelineConfig, series: &[SourcedSeries], out: &Path) -> StageResult<Analysis> {
    let chain = cfg.chain();
    let params = cfg.peaks.params();
    let per: Vec<Vec<(SeriesAnalysis, PeakSet)>> = series
        .par_iter()
        .map(|s| {
            let at = Some(s.path.as_path());
            let duration = s.series.len() as f64 / s.series.sampling_hz;
            Channel::BOTH
                .iter()
                .map(|&ch| {
                    let x = channel_values(s, ch, Stage::Analyze)?;
                    let (_, peaks) = breath_peaks(&x, &chain, cfg.peaks.source, &params).at(Stage::Analyze, at)?;
                    let a = SeriesAnalysis {
                        device_id: s.series.device_id.clone(),
                        activity: s.series.label,
                        channel: ch,
                        stats: summarize(&x).at(Stage::Analyze, at)?,
                        peak_count: peaks.len(),
                        confident_peaks: peaks.confident_count(),
                        breath_rate_hz: peaks.len() as f64 / duration,
                    };
                    Ok((a, peaks))
                })
                .collect()
        })
        .collect::<StageResult<_>>()?;

    let mut peaks_csv = String::from("device_id,activity,channel,index,timestamp_s,height,prominence,low_confidence\n");
    let mut stats_csv = String::from(
        "device_id,activity,channel,mean,std,min,max,q1,median,q3,lower_fence,upper_fence,peak_count,breath_rate_hz\n",
    );
    let mut analyses = Vec::new();
    for (s, rows) in series.iter().zip(&per) {
        let ts = s.series.timestamps();
        for (a, p) in rows {
            for k in 0..p.len() {
                let i = p.indices[k];
                let _ = writeln!(
                    peaks_csv,
                    "{},{},{},{i},{},{},{},{}",
                    a.device_id, a.activity, a.channel, ts[i], p.heights[k], p.prominences[k], p.low_confidence[k]
                );
            }
            let st = &a.stats;
            let _ = writeln!(
                stats_csv,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                a.device_id,
                a.activity,
                a.channel,
                st.mean,
                st.std,
                st.min,
                st.max,
                st.q1,
                st.median,
                st.q3,
                st.lower_fence,
                st.upper_fence,
                a.peak_count,
                a.breath_rate_hz
            );
            analyses.push(a.clone());
        }
    }

    let mut activities = Vec::new();
    for label in ActivityLabel::ALL {
        for ch in Channel::BOTH {
            let pooled: Vec<f64> = series
                .iter()
                .filter(|s| s.series.label == label)
                .flat_map(|s| s.series.complete_channel(ch).unwrap_or_default())
                .collect();
            if pooled.is_empty() {
                continue;
            }
            let stats = summarize(&pooled).at(Stage::Analyze, None)?;
            let st = &stats;
            let _ = writeln!(
                stats_csv,
                "*,{label},{ch},{},{},{},{},{},{},{},{},{},,",
                st.mean, st.std, st.min, st.max, st.q1, st.median, st.q3, st.lower_fence, st.upper_fence
            );
            activities.push(ActivityStats { activity: label, channel: ch, stats });
        }
    }

    let mut first: BTreeMap<ActivityLabel, LabeledSeries> = BTreeMap::new();
    for s in series {
        first.entry(s.series.label).or_insert_with(|| s.series.clone());
    }
    let correlation = if first.len() == ActivityLabel::ALL.len() {
        let channels = cross_activity_channels(&first).at(Stage::Analyze, None)?;
        let m = pearson_matrix(&channels).at(Stage::Analyze, None)?;
        let mut text = format!("channel,{}\n", m.labels.join(","));
        for (name, row) in m.labels.iter().zip(&m.values) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(text, "{name},{}", cells.join(","));
        }
        let path = out.join("correlation.csv");
        write_text(&path, &text).at(Stage::Analyze, Some(&path))?;
        Some(m)
    } else {
        log::warn!("cross-activity correlation needs one series of every activity; skipped");
        None
    };

    let preview = match series.first() {
        Some(s) => Some(preview_of(cfg, s, &per[0][0].1)?),
        None => None,
    };

    for (name, text) in [("peaks.csv", &peaks_csv), ("stats.csv", &stats_csv)] {
        let path = out.join(name);
        write_text(&path, text).at(Stage::Analyze, Some(&path))?;
    }
    let analysis = Analysis { series: analyses, activities, correlation, preview };
    let path = out.join("analysis.json");
    write_json(&path, &analysis).at(Stage::Analyze, Some(&path))?;
    Ok(analysis)
}

fn preview_of(cfg: &PipelineConfig, s: &SourcedSeries, peaks: &PeakSet) -> StageResult<Preview> {
    let at = Some(s.path.as_path());
    let ch = Channel::Temperature;
    let x = channel_values(s, ch, Stage::Analyze)?;
    let p = profile(s.series.label).at(Stage::Analyze, at)?;
    let d = stl_decompose(&x, &cfg.stl.config(cfg.sampling_hz, &p).at(Stage::Analyze, at)?).at(Stage::Analyze, at)?;
    let chain = run_chain(&x, &cfg.chain()).at(Stage::Analyze, at)?;
    let n = ((PREVIEW_SECONDS * cfg.sampling_hz) as usize).min(x.len());
    Ok(Preview {
        device_id: s.series.device_id.clone(),
        activity: s.series.label,
        channel: ch,
        timestamps: s.series.timestamps()[..n].to_vec(),
        observed: x[..n].to_vec(),
        trend: d.trend[..n].to_vec(),
        seasonal: d.seasonal[..n].to_vec(),
        residual: d.residual[..n].to_vec(),
        response: cfg.peaks.source.select(&chain)[..n].to_vec(),
        peaks: peaks.indices.iter().copied().filter(|&i| i < n).collect(),
    })
}

/// Evaluation document written to `eval_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDocument {
    /// `cv`, `holdout` or `external`.
    pub protocol: String,
    pub description: String,
    pub model: ModelSpec,
    pub windows: usize,
    pub fold_accuracy: Option<Vec<f64>>,
    pub mean_fold_accuracy: Option<f64>,
    pub report: EvalReport,
}

pub fn write_features(path: &Path, features: &[FeatureVector]) -> Result<()> {
    let mut text = format!("window_id,label,{}\n", FEATURE_NAMES.join(","));
    for f in features {
        let label = f.label.map(|l| l.to_string()).unwrap_or_default();
        let values: Vec<String> = f.to_array().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(text, "{},{label},{}", f.window_id, values.join(","));
    }
    write_text(path, &text)
}

fn class_order(labels: &[ActivityLabel]) -> Vec<ActivityLabel> {
    ALPHABETICAL_ORDER.iter().copied().filter(|l| labels.contains(l)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub model: TrainedModel,
    pub evaluation: EvalDocument,
    pub grid: Option<GridResult>,
    pub verification: LabelVerification,
}

/// Feature extraction, optional grid search, evaluation and final fit.
pub fn learn_stage(cfg: &PipelineConfig, series: &[SourcedSeries], out: &Path) -> StageResult<LearnOutcome> {
    let plain: Vec<LabeledSeries> = series.iter().map(|s| s.series.clone()).collect();
    let features = extract_dataset(&plain, &cfg.feature_config()).at(Stage::Learn, None)?;
    let path = out.join("features.csv");
    write_features(&path, &features).at(Stage::Learn, Some(&path))?;
    let data = Dataset::from_features(&features).at(Stage::Learn, None)?;
    if data.is_empty() {
        return Err(Error::InsufficientData("no complete feature windows".into())).at(Stage::Learn, None);
    }
    let order = class_order(&data.y);
    let ev = &cfg.evaluation;

    let grid = match &ev.grid {
        Some(g) => {
            let r = grid_search(&data, cfg.model.kind(), g, ev.folds, cfg.seed).at(Stage::Learn, None)?;
            let path = out.join("grid.json");
            write_json(&path, &r).at(Stage::Learn, Some(&path))?;
            Some(r)
        }
        None => None,
    };
    let spec = grid.as_ref().map(|g| g.best).unwrap_or(cfg.model);

    let (model, evaluation) = match ev.protocol {
        Protocol::Cv => {
            let cv = cross_validate(&data, spec, ev.folds, cfg.seed, &order).at(Stage::Learn, None)?;
            let model = TrainedModel::fit(spec, &data, cfg.seed).at(Stage::Learn, None)?;
            let doc = EvalDocument {
                protocol: "cv".into(),
                description: ev.protocol.describe(ev.folds, ev.test_fraction),
                model: spec,
                windows: data.len(),
                fold_accuracy: Some(cv.fold_accuracy),
                mean_fold_accuracy: Some(cv.mean_accuracy),
                report: cv.pooled,
            };
            (model, doc)
        }
        Protocol::Holdout => {
            let (model, report) = holdout(&data, spec, ev.test_fraction, cfg.seed, &order).at(Stage::Learn, None)?;
            let doc = EvalDocument {
                protocol: "holdout".into(),
                description: ev.protocol.describe(ev.folds, ev.test_fraction),
                model: spec,
                windows: data.len(),
                fold_accuracy: None,
                mean_fold_accuracy: None,
                report,
            };
            (model, doc)
        }
    };
    let verification = verify_labels(&features, &default_profiles());
    write_learn_outputs(out, &model, &evaluation, &verification)?;
    Ok(LearnOutcome { model, evaluation, grid, verification })
}

fn write_learn_outputs(
    out: &Path,
    model: &TrainedModel,
    evaluation: &EvalDocument,
    verification: &LabelVerification,
) -> StageResult<()> {
    let path = out.join("model.json");
    model.save(&path).at(Stage::Learn, Some(&path))?;
    write_eval(out, evaluation, Stage::Learn)?;
    let path = out.join("label_verification.json");
    write_json(&path, verification).at(Stage::Learn, Some(&path))
}

fn write_eval(out: &Path, evaluation: &EvalDocument, stage: Stage) -> StageResult<()> {
    let path = out.join("eval_report.json");
    write_json(&path, evaluation).at(stage, Some(&path))?;
    let path = out.join("confusion.csv");
    write_text(&path, &evaluation.report.confusion.to_csv()).at(stage, Some(&path))
}

/// Scores a saved model on new series; writes `eval_report.json` and
/// `confusion.csv` with protocol `external`.
pub fn evaluate_stage(
    cfg: &PipelineConfig,
    model_path: &Path,
    series: &[SourcedSeries],
    out: &Path,
) -> StageResult<EvalDocument> {
    let model = TrainedModel::load(model_path).at(Stage::Evaluate, Some(model_path))?;
    let plain: Vec<LabeledSeries> = series.iter().map(|s| s.series.clone()).collect();
    let features = extract_dataset(&plain, &cfg.feature_config()).at(Stage::Evaluate, None)?;
    let data = Dataset::from_features(&features).at(Stage::Evaluate, None)?;
    let pred = model.predict_all(&data.x).at(Stage::Evaluate, Some(model_path))?;
    let cm = ConfusionMatrix::from_predictions(class_order(&data.y), &data.y, &pred).at(Stage::Evaluate, None)?;
    let doc = EvalDocument {
        protocol: "external".into(),
        description: "saved model scored on every window of the given series".into(),
        model: model.hyperparams,
        windows: data.len(),
        fold_accuracy: None,
        mean_fold_accuracy: None,
        report: crate::learn::evaluate(&cm).at(Stage::Evaluate, None)?,
    };
    write_eval(out, &doc, Stage::Evaluate)?;
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFiles {
    pub stage: Stage,
    /// Relative path to SHA-256, sorted by path.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub stages: Vec<StageFiles>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn stage_of(rel: &str) -> Stage {
    let top = rel.split('/').next().unwrap_or(rel);
    match top {
        "cleaned" | "cleaning.json" => Stage::Preprocess,
        "filtered" => Stage::Filter,
        "decomposed" => Stage::Decompose,
        "peaks.csv" | "stats.csv" | "correlation.csv" | "analysis.json" => Stage::Analyze,
        "report.html" | "plots" => Stage::Report,
        _ => Stage::Learn,
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_FILE: &str = "FAILED";

/// Hashes every artifact under `out` and writes `manifest.json`.
pub fn write_manifest(cfg: &PipelineConfig, out: &Path) -> Result<Manifest> {
    let mut files = Vec::new();
    collect_files(out, out, &mut files)?;
    let mut by_stage: BTreeMap<u8, StageFiles> = BTreeMap::new();
    for p in files {
        let rel = p.strip_prefix(out).expect("under root").components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if rel == MANIFEST_FILE || rel == FAILED_FILE {
            continue;
        }
        let stage = stage_of(&rel);
        by_stage
            .entry(stage as u8)
            .or_insert_with(|| StageFiles { stage, files: BTreeMap::new() })
            .files
            .insert(rel, sha256_file(&p)?);
    }
    let manifest = Manifest { config_sha256: cfg.hash(), stages: by_stage.into_values().collect() };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FailedMarker {
    stage: Stage,
    file: Option<String>,
    error: String,
}

/// Records a failure next to the partial artifacts.
pub fn mark_failed(out: &Path, err: &StageError) {
    let marker = FailedMarker {
        stage: err.stage,
        file: err.file.as_ref().map(|p| p.display().to_string()),
        error: err.source.to_string(),
    };
    if let Err(e) = write_json(&out.join(FAILED_FILE), &marker) {
        log::error!("could not write failure marker: {e}");
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub series: usize,
    pub evaluation: EvalDocument,
    pub manifest: Manifest,
}

/// Runs every stage in order. On failure a `FAILED` marker is written and
/// artifacts produced so far are kept.
pub fn run_pipeline(cfg: &PipelineConfig, input: &Path, out: &Path) -> StageResult<RunSummary> {
    cfg.validate().at(Stage::Config, None)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e)).at(Stage::Load, Some(out))?;
    for stale in [MANIFEST_FILE, FAILED_FILE] {
        let _ = std::fs::remove_file(out.join(stale));
    }
    let result = run_stages(cfg, input, out);
    if let Err(e) = &result {
        mark_failed(out, e);
    }
    result
}

fn run_stages(cfg: &PipelineConfig, input: &Path, out: &Path) -> StageResult<RunSummary> {
    let raw = load_series(input, cfg, true)?;
    log::info!("loaded {} series from {}", raw.len(), input.display());
    let cleaned = preprocess_stage(cfg, &raw, out)?;
    filter_stage(cfg, &cleaned, out)?;
    decompose_stage(cfg, &cleaned, out)?;
    analyze_stage(cfg, &cleaned, out)?;
    let learned = learn_stage(cfg, &cleaned, out)?;
    log::info!("{}: accuracy {:.4}", learned.evaluation.description, learned.evaluation.report.accuracy);
    crate::report::render_report(out).at(Stage::Report, Some(out))?;
    let manifest = write_manifest(cfg, out).at(Stage::Manifest, Some(out))?;
    Ok(RunSummary { series: cleaned.len(), evaluation: learned.evaluation, manifest })
}
