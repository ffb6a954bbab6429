//! C ABI over `breath_har`.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free`. Every fallible call returns a [`BhStatus`];
//! on failure [`bh_last_error`] describes the error on the calling thread.
//! Missing samples cross the boundary as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use breath_har::config::{FilterSection, PipelineConfig};
use breath_har::domain::{ActivityLabel, Channel, LabeledSeries};
use breath_har::learn::{extract_features, ConfusionMatrix, Dataset, FeatureConfig, ModelKind, ModelSpec, TrainedModel};
use breath_har::preprocess::{compute_bounds, ScalingParams};
use breath_har::synthgen::{synthesize_with_truth, SynthConfig};
use breath_har::telemetry::read_csv;
use breath_har::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Io = 4,
    Runtime = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Activity codes.
pub const BH_RUNNING: i32 = 0;
pub const BH_WALKING: i32 = 1;
pub const BH_SITTING: i32 = 2;
pub const BH_SLEEPING: i32 = 3;

/// Channel codes.
pub const BH_TEMPERATURE: i32 = 0;
pub const BH_HUMIDITY: i32 = 1;

/// Model kinds.
pub const BH_MODEL_KNN: i32 = 0;
pub const BH_MODEL_DECISION_TREE: i32 = 1;
pub const BH_MODEL_RANDOM_FOREST: i32 = 2;

/// Opaque labeled sensor series.
pub struct BhSeries {
    inner: LabeledSeries,
}

/// Opaque trained classifier.
pub struct BhModel {
    inner: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> BhStatus {
    match e {
        Error::InvalidConfig(_) => BhStatus::InvalidConfig,
        Error::InvalidParameter { .. } => BhStatus::InvalidArgument,
        Error::Io { .. } | Error::Transport(_) => BhStatus::Io,
        _ => BhStatus::Runtime,
    }
}

fn fail(status: BhStatus, msg: impl Into<String>) -> BhStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), BhStatus>) -> BhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BhStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(BhStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, BhStatus>;
}

impl<T> OrStatus<T> for breath_har::Result<T> {
    fn or_status(self) -> Result<T, BhStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, BhStatus> {
    if p.is_null() {
        return Err(fail(BhStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(BhStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), BhStatus> {
    if p.is_null() {
        Err(fail(BhStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn activity(code: i32) -> Result<ActivityLabel, BhStatus> {
    u8::try_from(code)
        .ok()
        .and_then(ActivityLabel::from_code)
        .ok_or_else(|| fail(BhStatus::InvalidArgument, format!("unknown activity code {code}")))
}

fn channel(code: i32) -> Result<Channel, BhStatus> {
    match code {
        BH_TEMPERATURE => Ok(Channel::Temperature),
        BH_HUMIDITY => Ok(Channel::Humidity),
        _ => Err(fail(BhStatus::InvalidArgument, format!("unknown channel code {code}"))),
    }
}

fn pipeline_defaults(sampling_hz: f64) -> PipelineConfig {
    PipelineConfig { sampling_hz, filter: FilterSection::for_sampling(sampling_hz), ..Default::default() }
}

/// Message of the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn bh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a series CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_series_read_csv(path: *const c_char, out: *mut *mut BhSeries) -> BhStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = path_arg(path, "path")?;
        let inner = read_csv(&p).or_status()?;
        *out = Box::into_raw(Box::new(BhSeries { inner }));
        Ok(())
    })
}

/// Generates a noise-bearing synthetic session.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_series_synthesize(
    activity_code: i32,
    subject: u32,
    duration_s: f64,
    sampling_hz: f64,
    seed: u64,
    out: *mut *mut BhSeries,
) -> BhStatus {
    guard(|| {
        non_null(out, "out")?;
        let label = activity(activity_code)?;
        let cfg = SynthConfig { duration_s, sampling_hz, seed, ..Default::default() };
        let (inner, _) = synthesize_with_truth(label, subject, &cfg).or_status()?;
        *out = Box::into_raw(Box::new(BhSeries { inner }));
        Ok(())
    })
}

/// # Safety
/// `series` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bh_series_free(series: *mut BhSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bh_series_len(series: *const BhSeries) -> usize {
    series.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `series` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bh_series_activity(series: *const BhSeries, out: *mut i32) -> BhStatus {
    guard(|| {
        non_null(series, "series")?;
        non_null(out, "out")?;
        *out = i32::from((*series).inner.label.code());
        Ok(())
    })
}

/// Copies one channel into `buf` (NaN for missing). With a null `buf` only
/// the required length is written to `written`.
///
/// # Safety
/// `buf` must hold `cap` doubles or be null; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_series_channel(
    series: *const BhSeries,
    channel_code: i32,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> BhStatus {
    guard(|| {
        non_null(series, "series")?;
        non_null(written, "written")?;
        let ch = channel(channel_code)?;
        let values = (*series).inner.channel(ch);
        *written = values.len();
        if buf.is_null() {
            return Ok(());
        }
        if cap < values.len() {
            return Err(fail(BhStatus::BufferTooSmall, format!("need {} doubles, got {cap}", values.len())));
        }
        let dst = std::slice::from_raw_parts_mut(buf, values.len());
        for (d, v) in dst.iter_mut().zip(values) {
            *d = v.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// `(observed_min - delta, observed_max + delta)`.
///
/// # Safety
/// `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_compute_bounds(
    observed_min: f64,
    observed_max: f64,
    delta: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> BhStatus {
    guard(|| {
        non_null(lower, "lower")?;
        non_null(upper, "upper")?;
        let (l, u) = compute_bounds(observed_min, observed_max, delta).or_status()?;
        (*lower, *upper) = (l, u);
        Ok(())
    })
}

/// `(x - x_min) / (x_max - x_min)`, clipped to [0, 1].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_min_max_scale(x: f64, x_min: f64, x_max: f64, out: *mut f64) -> BhStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ScalingParams::new(x_min, x_max).or_status()?.scale(x);
        Ok(())
    })
}

/// Breath peaks of a gap-free signal with pipeline defaults for the rate.
///
/// # Safety
/// `signal` must hold `len` doubles; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_count_breaths(signal: *const f64, len: usize, sampling_hz: f64, count: *mut usize) -> BhStatus {
    guard(|| {
        non_null(signal, "signal")?;
        non_null(count, "count")?;
        let x = std::slice::from_raw_parts(signal, len);
        let cfg = pipeline_defaults(sampling_hz);
        cfg.validate().or_status()?;
        let (_, peaks) =
            breath_har::breath_analysis::breath_peaks(x, &cfg.chain(), cfg.peaks.source, &cfg.peaks.params()).or_status()?;
        *count = peaks.len();
        Ok(())
    })
}

/// Accuracy and macro F1 of a row-major `n x n` confusion matrix (rows are
/// actual classes in activity-code order).
///
/// # Safety
/// `counts` must hold `n * n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_evaluate_confusion(
    counts: *const u64,
    n: usize,
    accuracy: *mut f64,
    macro_f1: *mut f64,
) -> BhStatus {
    guard(|| {
        non_null(counts, "counts")?;
        non_null(accuracy, "accuracy")?;
        non_null(macro_f1, "macro_f1")?;
        if n == 0 || n > ActivityLabel::ALL.len() {
            return Err(fail(BhStatus::InvalidArgument, format!("n = {n} must lie in 1..=4")));
        }
        let flat = std::slice::from_raw_parts(counts, n * n);
        let rows = flat.chunks(n).map(<[u64]>::to_vec).collect();
        let cm = ConfusionMatrix::new(ActivityLabel::ALL[..n].to_vec(), rows).or_status()?;
        let rep = breath_har::learn::evaluate(&cm).or_status()?;
        (*accuracy, *macro_f1) = (rep.accuracy, rep.macro_avg.f1);
        Ok(())
    })
}

fn model_kind(code: i32) -> Result<ModelKind, BhStatus> {
    match code {
        BH_MODEL_KNN => Ok(ModelKind::Knn),
        BH_MODEL_DECISION_TREE => Ok(ModelKind::DecisionTree),
        BH_MODEL_RANDOM_FOREST => Ok(ModelKind::RandomForest),
        _ => Err(fail(BhStatus::InvalidArgument, format!("unknown model kind {code}"))),
    }
}

/// Trains a model with default hyperparameters on windows of `n` series.
/// All series must share one sampling rate and be gap-free on a uniform grid.
///
/// # Safety
/// `series` must hold `n` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_model_train(
    series: *const *const BhSeries,
    n: usize,
    kind: i32,
    seed: u64,
    out: *mut *mut BhModel,
) -> BhStatus {
    guard(|| {
        non_null(series, "series")?;
        non_null(out, "out")?;
        let spec = ModelSpec::default_for(model_kind(kind)?);
        let handles = std::slice::from_raw_parts(series, n);
        let mut features = Vec::new();
        for (i, h) in handles.iter().enumerate() {
            non_null(*h, "series element")?;
            let s = &(**h).inner;
            let cfg = FeatureConfig::for_sampling(s.sampling_hz);
            features.extend(extract_features(s, &cfg).map_err(|e| fail(status_of(&e), format!("series {i}: {e}")))?);
        }
        let data = Dataset::from_features(&features).or_status()?;
        let inner = TrainedModel::fit(spec, &data, seed).or_status()?;
        *out = Box::into_raw(Box::new(BhModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `path` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bh_model_load(path: *const c_char, out: *mut *mut BhModel) -> BhStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = path_arg(path, "path")?;
        let inner = TrainedModel::load(&p).or_status()?;
        *out = Box::into_raw(Box::new(BhModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bh_model_save(model: *const BhModel, path: *const c_char) -> BhStatus {
    guard(|| {
        non_null(model, "model")?;
        let p = path_arg(path, "path")?;
        (*model).inner.save(&p).or_status()
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bh_model_free(model: *mut BhModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicts one activity code per 30 s window of `series`. With a null
/// `labels` only the window count is written to `written`.
///
/// # Safety
/// `labels` must hold `cap` ints or be null; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bh_model_predict_windows(
    model: *const BhModel,
    series: *const BhSeries,
    labels: *mut i32,
    cap: usize,
    written: *mut usize,
) -> BhStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(series, "series")?;
        non_null(written, "written")?;
        let s = &(*series).inner;
        let features = extract_features(s, &FeatureConfig::for_sampling(s.sampling_hz)).or_status()?;
        *written = features.len();
        if labels.is_null() {
            return Ok(());
        }
        if cap < features.len() {
            return Err(fail(BhStatus::BufferTooSmall, format!("need {} labels, got {cap}", features.len())));
        }
        let dst = std::slice::from_raw_parts_mut(labels, features.len());
        for (d, f) in dst.iter_mut().zip(&features) {
            *d = i32::from((*model).inner.predict(f).or_status()?.code());
        }
        Ok(())
    })
}

/// Runs the full batch pipeline. `config_path` may be null for defaults.
///
/// # Safety
/// Paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn bh_run_pipeline(
    config_path: *const c_char,
    input_dir: *const c_char,
    out_dir: *const c_char,
) -> BhStatus {
    guard(|| {
        let cfg = if config_path.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::load(path_arg(config_path, "config_path")?).or_status()?
        };
        let input = path_arg(input_dir, "input_dir")?;
        let out = path_arg(out_dir, "out_dir")?;
        breath_har::pipeline::run_pipeline(&cfg, &input, &out)
            .map(|_| ())
            .map_err(|e| fail(status_of(&e.source), e.to_string()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn null_out_pointer_is_reported() {
        let s = unsafe { bh_series_synthesize(BH_SITTING, 1, 60.0, 1.0, 1, ptr::null_mut()) };
        assert_eq!(s, BhStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(bh_last_error()) }.to_str().unwrap();
        assert!(msg.contains("out"), "{msg}");
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(bh_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
