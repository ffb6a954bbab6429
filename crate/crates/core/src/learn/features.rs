use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::breath_analysis::{breath_peaks, PeakParams, PeakSource};
use crate::domain::{ActivityLabel, ActivityProfile, Channel, LabeledSeries};
use crate::dsp::ChainConfig;
use crate::error::{Error, Result};
use crate::preprocess::interpolate_missing;

pub const FEATURE_NAMES: [&str; 11] = [
    "temp_mean",
    "temp_std",
    "temp_range",
    "hum_mean",
    "hum_std",
    "hum_range",
    "temp_rate_mean",
    "hum_rate_mean",
    "peak_count",
    "peak_spacing_mean",
    "envelope_mean",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub temp_mean: f64,
    pub temp_std: f64,
    pub temp_range: f64,
    pub hum_mean: f64,
    pub hum_std: f64,
    pub hum_range: f64,
    pub temp_rate_mean: f64,
    pub hum_rate_mean: f64,
    pub peak_count: f64,
    pub peak_spacing_mean: f64,
    pub envelope_mean: f64,
    pub label: Option<ActivityLabel>,
    /// `<device_id>@<first sample index>`.
    pub window_id: String,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.temp_mean,
            self.temp_std,
            self.temp_range,
            self.hum_mean,
            self.hum_std,
            self.hum_range,
            self.temp_rate_mean,
            self.hum_rate_mean,
            self.peak_count,
            self.peak_spacing_mean,
            self.envelope_mean,
        ]
    }

    pub fn from_array(values: [f64; N_FEATURES], label: Option<ActivityLabel>, window_id: impl Into<String>) -> Self {
        let [temp_mean, temp_std, temp_range, hum_mean, hum_std, hum_range, temp_rate_mean, hum_rate_mean, peak_count, peak_spacing_mean, envelope_mean] =
            values;
        Self {
            temp_mean,
            temp_std,
            temp_range,
            hum_mean,
            hum_std,
            hum_range,
            temp_rate_mean,
            hum_rate_mean,
            peak_count,
            peak_spacing_mean,
            envelope_mean,
            label,
            window_id: window_id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub window_s: f64,
    pub overlap: f64,
    pub min_present_fraction: f64,
    pub chain: ChainConfig,
    pub peaks: PeakParams,
    pub peak_source: PeakSource,
}

/// Fastest breathing rate among the default profiles.
pub const MAX_BREATH_RATE_HZ: f64 = 0.45;

impl FeatureConfig {
    pub fn for_sampling(sampling_hz: f64) -> Self {
        Self {
            window_s: 30.0,
            overlap: 0.5,
            min_present_fraction: 0.8,
            chain: ChainConfig::for_sampling(sampling_hz),
            peaks: PeakParams::label_agnostic(MAX_BREATH_RATE_HZ),
            peak_source: PeakSource::Wavelet,
        }
    }

    pub fn window_samples(&self) -> usize {
        (self.window_s * self.chain.sampling_hz()).round() as usize
    }

    pub fn step_samples(&self) -> usize {
        ((self.window_samples() as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_samples() < 10 {
            return Err(Error::invalid(
                "window_s",
                format!("{} s x {} Hz gives fewer than 10 samples", self.window_s, self.chain.sampling_hz()),
            ));
        }
        if !(0.0..=0.9).contains(&self.overlap) {
            return Err(Error::invalid("overlap", format!("{} not in [0, 0.9]", self.overlap)));
        }
        if !(0.0..=1.0).contains(&self.min_present_fraction) {
            return Err(Error::invalid("min_present_fraction", "must lie in [0, 1]"));
        }
        self.chain.validate()
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::for_sampling(1.0)
    }
}

fn window_stats(x: &[f64]) -> (f64, f64, f64) {
    let (mean, std) = crate::breath_analysis::mean_std(x);
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    (mean, std, hi - lo)
}

/// Sliding-window features of an aligned series. Gaps are imputed before
/// the signal chain runs on the whole series; windows with fewer than
/// `min_present_fraction` observed samples are skipped.
pub fn extract_features(series: &LabeledSeries, cfg: &FeatureConfig) -> Result<Vec<FeatureVector>> {
    cfg.validate()?;
    let fs = series.sampling_hz;
    if (fs - cfg.chain.sampling_hz()).abs() > 1e-9 {
        return Err(Error::invalid(
            "sampling_hz",
            format!("series at {fs} Hz but feature chain configured for {} Hz", cfg.chain.sampling_hz()),
        ));
    }
    if !series.is_uniform_grid(1e-6) {
        return Err(Error::Validation(format!("{}: series is not on a uniform grid; align first", series.device_id)));
    }
    let w = cfg.window_samples();
    let n = series.len();
    if n < w {
        log::warn!("{}: {n} samples is shorter than one {w}-sample window", series.device_id);
        return Ok(Vec::new());
    }
    let present: Vec<bool> = series
        .samples()
        .iter()
        .map(|s| s.temperature.is_some() && s.humidity.is_some())
        .collect();
    let (filled, _) = interpolate_missing(series)?;
    let temp = filled.complete_channel(Channel::Temperature).expect("imputed");
    let hum = filled.complete_channel(Channel::Humidity).expect("imputed");
    let (chain, peaks) = breath_peaks(&temp, &cfg.chain, cfg.peak_source, &cfg.peaks)?;

    let mut out = Vec::new();
    let mut start = 0;
    while start + w <= n {
        let end = start + w;
        let observed = present[start..end].iter().filter(|p| **p).count();
        if (observed as f64) < cfg.min_present_fraction * w as f64 {
            start += cfg.step_samples();
            continue;
        }
        let (tm, ts, tr) = window_stats(&temp[start..end]);
        let (hm, hs, hr) = window_stats(&hum[start..end]);
        let rate = |x: &[f64]| (x[end - 1] - x[start]) / (w - 1) as f64 * fs;
        let in_window: Vec<usize> = peaks.indices.iter().copied().filter(|&i| i >= start && i < end).collect();
        let spacing = if in_window.len() >= 2 {
            (in_window[in_window.len() - 1] - in_window[0]) as f64 / (in_window.len() - 1) as f64 / fs
        } else {
            0.0
        };
        let envelope_mean = chain.envelope[start..end].iter().sum::<f64>() / w as f64;
        out.push(FeatureVector::from_array(
            [tm, ts, tr, hm, hs, hr, rate(&temp), rate(&hum), in_window.len() as f64, spacing, envelope_mean],
            Some(series.label),
            format!("{}@{start}", series.device_id),
        ));
        start += cfg.step_samples();
    }
    Ok(out)
}

/// Features of many series, concatenated in input order.
pub fn extract_dataset(series: &[LabeledSeries], cfg: &FeatureConfig) -> Result<Vec<FeatureVector>> {
    let per: Vec<Vec<FeatureVector>> = series.par_iter().map(|s| extract_features(s, cfg)).collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Nearest profile by window means, measured in profile standard deviations.
pub fn heuristic_label(fv: &FeatureVector, profiles: &BTreeMap<ActivityLabel, ActivityProfile>) -> Option<ActivityLabel> {
    profiles
        .values()
        .map(|p| {
            let d = ((fv.temp_mean - p.temp_mean) / p.temp_std).powi(2) + ((fv.hum_mean - p.hum_mean) / p.hum_std).powi(2);
            (p.label, d)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(l, _)| l)
}

/// Agreement between heuristic labels and ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVerification {
    pub windows: usize,
    pub agreeing: usize,
    pub per_label: BTreeMap<ActivityLabel, (usize, usize)>,
}

impl LabelVerification {
    pub fn agreement(&self) -> f64 {
        if self.windows == 0 {
            0.0
        } else {
            self.agreeing as f64 / self.windows as f64
        }
    }
}

pub fn verify_labels(features: &[FeatureVector], profiles: &BTreeMap<ActivityLabel, ActivityProfile>) -> LabelVerification {
    let mut v = LabelVerification { windows: 0, agreeing: 0, per_label: BTreeMap::new() };
    for fv in features {
        let Some(truth) = fv.label else { continue };
        let ok = heuristic_label(fv, profiles) == Some(truth);
        v.windows += 1;
        v.agreeing += ok as usize;
        let e = v.per_label.entry(truth).or_insert((0, 0));
        e.0 += 1;
        e.1 += ok as usize;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SensorSample;
    use crate::synthgen::{synthesize_with_truth, SynthConfig};

    fn constant_series(n: usize) -> LabeledSeries {
        let samples = (0..n).map(|i| SensorSample::new(i as f64, Some(31.0), Some(69.0), None).unwrap()).collect();
        LabeledSeries::new(samples, ActivityLabel::Sitting, 1.0, "s", "s-sitting").unwrap()
    }

    #[test]
    fn constant_window_features() {
        let f = extract_features(&constant_series(60), &FeatureConfig::default()).unwrap();
        assert_eq!(f.len(), 3);
        for fv in &f {
            assert_eq!((fv.temp_std, fv.temp_range, fv.temp_rate_mean, fv.peak_count), (0.0, 0.0, 0.0, 0.0));
            assert_eq!((fv.hum_std, fv.hum_range, fv.hum_rate_mean), (0.0, 0.0, 0.0));
            assert!(fv.to_array().iter().all(|v| v.is_finite()));
        }
        assert_eq!(f[1].window_id, "s-sitting@15");
    }

    #[test]
    fn short_series_gives_no_windows() {
        assert!(extract_features(&constant_series(20), &FeatureConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn sitting_window_peak_count() {
        let cfg = SynthConfig { duration_s: 300.0, ..Default::default() };
        let (s, truth) = synthesize_with_truth(ActivityLabel::Sitting, 1, &cfg).unwrap();
        let f = extract_features(&s, &FeatureConfig::default()).unwrap();
        for fv in &f[1..f.len() - 1] {
            assert!((7.0..=8.0).contains(&fv.peak_count), "{} in {}", fv.peak_count, fv.window_id);
        }
        assert!(truth.breath_count() > 0);
    }

    #[test]
    fn sparse_windows_are_skipped() {
        let mut samples = constant_series(60).samples().to_vec();
        for s in &mut samples[0..10] {
            s.temperature = None;
        }
        let s = constant_series(60).with_samples(samples).unwrap();
        let f = extract_features(&s, &FeatureConfig::default()).unwrap();
        assert_eq!(f.iter().map(|f| f.window_id.as_str()).collect::<Vec<_>>(), ["s-sitting@15", "s-sitting@30"]);
    }

    #[test]
    fn config_validation() {
        let c = FeatureConfig { window_s: 5.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = FeatureConfig { overlap: 0.95, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
