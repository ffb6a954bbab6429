//! Peak detection, breath-count validation, descriptive statistics and
//! cross-channel correlation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ActivityLabel, ActivityProfile, Channel, LabeledSeries};
use crate::dsp::{run_chain, ChainConfig, ChainOutput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    #[default]
    Maxima,
    Minima,
}

impl std::str::FromStr for Polarity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxima" | "max" => Ok(Self::Maxima),
            "minima" | "min" => Ok(Self::Minima),
            _ => Err(Error::invalid("polarity", format!("`{s}` is not maxima|minima"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakSet {
    pub indices: Vec<usize>,
    pub heights: Vec<f64>,
    pub prominences: Vec<f64>,
    /// Seconds between consecutive peaks.
    pub spacings: Vec<f64>,
    /// Peaks inside an edge region where upstream filtering saw padding.
    pub low_confidence: Vec<bool>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Flags peaks within `margin` samples of either end of a signal of
    /// length `len`.
    pub fn flag_edges(&mut self, len: usize, margin: usize) {
        self.low_confidence = self.indices.iter().map(|&i| i < margin || i + margin >= len).collect();
    }

    pub fn confident_count(&self) -> usize {
        self.low_confidence.iter().filter(|f| !**f).count()
    }

    pub fn mean_spacing(&self) -> Option<f64> {
        (!self.spacings.is_empty()).then(|| self.spacings.iter().sum::<f64>() / self.spacings.len() as f64)
    }
}

/// Strict local maxima; a flat top counts once, at its middle sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

fn prominence(x: &[f64], peak: usize) -> f64 {
    let v = x[peak];
    let mut left_min = v;
    for &y in x[..peak].iter().rev() {
        if y > v {
            break;
        }
        left_min = left_min.min(y);
    }
    let mut right_min = v;
    for &y in &x[peak + 1..] {
        if y > v {
            break;
        }
        right_min = right_min.min(y);
    }
    v - left_min.max(right_min)
}

/// Local extrema with prominence `>= min_prominence`, thinned so that no two
/// are closer than `min_distance_s`; when two collide the more prominent one
/// (then the earlier one) is kept.
pub fn detect_peaks(
    signal: &[f64],
    min_distance_s: f64,
    min_prominence: f64,
    sampling_hz: f64,
    polarity: Polarity,
) -> Result<PeakSet> {
    if !(sampling_hz > 0.0) {
        return Err(Error::invalid("sampling_hz", "must be > 0"));
    }
    if !(min_distance_s >= 1.0 / sampling_hz) {
        return Err(Error::invalid(
            "min_distance_s",
            format!("{min_distance_s} s is shorter than one sample ({} s)", 1.0 / sampling_hz),
        ));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("peak detection input contains non-finite values".into()));
    }
    let x: Vec<f64> = match polarity {
        Polarity::Maxima => signal.to_vec(),
        Polarity::Minima => signal.iter().map(|v| -v).collect(),
    };

    let candidates: Vec<(usize, f64)> = local_maxima(&x)
        .into_iter()
        .map(|p| (p, prominence(&x, p)))
        .filter(|&(_, prom)| prom >= min_prominence)
        .collect();

    let min_gap = min_distance_s * sampling_hz;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].1.total_cmp(&candidates[a].1).then(a.cmp(&b)));
    let mut keep = vec![true; candidates.len()];
    for &j in &order {
        if !keep[j] {
            continue;
        }
        let pj = candidates[j].0;
        for k in (0..j).rev() {
            if ((pj - candidates[k].0) as f64) >= min_gap {
                break;
            }
            keep[k] = false;
        }
        for k in j + 1..candidates.len() {
            if ((candidates[k].0 - pj) as f64) >= min_gap {
                break;
            }
            keep[k] = false;
        }
    }

    let mut out = PeakSet::default();
    for (j, &(p, prom)) in candidates.iter().enumerate() {
        if keep[j] {
            out.indices.push(p);
            out.heights.push(signal[p]);
            out.prominences.push(prom);
            out.low_confidence.push(false);
        }
    }
    out.spacings = out.indices.windows(2).map(|w| (w[1] - w[0]) as f64 / sampling_hz).collect();
    Ok(out)
}

/// Peak-detection parameters relative to the analysed signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub min_distance_s: f64,
    /// Minimum prominence as a multiple of the signal's standard deviation.
    pub prominence_std_factor: f64,
    pub polarity: Polarity,
}

impl PeakParams {
    pub const DEFAULT_PROMINENCE_FACTOR: f64 = 0.25;
    /// Absolute prominence floor; keeps filter round-off on flat input from
    /// registering as peaks.
    pub const PROMINENCE_FLOOR: f64 = 1e-9;

    /// Half the profile's breath period.
    pub fn for_profile(profile: &ActivityProfile) -> Self {
        Self {
            min_distance_s: 0.5 * profile.breath_period_s(),
            prominence_std_factor: Self::DEFAULT_PROMINENCE_FACTOR,
            polarity: Polarity::Maxima,
        }
    }

    /// Half the period of the fastest admissible breath, independent of the
    /// (possibly unknown) activity.
    pub fn label_agnostic(max_breath_rate_hz: f64) -> Self {
        Self {
            min_distance_s: 0.5 / max_breath_rate_hz,
            prominence_std_factor: Self::DEFAULT_PROMINENCE_FACTOR,
            polarity: Polarity::Maxima,
        }
    }

    pub fn detect(&self, signal: &[f64], sampling_hz: f64) -> Result<PeakSet> {
        let threshold = (self.prominence_std_factor * mean_std(signal).1).max(Self::PROMINENCE_FLOOR);
        let min_distance = self.min_distance_s.max(1.0 / sampling_hz);
        detect_peaks(signal, min_distance, threshold, sampling_hz, self.polarity)
    }
}

/// Which chain output peaks are counted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PeakSource {
    /// Summed wavelet-bank response: one crest per breath down to 1 Hz sampling.
    #[default]
    Wavelet,
    /// Hilbert envelope: one crest per breath only when the bank passes the
    /// breath's second harmonic.
    Envelope,
}

impl std::str::FromStr for PeakSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wavelet" => Ok(Self::Wavelet),
            "envelope" => Ok(Self::Envelope),
            _ => Err(Error::invalid("peak source", format!("`{s}` is not wavelet|envelope"))),
        }
    }
}

impl PeakSource {
    pub fn select<'a>(&self, chain: &'a ChainOutput) -> &'a [f64] {
        match self {
            Self::Wavelet => &chain.wavelet,
            Self::Envelope => &chain.envelope,
        }
    }
}

/// Runs the signal chain and detects breath peaks on `source`.
pub fn breath_peaks(
    signal: &[f64],
    chain: &ChainConfig,
    source: PeakSource,
    params: &PeakParams,
) -> Result<(ChainOutput, PeakSet)> {
    let out = run_chain(signal, chain)?;
    let mut peaks = params.detect(source.select(&out), chain.sampling_hz())?;
    peaks.flag_edges(signal.len(), chain.bank.max_support());
    Ok((out, peaks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreathValidation {
    pub pass: bool,
    pub detected: usize,
    pub expected: usize,
    pub deviation: usize,
}

pub fn validate_breath_count(peaks: &PeakSet, expected_count: usize, tolerance: usize) -> Result<BreathValidation> {
    if expected_count == 0 {
        return Err(Error::invalid("expected_count", "must be > 0"));
    }
    let detected = peaks.len();
    let deviation = detected.abs_diff(expected_count);
    Ok(BreathValidation { pass: deviation <= tolerance, detected, expected: expected_count, deviation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
}

impl StatsSummary {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

pub(crate) fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Quantile of sorted data by linear interpolation between order statistics.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<StatsSummary> {
    if values.is_empty() {
        return Err(Error::EmptySeries);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("summary input contains non-finite values".into()));
    }
    let (mean, std) = mean_std(values);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(StatsSummary {
        mean,
        std,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        q1,
        median,
        q3,
        lower_fence: q1 - 1.5 * iqr,
        upper_fence: q3 + 1.5 * iqr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[i][j])
    }
}

/// Pearson correlation for every pair of the named, equal-length channels.
pub fn pearson_matrix(channels: &[(String, Vec<f64>)]) -> Result<CorrelationMatrix> {
    if channels.len() < 2 {
        return Err(Error::invalid("channels", format!("need >= 2 channels, got {}", channels.len())));
    }
    let n = channels[0].1.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("correlation needs >= 3 samples, got {n}")));
    }
    let mut centred = Vec::with_capacity(channels.len());
    for (name, x) in channels {
        if x.len() != n {
            return Err(Error::Validation(format!("channel `{name}` has {} samples, expected {n}", x.len())));
        }
        let (mean, _) = mean_std(x);
        let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::UndefinedCorrelation(name.clone()));
        }
        centred.push((c, norm));
    }
    let m = channels.len();
    let mut values = vec![vec![0.0; m]; m];
    for i in 0..m {
        values[i][i] = 1.0;
        for j in i + 1..m {
            let (a, na) = &centred[i];
            let (b, nb) = &centred[j];
            let r = (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0);
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    Ok(CorrelationMatrix { labels: channels.iter().map(|(n, _)| n.clone()).collect(), values })
}

/// Activity order of the cross-activity correlation layout.
pub const CORRELATION_ORDER: [ActivityLabel; 4] =
    [ActivityLabel::Running, ActivityLabel::Sleeping, ActivityLabel::Sitting, ActivityLabel::Walking];

/// Builds `R_T, R_H, SL_T, SL_H, SE_T, SE_H, W_T, W_H` channels, one
/// session per activity, paired sample-by-sample and truncated to the
/// shortest session. Series must be gap-free.
pub fn cross_activity_channels(series: &BTreeMap<ActivityLabel, LabeledSeries>) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for label in CORRELATION_ORDER {
        let s = series
            .get(&label)
            .ok_or_else(|| Error::InsufficientData(format!("no series for activity {label}")))?;
        for ch in Channel::BOTH {
            let values = s.complete_channel(ch).ok_or_else(|| {
                Error::Validation(format!("{label} {ch} channel has missing samples; impute first"))
            })?;
            out.push((format!("{}_{}", label.channel_prefix(), ch.suffix()), values));
        }
    }
    let n = out.iter().map(|(_, v)| v.len()).min().unwrap_or(0);
    for (_, v) in &mut out {
        v.truncate(n);
    }
    Ok(out)
}
