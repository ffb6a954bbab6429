//! Labeled synthetic breath series.
//!
//! Each channel is an activity baseline plus a train of Gaussian bumps (one
//! per breath, sigma = 0.2 breath periods, humidity phase-aligned with
//! temperature), linear drift and truncated Gaussian noise. The sum passes
//! through a saturating sensor stage bounded by the activity's outlier band,
//! and gain and offset are calibrated so the channel's sample mean and
//! standard deviation match the activity profile.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    default_profiles, ActivityLabel, ActivityProfile, Channel, LabeledSeries, SensorSample,
    TEMPERATURE_ENVELOPE,
};
use crate::error::{Error, Result};
use crate::preprocess::{ThresholdBounds, Tolerance};

/// Bump width as a fraction of the breath period.
pub const BUMP_SIGMA_FRACTION: f64 = 0.2;
/// Default noise level as a fraction of the profile std.
pub const DEFAULT_NOISE_FRACTION: f64 = 0.3;
const AQI_BASELINE: f64 = 120.0;
const AQI_NOISE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub profiles: BTreeMap<ActivityLabel, ActivityProfile>,
    pub duration_s: f64,
    pub sampling_hz: f64,
    /// `None` means 0.3 x the profile's temperature std.
    pub noise_std_temp: Option<f64>,
    /// `None` means 0.3 x the profile's humidity std.
    pub noise_std_hum: Option<f64>,
    pub drift_slope_temp: f64,
    pub drift_slope_hum: f64,
    pub outlier_rate: f64,
    pub gap_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            profiles: default_profiles(),
            duration_s: 1800.0,
            sampling_hz: 1.0,
            noise_std_temp: None,
            noise_std_hum: None,
            drift_slope_temp: 0.0,
            drift_slope_hum: 0.0,
            outlier_rate: 0.0,
            gap_rate: 0.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid("duration_s", "must be > 0"));
        }
        if !(self.sampling_hz > 0.0 && self.sampling_hz.is_finite()) {
            return Err(Error::invalid("sampling_hz", "must be > 0"));
        }
        for (name, r) in [("outlier_rate", self.outlier_rate), ("gap_rate", self.gap_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(name, format!("{r} not in [0, 1)")));
            }
        }
        if self.outlier_rate + self.gap_rate >= 1.0 {
            return Err(Error::invalid("outlier_rate + gap_rate", "must be < 1"));
        }
        for (name, v) in [("noise_std_temp", self.noise_std_temp), ("noise_std_hum", self.noise_std_hum)] {
            if v.is_some_and(|v| !(v >= 0.0)) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        Ok(())
    }

    /// Noise-free, drift-free, anomaly-free configuration.
    pub fn noise_free(mut self) -> Self {
        self.noise_std_temp = Some(0.0);
        self.noise_std_hum = Some(0.0);
        self.drift_slope_temp = 0.0;
        self.drift_slope_hum = 0.0;
        self.outlier_rate = 0.0;
        self.gap_rate = 0.0;
        self
    }

    pub fn noise_std(&self, profile: &ActivityProfile, channel: Channel) -> f64 {
        let explicit = match channel {
            Channel::Temperature => self.noise_std_temp,
            Channel::Humidity => self.noise_std_hum,
        };
        explicit.unwrap_or(DEFAULT_NOISE_FRACTION * profile.stats(channel).std)
    }

    fn drift(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Temperature => self.drift_slope_temp,
            Channel::Humidity => self.drift_slope_hum,
        }
    }
}

/// `exp(-(t - mu)^2 / (2 sigma^2))`.
pub fn gaussian_bump(t: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", format!("{sigma} must be > 0")));
    }
    let z = (t - mu) / sigma;
    Ok((-0.5 * z * z).exp())
}

/// Generator ground truth accompanying a synthetic series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Bump centres that fall inside the series' time span.
    pub breath_times: Vec<f64>,
    pub breath_rate_hz: f64,
    /// Saturation band used per channel, as (lower, upper).
    pub temp_band: (f64, f64),
    pub hum_band: (f64, f64),
}

impl SynthTruth {
    pub fn breath_count(&self) -> usize {
        self.breath_times.len()
    }

    /// Breaths whose centre lies in `[t0, t1)`.
    pub fn breaths_between(&self, t0: f64, t1: f64) -> usize {
        self.breath_times.iter().filter(|&&t| t >= t0 && t < t1).count()
    }
}

/// Seed for one (label, subject) stream.
pub fn derive_seed(seed: u64, label: ActivityLabel, subject: u32) -> u64 {
    seed ^ ((label.code() as u64) << 32) ^ subject as u64
}

pub fn synthesize_series(label: ActivityLabel, cfg: &SynthConfig) -> Result<LabeledSeries> {
    synthesize_with_truth(label, 0, cfg).map(|(s, _)| s)
}

/// Synthesizes one session for `subject`. Deterministic in
/// `(cfg.seed, label, subject)`.
pub fn synthesize_with_truth(
    label: ActivityLabel,
    subject: u32,
    cfg: &SynthConfig,
) -> Result<(LabeledSeries, SynthTruth)> {
    cfg.validate()?;
    let profile = cfg.profiles.get(&label).ok_or(Error::MissingProfile(label))?;
    profile.check_sampling(cfg.sampling_hz)?;
    let period = profile.breath_period_s();
    if cfg.duration_s < 3.0 * period {
        return Err(Error::InsufficientData(format!(
            "duration {} s shorter than 3 breath periods ({} s)",
            cfg.duration_s,
            3.0 * period
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, label, subject));
    let n = (cfg.duration_s * cfg.sampling_hz).round() as usize;
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / cfg.sampling_hz).collect();
    let phase = rng.gen::<f64>() * period;
    let sigma = BUMP_SIGMA_FRACTION * period;

    // Centres from a few periods before the start to a few after the end so
    // the edges see the same overlap as the interior.
    let span = ts.last().copied().unwrap_or(0.0);
    let first_k = -((4.0 * sigma / period).ceil() as i64) - 1;
    let last_k = ((span + 4.0 * sigma - phase) / period).ceil() as i64 + 1;
    let centres: Vec<f64> = (first_k..=last_k).map(|k| phase + k as f64 * period).collect();
    let train: Vec<f64> = ts
        .iter()
        .map(|&t| {
            centres
                .iter()
                .filter(|&&mu| (t - mu).abs() <= 8.0 * sigma)
                .map(|&mu| gaussian_bump(t, mu, sigma).expect("sigma > 0"))
                .sum()
        })
        .collect();
    let shape = standardize(&train);
    let breath_times: Vec<f64> = centres.iter().copied().filter(|&c| c >= 0.0 && c < span + 1.0 / cfg.sampling_hz).collect();

    let table = ThresholdBounds::published(label);
    let recomputed = ThresholdBounds::recompute(profile, Tolerance::default())?;
    let band = |c: Channel| {
        let (a, b) = table.for_channel(c);
        let (x, y) = recomputed.for_channel(c);
        (a.max(x), b.min(y))
    };

    let mut channels = Vec::with_capacity(2);
    for channel in Channel::BOTH {
        let stats = profile.stats(channel);
        let noise_std = cfg.noise_std(profile, channel);
        let noise: Vec<f64> = if noise_std > 0.0 {
            let dist = Normal::new(0.0, noise_std).map_err(|e| Error::invalid("noise_std", e.to_string()))?;
            (0..n)
                .map(|_| dist.sample(&mut rng).clamp(-3.0 * noise_std, 3.0 * noise_std))
                .collect()
        } else {
            vec![0.0; n]
        };
        let slope = cfg.drift(channel);
        let centre_t = span / 2.0;
        let residual: Vec<f64> = ts
            .iter()
            .zip(&noise)
            .map(|(&t, &z)| slope * (t - centre_t) + z)
            .collect();
        let (lo, hi) = band(channel);
        channels.push(calibrate(&shape, &residual, (lo, hi), stats.mean, stats.std));
    }

    let aqi = Normal::new(AQI_BASELINE, AQI_NOISE).expect("valid");
    let samples = (0..n)
        .map(|i| {
            SensorSample::new(
                ts[i],
                Some(channels[0][i]),
                Some(channels[1][i]),
                Some(aqi.sample(&mut rng)),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let subject_id = format!("s{:02}", subject);
    let device_id = format!("{subject_id}-{label}");
    let series = LabeledSeries::new(samples, label, cfg.sampling_hz, subject_id, device_id)?;
    let truth = SynthTruth {
        breath_times,
        breath_rate_hz: profile.breath_rate_hz,
        temp_band: band(Channel::Temperature),
        hum_band: band(Channel::Humidity),
    };
    Ok((series, truth))
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / std).collect()
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    (mean, (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn render(shape: &[f64], residual: &[f64], gain: f64, offset: f64, band: (f64, f64)) -> Vec<f64> {
    shape
        .iter()
        .zip(residual)
        .map(|(&q, &r)| (offset + gain * q + r).clamp(band.0, band.1))
        .collect()
}

/// Finds the offset giving the target mean for a fixed gain (the clamped
/// mean is monotone in the offset).
fn offset_for_mean(shape: &[f64], residual: &[f64], gain: f64, band: (f64, f64), target: f64) -> f64 {
    let reach = gain * shape.iter().fold(0.0f64, |m, q| m.max(q.abs()))
        + residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let (mut lo, mut hi) = (band.0 - reach - 1.0, band.1 + reach + 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_std(&render(shape, residual, gain, mid, band)).0 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn calibrate(shape: &[f64], residual: &[f64], band: (f64, f64), mean: f64, std: f64) -> Vec<f64> {
    let target_mean = mean.clamp(band.0, band.1);
    let std_at = |gain: f64| {
        let c = offset_for_mean(shape, residual, gain, band, target_mean);
        (mean_std(&render(shape, residual, gain, c, band)).1, c)
    };
    let (mut lo, mut hi) = (0.0, 10.0 * std);
    if std_at(hi).0 < std {
        // Target unreachable inside the band: use the strongest saturation.
        let (_, c) = std_at(hi);
        return render(shape, residual, hi, c, band);
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if std_at(mid).0 < std {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gain = 0.5 * (lo + hi);
    let (_, c) = std_at(gain);
    render(shape, residual, gain, c, band)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "channel")]
pub enum AnomalyKind {
    SpikeHigh(Channel),
    SpikeLow(Channel),
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomaly {
    pub index: usize,
    #[serde(flatten)]
    pub kind: AnomalyKind,
}

/// Injects spikes (one channel pushed at least 2 delta beyond the activity's
/// outlier band) and gaps (both channels missing). Each sample receives at
/// most one anomaly.
pub fn inject_anomalies(
    series: &LabeledSeries,
    cfg: &SynthConfig,
) -> Result<(LabeledSeries, Vec<Anomaly>)> {
    cfg.validate()?;
    if cfg.outlier_rate == 0.0 && cfg.gap_rate == 0.0 {
        return Ok((series.clone(), Vec::new()));
    }
    let label = series.label;
    let table = ThresholdBounds::published(label);
    let tol = Tolerance::default();
    let recomputed = match cfg.profiles.get(&label) {
        Some(p) => Some(ThresholdBounds::recompute(p, tol)?),
        None => None,
    };
    let outer = |c: Channel| {
        let (mut lo, mut hi) = table.for_channel(c);
        if let Some(r) = &recomputed {
            let (a, b) = r.for_channel(c);
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_0000_0000_0000 ^ ((label.code() as u64) << 40));
    let mut log = Vec::new();
    let mut samples = series.samples().to_vec();
    for (index, s) in samples.iter_mut().enumerate() {
        let u: f64 = rng.gen();
        if u < cfg.outlier_rate {
            let channel = if rng.gen::<bool>() { Channel::Temperature } else { Channel::Humidity };
            let high = rng.gen::<bool>();
            let delta = tol.for_channel(channel);
            let push = delta * (2.0 + 2.0 * rng.gen::<f64>());
            let (lo, hi) = outer(channel);
            let (value, kind) = if high {
                (hi + push, AnomalyKind::SpikeHigh(channel))
            } else {
                (lo - push, AnomalyKind::SpikeLow(channel))
            };
            let value = match channel {
                Channel::Temperature => value.clamp(TEMPERATURE_ENVELOPE.0, TEMPERATURE_ENVELOPE.1),
                Channel::Humidity => value.clamp(0.0, 100.0),
            };
            s.set(channel, Some(value));
            log.push(Anomaly { index, kind });
        } else if u < cfg.outlier_rate + cfg.gap_rate {
            s.temperature = None;
            s.humidity = None;
            log.push(Anomaly { index, kind: AnomalyKind::Gap });
        }
    }
    Ok((series.with_samples(samples)?, log))
}

/// One synthetic session with its ground truth and anomaly log.
#[derive(Debug, Clone)]
pub struct SynthSession {
    pub series: LabeledSeries,
    pub truth: SynthTruth,
    pub anomalies: Vec<Anomaly>,
}

/// Generates `subjects` sessions per label, in (label, subject) order.
pub fn generate_dataset(
    labels: &[ActivityLabel],
    subjects: u32,
    cfg: &SynthConfig,
) -> Result<Vec<SynthSession>> {
    let mut out = Vec::with_capacity(labels.len() * subjects as usize);
    for &label in labels {
        for subject in 1..=subjects {
            let (clean, truth) = synthesize_with_truth(label, subject, cfg)?;
            let sub_cfg = SynthConfig {
                seed: derive_seed(cfg.seed, label, subject),
                ..cfg.clone()
            };
            let (series, anomalies) = inject_anomalies(&clean, &sub_cfg)?;
            out.push(SynthSession { series, truth, anomalies });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn stats(label: ActivityLabel, cfg: &SynthConfig, ch: Channel) -> (f64, f64) {
        let s = synthesize_series(label, cfg).unwrap();
        mean_std(&s.complete_channel(ch).unwrap())
    }

    #[test]
    fn bump_values() {
        assert_eq!(gaussian_bump(3.0, 3.0, 0.7).unwrap(), 1.0);
        assert_abs_diff_eq!(gaussian_bump(4.0, 3.0, 1.0).unwrap(), 0.606_530_659_712_633_4, epsilon = 1e-15);
        // exp(-4.5) = 0.011108996538242306...
        assert_abs_diff_eq!(gaussian_bump(3.0 + 3.0 * 2.0, 3.0, 2.0).unwrap(), 0.011_108_996_538_242_306, epsilon = 1e-15);
        assert!(gaussian_bump(0.0, 0.0, 0.0).is_err());
        assert!(gaussian_bump(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn profile_statistics_are_matched() {
        let cfg = SynthConfig::default();
        for (label, p) in &cfg.profiles {
            for ch in Channel::BOTH {
                let (m, s) = stats(*label, &cfg, ch);
                let target = p.stats(ch);
                assert!((m - target.mean).abs() <= 0.3, "{label} {ch} mean {m}");
                assert!((s - target.std).abs() <= 0.15 * target.std, "{label} {ch} std {s}");
            }
        }
    }

    #[test]
    fn running_temperature_mean() {
        let (m, _) = stats(ActivityLabel::Running, &SynthConfig::default(), Channel::Temperature);
        assert!((m - 29.5).abs() <= 0.3);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig { outlier_rate: 0.01, gap_rate: 0.01, ..Default::default() };
        let a = generate_dataset(&[ActivityLabel::Walking], 2, &cfg).unwrap();
        let b = generate_dataset(&[ActivityLabel::Walking], 2, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.series, y.series);
            assert_eq!(x.anomalies, y.anomalies);
        }
        assert_ne!(a[0].series, a[1].series);
    }

    #[test]
    fn noise_free_series_is_periodic() {
        let cfg = SynthConfig { duration_s: 600.0, ..SynthConfig::default().noise_free() };
        let s = synthesize_series(ActivityLabel::Sitting, &cfg).unwrap();
        let x = s.complete_channel(Channel::Temperature).unwrap();
        // Breath period 4 s at 1 Hz: the series repeats every 4 samples.
        for i in 0..x.len() - 4 {
            assert_abs_diff_eq!(x[i], x[i + 4], epsilon = 1e-9);
        }
        let (m, _) = mean_std(&x);
        let acf = |lag: usize| (0..x.len() - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>();
        let best = (1..=8).max_by(|&a, &b| acf(a).partial_cmp(&acf(b)).unwrap()).unwrap();
        assert_eq!(best, 4);
    }

    #[test]
    fn dominant_frequency_is_breath_rate() {
        use rustfft::{num_complex::Complex, FftPlanner};
        let cfg = SynthConfig { duration_s: 1000.0, ..SynthConfig::default().noise_free() };
        for label in [ActivityLabel::Sitting, ActivityLabel::Sleeping, ActivityLabel::Walking] {
            let s = synthesize_series(label, &cfg).unwrap();
            let x = s.complete_channel(Channel::Humidity).unwrap();
            let (m, _) = mean_std(&x);
            let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
            FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
            let n = buf.len();
            let k = (1..n / 2).max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap()).unwrap();
            let f = k as f64 / n as f64;
            let rate = cfg.profiles[&label].breath_rate_hz;
            assert!((f - rate).abs() <= 1.0 / n as f64 + 1e-12, "{label}: {f} vs {rate}");
        }
    }

    #[test]
    fn short_duration_rejected() {
        let cfg = SynthConfig { duration_s: 10.0, ..Default::default() };
        assert!(matches!(
            synthesize_series(ActivityLabel::Sleeping, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn anomalies_identity_when_disabled() {
        let cfg = SynthConfig::default();
        let s = synthesize_series(ActivityLabel::Running, &cfg).unwrap();
        let (out, log) = inject_anomalies(&s, &cfg).unwrap();
        assert_eq!(out, s);
        assert!(log.is_empty());
    }

    #[test]
    fn spikes_leave_the_outlier_band() {
        let cfg = SynthConfig { outlier_rate: 0.01, ..Default::default() };
        let s = synthesize_series(ActivityLabel::Running, &cfg).unwrap();
        let (out, log) = inject_anomalies(&s, &cfg).unwrap();
        assert!((5..=40).contains(&log.len()), "{} spikes", log.len());
        let b = ThresholdBounds::published(ActivityLabel::Running);
        for a in &log {
            let sample = out.samples()[a.index];
            match a.kind {
                AnomalyKind::SpikeHigh(c) => assert!(sample.get(c).unwrap() >= b.for_channel(c).1 + 2.0 * Tolerance::default().for_channel(c) - 1e-9),
                AnomalyKind::SpikeLow(c) => assert!(sample.get(c).unwrap() <= b.for_channel(c).0 - 2.0 * Tolerance::default().for_channel(c) + 1e-9),
                AnomalyKind::Gap => unreachable!(),
            }
            if a.kind == AnomalyKind::SpikeHigh(Channel::Temperature) || a.kind == AnomalyKind::SpikeLow(Channel::Temperature) {
                let t = sample.temperature.unwrap();
                assert!(t < 28.0 || t > 31.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn clean_samples_stay_inside_noise_widened_range(seed in any::<u64>(), code in 0u8..4) {
            let label = ActivityLabel::from_code(code).unwrap();
            let cfg = SynthConfig { seed, duration_s: 400.0, ..Default::default() };
            let s = synthesize_series(label, &cfg).unwrap();
            prop_assert!(s.is_uniform_grid(1e-9));
            let p = cfg.profiles[&label];
            for ch in Channel::BOTH {
                let st = p.stats(ch);
                let k = 3.0 * cfg.noise_std(&p, ch);
                for v in s.complete_channel(ch).unwrap() {
                    prop_assert!(v >= st.min - k - 1e-9 && v <= st.max + k + 1e-9);
                }
            }
        }
    }
}
