//! Shared vocabulary: activity labels, sensor samples, labeled series and
//! the per-activity statistical profiles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical envelope of the in-mask temperature sensor, in degrees Celsius.
pub const TEMPERATURE_ENVELOPE: (f64, f64) = (-40.0, 85.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivityLabel {
    Running,
    Walking,
    Sitting,
    Sleeping,
}

impl ActivityLabel {
    /// All labels in code order.
    pub const ALL: [ActivityLabel; 4] = [
        ActivityLabel::Running,
        ActivityLabel::Walking,
        ActivityLabel::Sitting,
        ActivityLabel::Sleeping,
    ];

    /// Stable integer code used for deterministic tie-breaking.
    pub fn code(self) -> u8 {
        match self {
            ActivityLabel::Running => 0,
            ActivityLabel::Walking => 1,
            ActivityLabel::Sitting => 2,
            ActivityLabel::Sleeping => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityLabel::Running => "running",
            ActivityLabel::Walking => "walking",
            ActivityLabel::Sitting => "sitting",
            ActivityLabel::Sleeping => "sleeping",
        }
    }

    /// Two-letter prefix used for correlation channel names (R, W, SE, SL).
    pub fn channel_prefix(self) -> &'static str {
        match self {
            ActivityLabel::Running => "R",
            ActivityLabel::Walking => "W",
            ActivityLabel::Sitting => "SE",
            ActivityLabel::Sleeping => "SL",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(code) = t.parse::<u8>() {
            return Self::from_code(code)
                .ok_or_else(|| Error::Validation(format!("unknown activity code {code}")));
        }
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Validation(format!("unknown activity `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Temperature,
    Humidity,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::Temperature, Channel::Humidity];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Temperature => "temperature",
            Channel::Humidity => "humidity",
        }
    }

    /// Suffix used for correlation channel names (`_T`, `_H`).
    pub fn suffix(self) -> &'static str {
        match self {
            Channel::Temperature => "T",
            Channel::Humidity => "H",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timestamped reading. `None` in a channel is an explicit missing marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub timestamp: f64,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub aqi_raw: Option<f64>,
}

impl SensorSample {
    /// Validates the sample. Humidity outside [0, 100] is clamped and logged.
    pub fn new(
        timestamp: f64,
        temperature: Option<f64>,
        humidity: Option<f64>,
        aqi_raw: Option<f64>,
    ) -> Result<Self> {
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(Error::Validation(format!(
                "timestamp {timestamp} must be finite and non-negative"
            )));
        }
        if let Some(t) = temperature {
            let (lo, hi) = TEMPERATURE_ENVELOPE;
            if !t.is_finite() || t < lo || t > hi {
                return Err(Error::Validation(format!(
                    "temperature {t} outside sensor envelope [{lo}, {hi}]"
                )));
            }
        }
        let humidity = match humidity {
            Some(h) if !h.is_finite() => {
                return Err(Error::Validation(format!("humidity {h} is not finite")))
            }
            Some(h) if !(0.0..=100.0).contains(&h) => {
                log::warn!("humidity {h} clamped to [0, 100] at t={timestamp}");
                Some(h.clamp(0.0, 100.0))
            }
            h => h,
        };
        if let Some(a) = aqi_raw {
            if !a.is_finite() {
                return Err(Error::Validation(format!("aqi_raw {a} is not finite")));
            }
        }
        Ok(Self {
            timestamp,
            temperature,
            humidity,
            aqi_raw,
        })
    }

    pub fn get(&self, channel: Channel) -> Option<f64> {
        match channel {
            Channel::Temperature => self.temperature,
            Channel::Humidity => self.humidity,
        }
    }

    pub fn set(&mut self, channel: Channel, value: Option<f64>) {
        match channel {
            Channel::Temperature => self.temperature = value,
            Channel::Humidity => self.humidity = value,
        }
    }
}

/// An ordered, single-device, single-activity series.
///
/// The device id lives on the series rather than on each sample, which makes
/// "all samples share one device" hold by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    samples: Vec<SensorSample>,
    pub label: ActivityLabel,
    pub sampling_hz: f64,
    pub subject_id: String,
    pub device_id: String,
}

impl LabeledSeries {
    pub fn new(
        samples: Vec<SensorSample>,
        label: ActivityLabel,
        sampling_hz: f64,
        subject_id: impl Into<String>,
        device_id: impl Into<String>,
    ) -> Result<Self> {
        if !(sampling_hz.is_finite() && sampling_hz > 0.0) {
            return Err(Error::invalid("sampling_hz", format!("{sampling_hz} must be > 0")));
        }
        if let Some(i) = first_non_increasing(&samples) {
            return Err(Error::Validation(format!(
                "timestamps not strictly increasing at sample {i}"
            )));
        }
        Ok(Self {
            samples,
            label,
            sampling_hz,
            subject_id: subject_id.into(),
            device_id: device_id.into(),
        })
    }

    pub fn samples(&self) -> &[SensorSample] {
        &self.samples
    }

    /// Replaces the samples, re-checking the ordering invariant.
    pub fn with_samples(&self, samples: Vec<SensorSample>) -> Result<Self> {
        Self::new(
            samples,
            self.label,
            self.sampling_hz,
            self.subject_id.clone(),
            self.device_id.clone(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.timestamp).collect()
    }

    /// Channel values with missing markers.
    pub fn channel(&self, channel: Channel) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.get(channel)).collect()
    }

    /// Channel values, or `None` if any sample is missing in that channel.
    pub fn complete_channel(&self, channel: Channel) -> Option<Vec<f64>> {
        self.samples.iter().map(|s| s.get(channel)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.temperature.is_none() || s.humidity.is_none())
            .count()
    }

    /// True when consecutive timestamps differ by exactly `1/sampling_hz`
    /// within `tol` seconds.
    pub fn is_uniform_grid(&self, tol: f64) -> bool {
        let dt = 1.0 / self.sampling_hz;
        self.samples
            .windows(2)
            .all(|w| ((w[1].timestamp - w[0].timestamp) - dt).abs() <= tol)
    }
}

fn first_non_increasing(samples: &[SensorSample]) -> Option<usize> {
    samples
        .windows(2)
        .position(|w| w[1].timestamp.partial_cmp(&w[0].timestamp) != Some(std::cmp::Ordering::Greater))
        .map(|i| i + 1)
}

/// Per-activity statistics of exhaled temperature and humidity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub label: ActivityLabel,
    pub temp_mean: f64,
    pub temp_std: f64,
    pub temp_min: f64,
    pub temp_max: f64,
    pub hum_mean: f64,
    pub hum_std: f64,
    pub hum_min: f64,
    pub hum_max: f64,
    pub breath_rate_hz: f64,
}

/// Channel statistics as (mean, std, min, max).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ActivityProfile {
    pub fn new(
        label: ActivityLabel,
        temp: ChannelStats,
        hum: ChannelStats,
        breath_rate_hz: f64,
    ) -> Result<Self> {
        for (name, s) in [("temperature", temp), ("humidity", hum)] {
            if !(s.min <= s.mean && s.mean <= s.max) {
                return Err(Error::Validation(format!(
                    "{label} {name}: require min <= mean <= max, got {} <= {} <= {}",
                    s.min, s.mean, s.max
                )));
            }
            if !(s.std > 0.0) {
                return Err(Error::Validation(format!("{label} {name}: std must be > 0")));
            }
        }
        if !(breath_rate_hz > 0.0 && breath_rate_hz.is_finite()) {
            return Err(Error::Validation(format!(
                "{label}: breath_rate_hz {breath_rate_hz} must be > 0"
            )));
        }
        Ok(Self {
            label,
            temp_mean: temp.mean,
            temp_std: temp.std,
            temp_min: temp.min,
            temp_max: temp.max,
            hum_mean: hum.mean,
            hum_std: hum.std,
            hum_min: hum.min,
            hum_max: hum.max,
            breath_rate_hz,
        })
    }

    pub fn stats(&self, channel: Channel) -> ChannelStats {
        match channel {
            Channel::Temperature => ChannelStats {
                mean: self.temp_mean,
                std: self.temp_std,
                min: self.temp_min,
                max: self.temp_max,
            },
            Channel::Humidity => ChannelStats {
                mean: self.hum_mean,
                std: self.hum_std,
                min: self.hum_min,
                max: self.hum_max,
            },
        }
    }

    /// Checks the breath rate against the Nyquist limit of `sampling_hz`.
    pub fn check_sampling(&self, sampling_hz: f64) -> Result<()> {
        if self.breath_rate_hz >= sampling_hz / 2.0 {
            return Err(Error::Validation(format!(
                "{}: breath rate {} Hz not below Nyquist {} Hz",
                self.label,
                self.breath_rate_hz,
                sampling_hz / 2.0
            )));
        }
        Ok(())
    }

    pub fn breath_period_s(&self) -> f64 {
        1.0 / self.breath_rate_hz
    }
}

/// Default breathing rates, ordered by activity intensity.
pub fn default_breath_rate(label: ActivityLabel) -> f64 {
    match label {
        ActivityLabel::Running => 0.45,
        ActivityLabel::Walking => 0.33,
        ActivityLabel::Sitting => 0.25,
        ActivityLabel::Sleeping => 0.20,
    }
}

/// Temperature and humidity profiles of the four activities (mean, std,
/// observed range) from the reference mask study.
pub fn default_profiles() -> BTreeMap<ActivityLabel, ActivityProfile> {
    let rows = [
        (ActivityLabel::Running, (29.5, 1.2, 28.3, 30.7), (75.2, 2.1, 72.0, 78.5)),
        (ActivityLabel::Walking, (30.1, 1.1, 28.9, 31.2), (73.5, 1.8, 71.2, 76.3)),
        (ActivityLabel::Sitting, (31.8, 0.9, 30.7, 32.9), (68.9, 1.5, 67.4, 70.5)),
        (ActivityLabel::Sleeping, (32.3, 0.8, 31.4, 33.1), (71.2, 1.7, 69.5, 73.8)),
    ];
    rows.into_iter()
        .map(|(label, t, h)| {
            let stats = |(mean, std, min, max): (f64, f64, f64, f64)| ChannelStats { mean, std, min, max };
            let p = ActivityProfile::new(label, stats(t), stats(h), default_breath_rate(label))
                .expect("built-in profiles are valid");
            (label, p)
        })
        .collect()
}
