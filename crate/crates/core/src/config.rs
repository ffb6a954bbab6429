//! Pipeline configuration (TOML). Every table is optional and unknown keys
//! are rejected.
//!
//! ```toml
//! seed = 42
//! sampling_hz = 1.0
//! activities = ["running", "walking", "sitting", "sleeping"]
//!
//! [preprocess]
//! delta_temp = 0.3
//! delta_hum = 1.1
//! bounds = "published"        # or "recompute"
//!
//! [filter]
//! prefilter_cutoff_hz = 0.45
//! wavelet_scales = 10
//! wavelet_f_low = 0.1
//! wavelet_f_high = 0.45
//! envelope_max_breath_rate_hz = 0.3
//! envelope_cutoff_multiplier = 1.5
//!
//! [stl]
//! seasonal_window = 7
//! # trend_window = 7          # default: smallest odd >= 1.5 x period
//! # period_samples = 4        # default: round(sampling_hz / profile breath rate)
//! inner_iters = 2
//! robust_iters = 1
//!
//! [peaks]
//! source = "wavelet"           # or "envelope"
//! min_distance_s = 1.111
//! prominence_std_factor = 0.25
//! polarity = "maxima"
//!
//! [features]
//! window_s = 30.0
//! overlap = 0.5
//! min_present_fraction = 0.8
//!
//! [model]
//! kind = "knn"                 # knn | decision_tree | random_forest
//! k = 3
//!
//! [evaluation]
//! protocol = "cv"              # or "holdout"
//! folds = 5
//! test_fraction = 0.2
//! # [evaluation.grid]
//! # k = [1, 3, 5, 7]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::breath_analysis::{PeakParams, PeakSource, Polarity};
use crate::domain::{ActivityLabel, ActivityProfile};
use crate::dsp::{ChainConfig, EnvelopeConfig, WaveletBankConfig};
use crate::error::{Error, Result};
use crate::learn::{FeatureConfig, Grid, ModelSpec, MAX_BREATH_RATE_HZ};
use crate::preprocess::{BoundsMode, Tolerance};
use crate::stl::StlConfig;

fn invalid(e: Error) -> Error {
    match e {
        Error::InvalidConfig(_) => e,
        other => Error::InvalidConfig(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub delta_temp: f64,
    pub delta_hum: f64,
    pub bounds: BoundsMode,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        let t = Tolerance::default();
        Self { delta_temp: t.delta_temp, delta_hum: t.delta_hum, bounds: BoundsMode::Published }
    }
}

impl PreprocessSection {
    pub fn tolerance(&self) -> Result<Tolerance> {
        Tolerance::new(self.delta_temp, self.delta_hum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub prefilter_cutoff_hz: f64,
    pub wavelet_scales: usize,
    pub wavelet_f_low: f64,
    pub wavelet_f_high: f64,
    pub envelope_max_breath_rate_hz: f64,
    pub envelope_cutoff_multiplier: f64,
}

impl FilterSection {
    pub fn for_sampling(sampling_hz: f64) -> Self {
        let c = ChainConfig::for_sampling(sampling_hz);
        Self {
            prefilter_cutoff_hz: c.prefilter_cutoff_hz,
            wavelet_scales: c.bank.n_scales,
            wavelet_f_low: c.bank.f_low,
            wavelet_f_high: c.bank.f_high,
            envelope_max_breath_rate_hz: c.envelope.max_breath_rate_hz,
            envelope_cutoff_multiplier: c.envelope.cutoff_multiplier,
        }
    }

    pub fn chain(&self, sampling_hz: f64) -> ChainConfig {
        ChainConfig {
            prefilter_cutoff_hz: self.prefilter_cutoff_hz,
            bank: WaveletBankConfig {
                n_scales: self.wavelet_scales,
                f_low: self.wavelet_f_low,
                f_high: self.wavelet_f_high,
                sampling_hz,
            },
            envelope: EnvelopeConfig {
                max_breath_rate_hz: self.envelope_max_breath_rate_hz,
                cutoff_multiplier: self.envelope_cutoff_multiplier,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StlSection {
    pub seasonal_window: usize,
    pub trend_window: Option<usize>,
    pub period_samples: Option<usize>,
    pub inner_iters: usize,
    pub robust_iters: usize,
}

impl Default for StlSection {
    fn default() -> Self {
        Self { seasonal_window: 7, trend_window: None, period_samples: None, inner_iters: 2, robust_iters: 1 }
    }
}

impl StlSection {
    /// STL settings for one activity at `sampling_hz`.
    pub fn config(&self, sampling_hz: f64, profile: &ActivityProfile) -> Result<StlConfig> {
        let base = match self.period_samples {
            Some(p) => StlConfig::new(p),
            None => StlConfig::for_rate(sampling_hz, profile.breath_rate_hz)?,
        };
        let cfg = StlConfig {
            seasonal_window: self.seasonal_window,
            trend_window: self.trend_window.unwrap_or(base.trend_window),
            inner_iters: self.inner_iters,
            robust_iters: self.robust_iters,
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeaksSection {
    pub source: PeakSource,
    pub min_distance_s: f64,
    pub prominence_std_factor: f64,
    pub polarity: Polarity,
}

impl Default for PeaksSection {
    fn default() -> Self {
        let p = PeakParams::label_agnostic(MAX_BREATH_RATE_HZ);
        Self {
            source: PeakSource::Wavelet,
            min_distance_s: p.min_distance_s,
            prominence_std_factor: p.prominence_std_factor,
            polarity: p.polarity,
        }
    }
}

impl PeaksSection {
    pub fn params(&self) -> PeakParams {
        PeakParams {
            min_distance_s: self.min_distance_s,
            prominence_std_factor: self.prominence_std_factor,
            polarity: self.polarity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub window_s: f64,
    pub overlap: f64,
    pub min_present_fraction: f64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        let f = FeatureConfig::default();
        Self { window_s: f.window_s, overlap: f.overlap, min_present_fraction: f.min_present_fraction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Stratified k-fold cross-validation; the saved model is refit on all data.
    #[default]
    Cv,
    /// Stratified train/test split.
    Holdout,
}

impl Protocol {
    pub fn describe(&self, folds: usize, test_fraction: f64) -> String {
        match self {
            Self::Cv => format!("stratified {folds}-fold cross-validation (pooled out-of-fold predictions)"),
            Self::Holdout => format!(
                "stratified hold-out, {:.0}% train / {:.0}% test",
                100.0 * (1.0 - test_fraction),
                100.0 * test_fraction
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub protocol: Protocol,
    pub folds: usize,
    pub test_fraction: f64,
    pub grid: Option<Grid>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { protocol: Protocol::Cv, folds: 5, test_fraction: 0.2, grid: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sampling")]
    pub sampling_hz: f64,
    #[serde(default = "default_activities")]
    pub activities: Vec<ActivityLabel>,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default = "default_filter")]
    pub filter: FilterSection,
    #[serde(default)]
    pub stl: StlSection,
    #[serde(default)]
    pub peaks: PeaksSection,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_seed() -> u64 {
    42
}

fn default_sampling() -> f64 {
    1.0
}

fn default_activities() -> Vec<ActivityLabel> {
    ActivityLabel::ALL.to_vec()
}

fn default_filter() -> FilterSection {
    FilterSection::for_sampling(1.0)
}

fn default_model() -> ModelSpec {
    ModelSpec::default_for(crate::learn::ModelKind::Knn)
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            sampling_hz: default_sampling(),
            activities: default_activities(),
            preprocess: PreprocessSection::default(),
            filter: default_filter(),
            stl: StlSection::default(),
            peaks: PeaksSection::default(),
            features: FeaturesSection::default(),
            model: default_model(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses and validates; every failure is `Error::InvalidConfig`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn chain(&self) -> ChainConfig {
        self.filter.chain(self.sampling_hz)
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            window_s: self.features.window_s,
            overlap: self.features.overlap,
            min_present_fraction: self.features.min_present_fraction,
            chain: self.chain(),
            peaks: self.peaks.params(),
            peak_source: self.peaks.source,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_hz > 0.0 && self.sampling_hz.is_finite()) {
            return Err(Error::InvalidConfig(format!("sampling_hz {} must be > 0", self.sampling_hz)));
        }
        if self.activities.is_empty() {
            return Err(Error::InvalidConfig("activities must not be empty".into()));
        }
        self.preprocess.tolerance().map_err(invalid)?;
        self.feature_config().validate().map_err(invalid)?;
        if self.peaks.min_distance_s < 1.0 / self.sampling_hz {
            return Err(Error::InvalidConfig(format!(
                "peaks.min_distance_s {} is shorter than one sample",
                self.peaks.min_distance_s
            )));
        }
        for (name, w) in [("stl.seasonal_window", Some(self.stl.seasonal_window)), ("stl.trend_window", self.stl.trend_window)] {
            if let Some(w) = w {
                if w < 3 || w % 2 == 0 {
                    return Err(Error::InvalidConfig(format!("{name} {w} must be odd and >= 3")));
                }
            }
        }
        if self.stl.inner_iters == 0 {
            return Err(Error::InvalidConfig("stl.inner_iters must be >= 1".into()));
        }
        if self.stl.period_samples.is_some_and(|p| p < 2) {
            return Err(Error::InvalidConfig("stl.period_samples must be >= 2".into()));
        }
        self.model.validate().map_err(invalid)?;
        if self.evaluation.folds < 2 {
            return Err(Error::InvalidConfig("evaluation.folds must be >= 2".into()));
        }
        if !(self.evaluation.test_fraction > 0.0 && self.evaluation.test_fraction < 1.0) {
            return Err(Error::InvalidConfig("evaluation.test_fraction must lie in (0, 1)".into()));
        }
        if let Some(grid) = &self.evaluation.grid {
            crate::learn::grid_candidates(self.model.kind(), grid).map_err(invalid)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = PipelineConfig::from_toml("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.hash(), PipelineConfig::default().hash());
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("config.rs");
        let example: String = doc
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").strip_prefix(' ').unwrap_or("").to_string() + "\n")
            .collect();
        let c = PipelineConfig::from_toml(&example).unwrap();
        assert_eq!(c.model, ModelSpec::Knn(crate::learn::KnnParams { k: 3 }));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(PipelineConfig::from_toml("sede = 1"), Err(Error::InvalidConfig(_))));
        assert!(PipelineConfig::from_toml("[filter]\nprefilter_cutoff_hz = 0.45").is_err());
        let nyq = "[filter]\nprefilter_cutoff_hz = 0.6\nwavelet_scales = 10\nwavelet_f_low = 0.1\nwavelet_f_high = 0.45\nenvelope_max_breath_rate_hz = 0.3\nenvelope_cutoff_multiplier = 1.5";
        assert!(matches!(PipelineConfig::from_toml(nyq), Err(Error::InvalidConfig(_))));
        assert!(PipelineConfig::from_toml("[model]\nkind = \"knn\"\nk = 0").is_err());
        assert!(PipelineConfig::from_toml("[model]\nkind = \"decision_tree\"\nmax_depth = 0").is_err());
        assert!(PipelineConfig::from_toml("[stl]\nseasonal_window = 6").is_err());
        assert!(PipelineConfig::from_toml("[evaluation.grid]\nk = []").is_err());
    }

    #[test]
    fn grid_order_is_preserved() {
        let c = PipelineConfig::from_toml("[evaluation.grid]\nzeta = [1]\nk = [1, 3]").err();
        assert!(c.is_some(), "unknown grid key must fail");
        let c = PipelineConfig::from_toml("[model]\nkind = \"decision_tree\"\n[evaluation.grid]\nmin_split = [2, 4]\ncriterion = [\"gini\", \"entropy\"]").unwrap();
        let keys: Vec<&String> = c.evaluation.grid.as_ref().unwrap().keys().collect();
        assert_eq!(keys, ["min_split", "criterion"]);
    }
}
