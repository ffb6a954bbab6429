//! Trained-model archive.
//!
//! Layout (JSON object, keys in this order):
//!
//! ```text
//! header        { "format": "breath-har-model", "version": 1 }
//! hyperparams   { "kind": "knn" | "decision_tree" | "random_forest", ... }
//! feature_names [ ... ]
//! scaling       [ { "x_min", "x_max" } per feature ]
//! train_seed    integer
//! payload       { "type": "knn" | "tree" | "forest", ... }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_NAMES};
use super::forest::{ForestParams, RandomForest};
use super::knn::KnnModel;
use super::tree::{DecisionTree, TreeParams};
use crate::domain::ActivityLabel;
use crate::error::{Error, Result};
use crate::preprocess::ScalingParams;

pub const ARCHIVE_FORMAT: &str = "breath-har-model";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    DecisionTree,
    RandomForest,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(Self::Knn),
            "dt" | "tree" | "decision_tree" => Ok(Self::DecisionTree),
            "rf" | "forest" | "random_forest" => Ok(Self::RandomForest),
            _ => Err(Error::InvalidConfig(format!("model `{s}` is not knn|dt|rf"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Knn => "knn",
            Self::DecisionTree => "decision_tree",
            Self::RandomForest => "random_forest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 3 }
    }
}

/// Model kind plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Knn(KnnParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Knn => Self::Knn(KnnParams::default()),
            ModelKind::DecisionTree => Self::DecisionTree(TreeParams::default()),
            ModelKind::RandomForest => Self::RandomForest(ForestParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Knn(_) => ModelKind::Knn,
            Self::DecisionTree(_) => ModelKind::DecisionTree,
            Self::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Knn(p) if p.k == 0 => Err(Error::InvalidConfig("k must be >= 1".into())),
            Self::Knn(_) => Ok(()),
            Self::DecisionTree(p) => p.validate(),
            Self::RandomForest(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Payload {
    Knn(KnnModel),
    Tree(DecisionTree),
    Forest(RandomForest),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub format: String,
    pub version: u32,
}

/// Labeled design matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<ActivityLabel>,
    pub ids: Vec<String>,
}

impl Dataset {
    pub fn from_features(features: &[FeatureVector]) -> Result<Self> {
        let mut d = Self::default();
        for f in features {
            let label = f
                .label
                .ok_or_else(|| Error::Validation(format!("window {} has no label", f.window_id)))?;
            d.x.push(f.to_array().to_vec());
            d.y.push(label);
            d.ids.push(f.window_id.clone());
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            ids: idx.iter().map(|&i| self.ids.get(i).cloned().unwrap_or_default()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub header: ArchiveHeader,
    pub hyperparams: ModelSpec,
    pub feature_names: Vec<String>,
    pub scaling: Vec<ScalingParams>,
    pub train_seed: u64,
    pub payload: Payload,
}

impl TrainedModel {
    /// Fits per-feature scaling on `train`, then the model on scaled rows.
    pub fn fit(spec: ModelSpec, train: &Dataset, seed: u64) -> Result<Self> {
        spec.validate()?;
        if train.is_empty() {
            return Err(Error::UntrainedModel);
        }
        let d = train.x[0].len();
        if train.x.iter().any(|r| r.len() != d) {
            return Err(Error::Validation("ragged feature rows".into()));
        }
        let scaling: Vec<ScalingParams> = (0..d)
            .map(|j| ScalingParams::fit(&train.x.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        let scaled: Vec<Vec<f64>> = train.x.iter().map(|r| apply_scaling(&scaling, r)).collect();
        let payload = match spec {
            ModelSpec::Knn(p) => Payload::Knn(KnnModel::fit(scaled, train.y.clone(), p.k)?),
            ModelSpec::DecisionTree(p) => Payload::Tree(DecisionTree::fit(&scaled, &train.y, p)?),
            ModelSpec::RandomForest(p) => Payload::Forest(RandomForest::fit(&scaled, &train.y, p, seed)?),
        };
        let feature_names = if d == FEATURE_NAMES.len() {
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..d).map(|j| format!("f{j}")).collect()
        };
        Ok(Self {
            header: ArchiveHeader { format: ARCHIVE_FORMAT.into(), version: ARCHIVE_VERSION },
            hyperparams: spec,
            feature_names,
            scaling,
            train_seed: seed,
            payload,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.hyperparams.kind()
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<ActivityLabel> {
        if x.len() != self.scaling.len() {
            return Err(Error::Validation(format!("expected {} features, got {}", self.scaling.len(), x.len())));
        }
        let s = apply_scaling(&self.scaling, x);
        Ok(match &self.payload {
            Payload::Knn(m) => m.predict(&s),
            Payload::Tree(t) => t.predict(&s),
            Payload::Forest(f) => f.predict(&s),
        })
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<ActivityLabel> {
        self.predict_row(&fv.to_array())
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<ActivityLabel>> {
        x.iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.header.format != ARCHIVE_FORMAT {
            return Err(Error::Validation(format!("not a model archive (format `{}`)", self.header.format)));
        }
        if self.header.version != ARCHIVE_VERSION {
            return Err(Error::Validation(format!(
                "archive version {} unsupported (expected {ARCHIVE_VERSION})",
                self.header.version
            )));
        }
        let consistent = matches!(
            (&self.hyperparams, &self.payload),
            (ModelSpec::Knn(_), Payload::Knn(_))
                | (ModelSpec::DecisionTree(_), Payload::Tree(_))
                | (ModelSpec::RandomForest(_), Payload::Forest(_))
        );
        if !consistent {
            return Err(Error::Validation("payload does not match model kind".into()));
        }
        if self.feature_names.len() != self.scaling.len() {
            return Err(Error::Validation("feature names and scaling differ in length".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

fn apply_scaling(scaling: &[ScalingParams], x: &[f64]) -> Vec<f64> {
    scaling.iter().zip(x).map(|(p, v)| p.scale(*v)).collect()
}

pub fn knn_fit(train: &[FeatureVector], k: usize) -> Result<TrainedModel> {
    TrainedModel::fit(ModelSpec::Knn(KnnParams { k }), &Dataset::from_features(train)?, 0)
}

pub fn tree_fit(train: &[FeatureVector], params: TreeParams) -> Result<TrainedModel> {
    TrainedModel::fit(ModelSpec::DecisionTree(params), &Dataset::from_features(train)?, 0)
}

pub fn forest_fit(train: &[FeatureVector], params: ForestParams, seed: u64) -> Result<TrainedModel> {
    TrainedModel::fit(ModelSpec::RandomForest(params), &Dataset::from_features(train)?, seed)
}

pub fn predict(model: &TrainedModel, x: &FeatureVector) -> Result<ActivityLabel> {
    model.predict(x)
}
