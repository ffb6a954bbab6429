//! Windowed features and from-scratch classifiers with stratified
//! validation and classification reports.

mod features;
mod forest;
mod knn;
mod metrics;
mod model;
mod tree;
mod validation;

pub use self::features::{
    extract_dataset, extract_features, heuristic_label, verify_labels, FeatureConfig, FeatureVector, LabelVerification,
    FEATURE_NAMES, MAX_BREATH_RATE_HZ, N_FEATURES,
};
pub use self::forest::{ForestParams, RandomForest};
pub use self::knn::KnnModel;
pub use self::metrics::{evaluate, Averages, ClassMetrics, ConfusionMatrix, EvalReport};
pub use self::model::{
    forest_fit, knn_fit, predict, tree_fit, ArchiveHeader, Dataset, KnnParams, ModelKind, ModelSpec, Payload,
    TrainedModel, ARCHIVE_FORMAT, ARCHIVE_VERSION,
};
pub use self::tree::{impurity, Criterion, DecisionTree, Node, TreeParams};
pub use self::validation::{
    cross_validate, grid_candidates, grid_search, holdout, stratified_kfold, stratified_split, CvReport, Grid,
    GridResult, GridRow,
};

use crate::domain::ActivityLabel;

/// Row and column order of published classification tables.
pub const ALPHABETICAL_ORDER: [ActivityLabel; 4] =
    [ActivityLabel::Running, ActivityLabel::Sitting, ActivityLabel::Sleeping, ActivityLabel::Walking];
