use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{majority, Criterion, DecisionTree, TreeParams};
use crate::domain::ActivityLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub criterion: Criterion,
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_split")]
    pub min_split: usize,
    #[serde(default = "default_true")]
    pub bootstrap: bool,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    #[serde(default)]
    pub max_features: Option<usize>,
}

fn default_trees() -> usize {
    100
}

fn default_min_split() -> usize {
    2
}

fn default_true() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, criterion: Criterion::Entropy, max_depth: None, min_split: 2, bootstrap: true, max_features: None }
    }
}

impl ForestParams {
    pub fn tree(&self) -> TreeParams {
        TreeParams { criterion: self.criterion, max_depth: self.max_depth, min_split: self.min_split }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidConfig("max_features must be >= 1".into()));
        }
        self.tree().validate()
    }

    pub fn features_per_split(&self, d: usize) -> usize {
        self.max_features.unwrap_or_else(|| (d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `t` draws from its own stream seeded with `seed + t`, so the
    /// ensemble does not depend on thread scheduling.
    pub fn fit(x: &[Vec<f64>], y: &[ActivityLabel], params: ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if x.is_empty() {
            return Err(Error::UntrainedModel);
        }
        let n = x.len();
        let d = x[0].len();
        let m = params.features_per_split(d);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
                let idx: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_with(x, y, &idx, params.tree(), |d| {
                    let mut f = sample(&mut rng, d, m).into_vec();
                    f.sort_unstable();
                    f
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trees })
    }

    pub fn predict(&self, x: &[f64]) -> ActivityLabel {
        let mut votes = [0usize; 4];
        for t in &self.trees {
            votes[t.predict(x).code() as usize] += 1;
        }
        majority(&votes)
    }
}
