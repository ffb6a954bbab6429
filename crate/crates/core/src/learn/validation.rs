use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, ConfusionMatrix, EvalReport};
use super::model::{Dataset, ModelKind, ModelSpec, TrainedModel};
use crate::domain::ActivityLabel;
use crate::error::{Error, Result};

/// Indices of each class, in code order, shuffled by one seeded stream.
fn shuffled_by_class(labels: &[ActivityLabel], seed: u64) -> Vec<(ActivityLabel, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ActivityLabel::ALL
        .into_iter()
        .filter_map(|l| {
            let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == l).collect();
            if idx.is_empty() {
                return None;
            }
            idx.shuffle(&mut rng);
            Some((l, idx))
        })
        .collect()
}

/// Per class, `round(count x test_fraction)` samples go to the test set.
/// Returns sorted (train, test) index lists.
pub fn stratified_split(labels: &[ActivityLabel], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test_fraction", format!("{test_fraction} not in (0, 1)")));
    }
    if labels.is_empty() {
        return Err(Error::Stratification("no samples".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, idx) in shuffled_by_class(labels, seed) {
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// `k` disjoint test folds covering every index. Each class is shuffled and
/// dealt round-robin, continuing from where the previous class stopped, so
/// per-class fold counts differ by at most one.
pub fn stratified_kfold(labels: &[ActivityLabel], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("folds", format!("{k} must be >= 2")));
    }
    let classes = shuffled_by_class(labels, seed);
    if let Some((l, idx)) = classes.iter().find(|(_, idx)| idx.len() < k) {
        return Err(Error::Stratification(format!("class {l} has {} samples, fewer than {k} folds", idx.len())));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (_, idx) in classes {
        for i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Out-of-fold predictions pooled over all folds.
    pub pooled: EvalReport,
}

/// Stratified k-fold CV. Fold `f` trains with seed `seed + f`; folds run in
/// parallel and merge in fold order.
pub fn cross_validate(data: &Dataset, spec: ModelSpec, folds: usize, seed: u64, order: &[ActivityLabel]) -> Result<CvReport> {
    let parts = stratified_kfold(&data.y, folds, seed)?;
    let results: Vec<(f64, ConfusionMatrix)> = parts
        .par_iter()
        .enumerate()
        .map(|(f, test)| {
            let mut in_test = vec![false; data.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train: Vec<usize> = (0..data.len()).filter(|&i| !in_test[i]).collect();
            let model = TrainedModel::fit(spec, &data.subset(&train), seed.wrapping_add(f as u64))?;
            let t = data.subset(test);
            let pred = model.predict_all(&t.x)?;
            let cm = ConfusionMatrix::from_predictions(order.to_vec(), &t.y, &pred)?;
            let correct = t.y.iter().zip(&pred).filter(|(a, b)| a == b).count();
            Ok((correct as f64 / t.len() as f64, cm))
        })
        .collect::<Result<_>>()?;
    let mut pooled = ConfusionMatrix::zeros(order.to_vec());
    for (_, cm) in &results {
        pooled.add(cm)?;
    }
    let fold_accuracy: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(CvReport {
        folds,
        mean_accuracy: fold_accuracy.iter().sum::<f64>() / folds as f64,
        fold_accuracy,
        pooled: evaluate(&pooled)?,
    })
}

/// Stratified hold-out: fit on the training part, evaluate on the test part.
pub fn holdout(data: &Dataset, spec: ModelSpec, test_fraction: f64, seed: u64, order: &[ActivityLabel]) -> Result<(TrainedModel, EvalReport)> {
    let (train, test) = stratified_split(&data.y, test_fraction, seed)?;
    let model = TrainedModel::fit(spec, &data.subset(&train), seed)?;
    let t = data.subset(&test);
    let pred = model.predict_all(&t.x)?;
    let report = evaluate(&ConfusionMatrix::from_predictions(order.to_vec(), &t.y, &pred)?)?;
    Ok((model, report))
}

/// Hyperparameter name to candidate values, in declared order.
pub type Grid = serde_json::Map<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: serde_json::Map<String, serde_json::Value>,
    pub spec: ModelSpec,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ModelSpec,
    pub best_score: f64,
    pub table: Vec<GridRow>,
}

/// Candidates of the grid's cartesian product; the first key varies slowest.
pub fn grid_candidates(kind: ModelKind, grid: &Grid) -> Result<Vec<(serde_json::Map<String, serde_json::Value>, ModelSpec)>> {
    let mut combos: Vec<serde_json::Map<String, serde_json::Value>> = vec![serde_json::Map::new()];
    for (key, values) in grid {
        if key == "kind" {
            return Err(Error::InvalidConfig("grid may not vary `kind`".into()));
        }
        let values = values
            .as_array()
            .filter(|a| !a.is_empty())
            .ok_or_else(|| Error::InvalidConfig(format!("grid entry `{key}` must be a non-empty list")))?;
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.insert(key.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    let base = serde_json::to_value(ModelSpec::default_for(kind))?;
    combos
        .into_iter()
        .map(|params| {
            let mut obj = base.as_object().expect("spec is an object").clone();
            for (k, v) in &params {
                obj.insert(k.clone(), v.clone());
            }
            let spec: ModelSpec = serde_json::from_value(serde_json::Value::Object(obj))
                .map_err(|e| Error::InvalidConfig(format!("grid candidate {params:?}: {e}")))?;
            spec.validate()?;
            Ok((params, spec))
        })
        .collect()
}

/// Exhaustive sweep scored by mean stratified-CV accuracy; ties keep the
/// earlier candidate.
pub fn grid_search(data: &Dataset, kind: ModelKind, grid: &Grid, folds: usize, seed: u64) -> Result<GridResult> {
    let order = ActivityLabel::ALL;
    let mut table = Vec::new();
    for (params, spec) in grid_candidates(kind, grid)? {
        let cv = cross_validate(data, spec, folds, seed, &order)?;
        table.push(GridRow { params, spec, mean_accuracy: cv.mean_accuracy });
    }
    let best = table
        .iter()
        .fold(None::<&GridRow>, |b, r| match b {
            Some(b) if b.mean_accuracy >= r.mean_accuracy => Some(b),
            _ => Some(r),
        })
        .expect("grid has at least one candidate");
    Ok(GridResult { best: best.spec, best_score: best.mean_accuracy, table })
}
