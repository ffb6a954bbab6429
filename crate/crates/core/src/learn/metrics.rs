use serde::{Deserialize, Serialize};

use crate::domain::ActivityLabel;
use crate::error::{Error, Result};

/// Square count matrix, rows actual and columns predicted, over an explicit
/// label order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<ActivityLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<ActivityLabel>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let l = labels.len();
        if l == 0 {
            return Err(Error::Validation("confusion matrix needs at least one label".into()));
        }
        if counts.len() != l || counts.iter().any(|r| r.len() != l) {
            return Err(Error::Validation(format!("confusion matrix must be {l}x{l}")));
        }
        let mut seen = labels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != l {
            return Err(Error::Validation("duplicate label in confusion matrix order".into()));
        }
        Ok(Self { labels, counts })
    }

    pub fn zeros(labels: Vec<ActivityLabel>) -> Self {
        let l = labels.len();
        Self { labels, counts: vec![vec![0; l]; l] }
    }

    pub fn from_predictions(labels: Vec<ActivityLabel>, actual: &[ActivityLabel], predicted: &[ActivityLabel]) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(Error::Validation(format!(
                "{} actual labels vs {} predictions",
                actual.len(),
                predicted.len()
            )));
        }
        let mut m = Self::zeros(labels);
        for (&a, &p) in actual.iter().zip(predicted) {
            let i = m.index_of(a)?;
            let j = m.index_of(p)?;
            m.counts[i][j] += 1;
        }
        Ok(m)
    }

    fn index_of(&self, label: ActivityLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or_else(|| Error::Validation(format!("label {label} not in confusion matrix order")))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, other: &Self) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::Validation("confusion matrices use different label orders".into()));
        }
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
        Ok(())
    }

    /// CSV shaped like a printed confusion table: header row of predicted
    /// labels, one row per actual label.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("actual\\predicted");
        for l in &self.labels {
            s.push(',');
            s.push_str(l.as_str());
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            s.push_str(l.as_str());
            for c in row {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: ActivityLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the metric's denominator was zero and 0 was reported.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
}

impl EvalReport {
    pub fn class(&self, label: ActivityLabel) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn evaluate(confusion: &ConfusionMatrix) -> Result<EvalReport> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let l = confusion.labels.len();
    let m = &confusion.counts;
    let per_class: Vec<ClassMetrics> = (0..l)
        .map(|c| {
            let tp = m[c][c];
            let row: u64 = m[c].iter().sum();
            let col: u64 = (0..l).map(|r| m[r][c]).sum();
            let (precision, precision_undefined) = ratio(tp, col);
            let (recall, recall_undefined) = ratio(tp, row);
            let f1_undefined = precision + recall == 0.0;
            let f1 = if f1_undefined { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics {
                label: confusion.labels[c],
                precision,
                recall,
                f1,
                support: row,
                precision_undefined,
                recall_undefined,
                f1_undefined,
            }
        })
        .collect();

    let trace: u64 = (0..l).map(|c| m[c][c]).sum();
    let avg = |f: &dyn Fn(&ClassMetrics) -> f64, weighted: bool| -> f64 {
        if weighted {
            per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64
        } else {
            per_class.iter().map(f).sum::<f64>() / l as f64
        }
    };
    let averages = |weighted| Averages {
        precision: avg(&|c| c.precision, weighted),
        recall: avg(&|c| c.recall, weighted),
        f1: avg(&|c| c.f1, weighted),
    };
    Ok(EvalReport {
        confusion: confusion.clone(),
        accuracy: trace as f64 / total as f64,
        macro_avg: averages(false),
        weighted_avg: averages(true),
        per_class,
        total,
    })
}
