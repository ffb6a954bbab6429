use serde::{Deserialize, Serialize};

use crate::domain::ActivityLabel;
use crate::error::{Error, Result};

/// Brute-force Euclidean neighbour store over already-scaled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<ActivityLabel>,
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnModel {
    pub fn fit(points: Vec<Vec<f64>>, labels: Vec<ActivityLabel>, k: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::UntrainedModel);
        }
        if points.len() != labels.len() {
            return Err(Error::Validation(format!("{} points vs {} labels", points.len(), labels.len())));
        }
        if k == 0 || k > points.len() {
            return Err(Error::invalid("k", format!("{k} must lie in 1..={}", points.len())));
        }
        Ok(Self { k, points, labels })
    }

    /// Indices of the `k` nearest points, ordered by (distance, index).
    pub fn neighbors(&self, x: &[f64]) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = self.points.iter().map(|p| squared_distance(p, x)).enumerate().collect();
        let k = self.k;
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
        }
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.into_iter().map(|(i, sq)| (i, sq.sqrt())).collect()
    }

    /// Majority vote; ties go to the smaller summed distance, then the lower
    /// label code.
    pub fn predict(&self, x: &[f64]) -> ActivityLabel {
        let mut votes: [(usize, f64); 4] = [(0, 0.0); 4];
        for (i, d) in self.neighbors(x) {
            let v = &mut votes[self.labels[i].code() as usize];
            v.0 += 1;
            v.1 += d;
        }
        let best = (0..4)
            .filter(|&c| votes[c].0 > 0)
            .min_by(|&a, &b| votes[b].0.cmp(&votes[a].0).then(votes[a].1.total_cmp(&votes[b].1)).then(a.cmp(&b)))
            .expect("k >= 1");
        ActivityLabel::from_code(best as u8).expect("valid code")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivityLabel::*;

    #[test]
    fn k1_returns_exact_match_label() {
        let m = KnnModel::fit(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.3, 0.9]], vec![Running, Sleeping, Walking], 1).unwrap();
        assert_eq!(m.predict(&[0.3, 0.9]), Walking);
    }

    #[test]
    fn k3_majority() {
        let m = KnnModel::fit(
            vec![vec![0.0], vec![0.1], vec![0.2], vec![5.0]],
            vec![Running, Running, Walking, Sitting],
            3,
        )
        .unwrap();
        assert_eq!(m.predict(&[0.05]), Running);
    }

    #[test]
    fn ties_prefer_closer_class_then_lower_code() {
        // One vote each at k = 2: Sitting is closer.
        let m = KnnModel::fit(vec![vec![1.0], vec![-2.0]], vec![Sitting, Running], 2).unwrap();
        assert_eq!(m.predict(&[0.0]), Sitting);
        // Equal distances: lower code (Running = 0) wins.
        let m = KnnModel::fit(vec![vec![1.0], vec![-1.0]], vec![Sitting, Running], 2).unwrap();
        assert_eq!(m.predict(&[0.0]), Running);
    }

    #[test]
    fn fit_preconditions() {
        assert!(matches!(KnnModel::fit(vec![], vec![], 1), Err(Error::UntrainedModel)));
        assert!(KnnModel::fit(vec![vec![0.0]], vec![Running], 2).is_err());
        assert!(KnnModel::fit(vec![vec![0.0]], vec![Running], 0).is_err());
    }
}
