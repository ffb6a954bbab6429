use serde::{Deserialize, Serialize};

use crate::domain::ActivityLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Entropy,
    Gini,
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "entropy" => Ok(Self::Entropy),
            "gini" => Ok(Self::Gini),
            _ => Err(Error::InvalidConfig(format!("criterion `{s}` is not entropy|gini"))),
        }
    }
}

/// Node impurity of class counts; entropy is in bits.
pub fn impurity(counts: &[usize], criterion: Criterion) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    match criterion {
        Criterion::Entropy => counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum(),
        Criterion::Gini => 1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    #[serde(default)]
    pub criterion: Criterion,
    /// `None` grows until leaves are pure or unsplittable.
    #[serde(default)]
    pub max_depth: Option<usize>,
    #[serde(default = "default_min_split")]
    pub min_split: usize,
}

fn default_min_split() -> usize {
    2
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { criterion: Criterion::Entropy, max_depth: None, min_split: 2 }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::InvalidConfig("max_depth 0 admits no tree".into()));
        }
        if self.min_split < 2 {
            return Err(Error::InvalidConfig(format!("min_split {} must be >= 2", self.min_split)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf { label: ActivityLabel, counts: [usize; 4] },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Binary tree stored as a node arena; `nodes[0]` is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

fn class_counts(y: &[ActivityLabel], idx: &[usize]) -> [usize; 4] {
    let mut c = [0; 4];
    for &i in idx {
        c[y[i].code() as usize] += 1;
    }
    c
}

/// Most frequent class, lowest code on ties.
pub(crate) fn majority(counts: &[usize; 4]) -> ActivityLabel {
    let best = (0..4).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).expect("four classes");
    ActivityLabel::from_code(best as u8).expect("valid code")
}

struct Builder<'a, F> {
    x: &'a [Vec<f64>],
    y: &'a [ActivityLabel],
    params: TreeParams,
    choose_features: F,
    nodes: Vec<Node>,
}

impl<F: FnMut(usize) -> Vec<usize>> Builder<'_, F> {
    fn best_split(&mut self, idx: &[usize], parent: &[usize; 4]) -> Option<(usize, f64, Vec<usize>, Vec<usize>)> {
        let d = self.x[idx[0]].len();
        let crit = self.params.criterion;
        let n = idx.len() as f64;
        let parent_imp = impurity(parent, crit);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in (self.choose_features)(d) {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = [0usize; 4];
            for pos in 0..order.len() - 1 {
                left[self.y[order[pos]].code() as usize] += 1;
                let (a, b) = (self.x[order[pos]][f], self.x[order[pos + 1]][f]);
                if a == b {
                    continue;
                }
                let mut right = *parent;
                for c in 0..4 {
                    right[c] -= left[c];
                }
                let nl = (pos + 1) as f64;
                let gain = parent_imp - (nl / n) * impurity(&left, crit) - ((n - nl) / n) * impurity(&right, crit);
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((gain, f, t));
                }
            }
        }
        let (_, f, t) = best?;
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][f] <= t);
        Some((f, t, l, r))
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let counts = class_counts(self.y, idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { label: majority(&counts), counts });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || depth_capped || idx.len() < self.params.min_split {
            return id;
        }
        if let Some((feature, threshold, l, r)) = self.best_split(idx, &counts) {
            let left = self.build(&l, depth + 1);
            let right = self.build(&r, depth + 1);
            self.nodes[id] = Node::Split { feature, threshold, left, right };
        }
        id
    }
}

impl DecisionTree {
    pub fn fit(x: &[Vec<f64>], y: &[ActivityLabel], params: TreeParams) -> Result<Self> {
        let idx: Vec<usize> = (0..x.len()).collect();
        Self::fit_with(x, y, &idx, params, |d| (0..d).collect())
    }

    /// Fits on the rows in `idx` (repeats allowed), asking `choose_features`
    /// for the ascending candidate feature list at each split.
    pub fn fit_with(
        x: &[Vec<f64>],
        y: &[ActivityLabel],
        idx: &[usize],
        params: TreeParams,
        choose_features: impl FnMut(usize) -> Vec<usize>,
    ) -> Result<Self> {
        params.validate()?;
        if idx.is_empty() || x.is_empty() {
            return Err(Error::UntrainedModel);
        }
        if x.len() != y.len() {
            return Err(Error::Validation(format!("{} rows vs {} labels", x.len(), y.len())));
        }
        let mut b = Builder { x, y, params, choose_features, nodes: Vec::new() };
        b.build(idx, 0);
        Ok(Self { nodes: b.nodes })
    }

    pub fn predict(&self, x: &[f64]) -> ActivityLabel {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { label, .. } => return *label,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ActivityLabel::*;

    #[test]
    fn impurity_values() {
        assert_eq!(impurity(&[5, 5, 0, 0], Criterion::Entropy), 1.0);
        assert_eq!(impurity(&[4, 4, 4, 4], Criterion::Entropy), 2.0);
        assert_eq!(impurity(&[7, 0, 0, 0], Criterion::Entropy), 0.0);
        assert_eq!(impurity(&[5, 5, 0, 0], Criterion::Gini), 0.5);
    }

    #[test]
    fn pure_set_gives_single_leaf() {
        let x = vec![vec![1.0, 2.0], vec![3.0, 0.5], vec![2.0, 2.0]];
        let t = DecisionTree::fit(&x, &[Sitting; 3], TreeParams::default()).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[100.0, -4.0]), Sitting);
    }

    #[test]
    fn one_dimensional_threshold() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
        let y: Vec<_> = x.iter().map(|v| if v[0] < 0.5 { Running } else { Walking }).collect();
        let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
        match t.nodes[0] {
            Node::Split { threshold, .. } => assert!(threshold > 0.4 && threshold < 0.6, "{threshold}"),
            _ => panic!("root is a leaf"),
        }
        assert!(x.iter().zip(&y).all(|(xi, yi)| t.predict(xi) == *yi));
    }

    #[test]
    fn ties_prefer_lowest_feature() {
        // Both features separate the classes identically.
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let t = DecisionTree::fit(&x, &[Running, Sleeping], TreeParams::default()).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn xor_is_fit_exactly_despite_zero_first_gain() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = [Running, Walking, Walking, Running];
        let t = DecisionTree::fit(&x, &y, TreeParams::default()).unwrap();
        assert!(x.iter().zip(&y).all(|(xi, yi)| t.predict(xi) == *yi));
    }

    #[test]
    fn invalid_configs() {
        let p = TreeParams { max_depth: Some(0), ..Default::default() };
        assert!(matches!(DecisionTree::fit(&[vec![0.0]], &[Running], p), Err(Error::InvalidConfig(_))));
        let p = TreeParams { min_split: 1, ..Default::default() };
        assert!(DecisionTree::fit(&[vec![0.0]], &[Running], p).is_err());
        assert!(matches!(DecisionTree::fit(&[], &[], TreeParams::default()), Err(Error::UntrainedModel)));
    }

    #[test]
    fn depth_cap_is_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<_> = (0..64).map(|i| ActivityLabel::from_code((i % 4) as u8).unwrap()).collect();
        let t = DecisionTree::fit(&x, &y, TreeParams { max_depth: Some(3), ..Default::default() }).unwrap();
        assert!(t.depth() <= 3);
    }

    proptest! {
        #[test]
        fn unbounded_tree_fits_consistent_data(
            rows in proptest::collection::btree_map((0i32..30, 0i32..30), 0u8..4, 1..80),
            gini in any::<bool>(),
        ) {
            let x: Vec<Vec<f64>> = rows.keys().map(|&(a, b)| vec![a as f64, b as f64]).collect();
            let y: Vec<ActivityLabel> = rows.values().map(|&c| ActivityLabel::from_code(c).unwrap()).collect();
            let params = TreeParams { criterion: if gini { Criterion::Gini } else { Criterion::Entropy }, ..Default::default() };
            let t = DecisionTree::fit(&x, &y, params).unwrap();
            for (xi, yi) in x.iter().zip(&y) {
                prop_assert_eq!(t.predict(xi), *yi);
            }
            prop_assert_eq!(t.clone(), DecisionTree::fit(&x, &y, params).unwrap());
        }
    }
}
