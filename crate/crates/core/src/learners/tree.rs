//! CART-style binary classification tree on Gini impurity.
//!
//! Training works on a rank-encoded copy of the matrix: each feature column is
//! replaced by the index of its value among the sorted distinct values, so
//! exhaustive split search is a histogram or sort over small integers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LearnError;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitMode {
    /// Midpoints between adjacent distinct values.
    Exhaustive,
    /// One uniform threshold in (min, max) per candidate feature.
    RandomThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, p: usize) -> usize {
        let m = match self {
            MaxFeatures::All => p,
            MaxFeatures::Sqrt => (p as f64).sqrt().floor() as usize,
            MaxFeatures::Count(c) => c,
        };
        m.clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafSmoothing {
    /// (positives + 1) / (samples + 2)
    Laplace,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub split_mode: SplitMode,
    pub smoothing: LeafSmoothing,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 5,
            max_features: MaxFeatures::All,
            split_mode: SplitMode::Exhaustive,
            smoothing: LeafSmoothing::Laplace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize, gain: f64 },
    Leaf { fraction: f64, samples: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { fraction, .. } => return fraction,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    fn predict_ranked(&self, data: &Dataset, row: usize) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { fraction, .. } => return fraction,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    i = if data.value(feature, row) <= threshold { left } else { right };
                }
            }
        }
    }

    /// Impurity decrease per feature, summed over this tree's splits.
    pub fn split_gains(&self, n_features: usize) -> Vec<f64> {
        let mut g = vec![0.0; n_features];
        for node in &self.nodes {
            if let TreeNode::Split { feature, gain, .. } = node {
                g[*feature] += gain;
            }
        }
        g
    }
}

/// Rank-encoded training matrix.
#[derive(Debug, Clone)]
pub struct Dataset {
    n_rows: usize,
    ranks: Vec<Vec<u32>>,
    uniques: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(matrix: &FeatureMatrix, labels: &[bool]) -> Result<Self, LearnError> {
        Self::from_row_major(matrix.values(), matrix.n_cols(), labels)
    }

    pub fn from_row_major(values: &[f64], n_features: usize, labels: &[bool]) -> Result<Self, LearnError> {
        let n_rows = labels.len();
        if values.len() != n_rows * n_features {
            return Err(LearnError::LengthMismatch { rows: values.len() / n_features.max(1), labels: n_rows });
        }
        if n_rows == 0 {
            return Err(LearnError::Empty);
        }
        let encoded: Vec<(Vec<u32>, Vec<f64>)> = (0..n_features)
            .into_par_iter()
            .map(|f| {
                let mut order: Vec<u32> = (0..n_rows as u32).collect();
                order.sort_unstable_by(|&a, &b| {
                    values[a as usize * n_features + f].total_cmp(&values[b as usize * n_features + f])
                });
                let mut ranks = vec![0u32; n_rows];
                let mut uniq: Vec<f64> = Vec::new();
                for &r in &order {
                    let v = values[r as usize * n_features + f];
                    if uniq.last() != Some(&v) {
                        uniq.push(v);
                    }
                    ranks[r as usize] = (uniq.len() - 1) as u32;
                }
                (ranks, uniq)
            })
            .collect();
        let (ranks, uniques) = encoded.into_iter().unzip();
        Ok(Self { n_rows, ranks, uniques, labels: labels.to_vec() })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.ranks.len()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    fn value(&self, f: usize, row: usize) -> f64 {
        self.uniques[f][self.ranks[f][row] as usize]
    }

    fn max_uniques(&self) -> usize {
        self.uniques.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Fits one tree with unit weights on every row.
pub fn fit_tree(
    matrix: &FeatureMatrix,
    labels: &[bool],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<Tree, LearnError> {
    let data = Dataset::new(matrix, labels)?;
    Ok(grow_tree(&data, &vec![1.0; data.n_rows], params, rng))
}

#[derive(Clone, Copy)]
struct Stats {
    w: f64,
    p: f64,
    n: usize,
}

fn weighted_gini(w: f64, p: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        2.0 * p * (w - p) / w
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    // rank boundary: rows with rank <= cut go left (exhaustive mode only)
    cut: Option<u32>,
    child_impurity: f64,
}

struct Builder<'a> {
    data: &'a Dataset,
    weights: &'a [f64],
    params: &'a TreeParams,
    mtry: usize,
    perm: Vec<usize>,
    hist_w: Vec<f64>,
    hist_p: Vec<f64>,
    hist_n: Vec<u32>,
    buf: Vec<(u32, f64, f64)>,
}

/// Grows a tree on rows with positive weight. Weights act as sample multiplicities
/// in the impurity; `min_samples_leaf` counts distinct rows.
pub fn grow_tree(data: &Dataset, weights: &[f64], params: &TreeParams, rng: &mut ChaCha8Rng) -> Tree {
    let p = data.n_features();
    let max_u = data.max_uniques();
    let mut b = Builder {
        data,
        weights,
        params,
        mtry: params.max_features.resolve(p),
        perm: (0..p).collect(),
        hist_w: vec![0.0; max_u],
        hist_p: vec![0.0; max_u],
        hist_n: vec![0; max_u],
        buf: Vec::new(),
    };
    let rows: Vec<u32> = (0..data.n_rows as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    let mut nodes = vec![TreeNode::Leaf { fraction: 0.0, samples: 0.0 }];
    let mut stack = vec![(0usize, rows, 0usize)];
    while let Some((id, rows, depth)) = stack.pop() {
        let stats = b.stats(&rows);
        let leaf = TreeNode::Leaf { fraction: b.leaf_value(stats), samples: stats.w };
        let depth_done = params.max_depth.is_some_and(|d| depth >= d);
        let pure = stats.p <= 0.0 || stats.p >= stats.w;
        if depth_done || pure || stats.n < 2 * params.min_samples_leaf.max(1) || p == 0 {
            nodes[id] = leaf;
            continue;
        }
        let Some(best) = b.best_split(&rows, stats, rng) else {
            nodes[id] = leaf;
            continue;
        };
        let gain = weighted_gini(stats.w, stats.p) - best.child_impurity;
        if gain <= 1e-12 * stats.w {
            nodes[id] = leaf;
            continue;
        }
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = match best.cut {
            Some(cut) => rows.iter().partition(|&&i| data.ranks[best.feature][i as usize] <= cut),
            None => rows.iter().partition(|&&i| data.value(best.feature, i as usize) <= best.threshold),
        };
        let left = nodes.len();
        let right = left + 1;
        nodes.push(TreeNode::Leaf { fraction: 0.0, samples: 0.0 });
        nodes.push(TreeNode::Leaf { fraction: 0.0, samples: 0.0 });
        nodes[id] = TreeNode::Split { feature: best.feature, threshold: best.threshold, left, right, gain };
        stack.push((right, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    Tree { nodes }
}

impl Builder<'_> {
    fn stats(&self, rows: &[u32]) -> Stats {
        let mut s = Stats { w: 0.0, p: 0.0, n: rows.len() };
        for &i in rows {
            let w = self.weights[i as usize];
            s.w += w;
            if self.data.labels[i as usize] {
                s.p += w;
            }
        }
        s
    }

    fn leaf_value(&self, s: Stats) -> f64 {
        match self.params.smoothing {
            LeafSmoothing::Laplace => (s.p + 1.0) / (s.w + 2.0),
            LeafSmoothing::None => {
                if s.w > 0.0 {
                    (s.p / s.w).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
        }
    }

    fn best_split(&mut self, rows: &[u32], total: Stats, rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let p = self.perm.len();
        for k in 0..self.mtry {
            let j = rng.random_range(k..p);
            self.perm.swap(k, j);
        }
        let mut best: Option<Candidate> = None;
        for k in 0..self.mtry {
            let f = self.perm[k];
            let cand = match self.params.split_mode {
                SplitMode::Exhaustive => self.exhaustive(f, rows, total),
                SplitMode::RandomThreshold => self.random_threshold(f, rows, total, rng),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.child_impurity < b.child_impurity) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn exhaustive(&mut self, f: usize, rows: &[u32], total: Stats) -> Option<Candidate> {
        let ranks = &self.data.ranks[f];
        let (mut lo, mut hi) = (u32::MAX, 0u32);
        for &i in rows {
            let r = ranks[i as usize];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if lo >= hi {
            return None;
        }
        let span = (hi - lo) as usize + 1;
        let mut best: Option<(f64, u32, u32)> = None;
        let mut left = Stats { w: 0.0, p: 0.0, n: 0 };
        let msl = self.params.min_samples_leaf;
        let consider = |left: Stats, prev: u32, next: u32, best: &mut Option<(f64, u32, u32)>| {
            if let Some(imp) = admissible(msl, left, total) {
                if best.is_none_or(|b| imp < b.0) {
                    *best = Some((imp, prev, next));
                }
            }
        };
        if span <= 2 * rows.len() {
            for &i in rows {
                let r = ranks[i as usize] as usize;
                let w = self.weights[i as usize];
                self.hist_w[r] += w;
                if self.data.labels[i as usize] {
                    self.hist_p[r] += w;
                }
                self.hist_n[r] += 1;
            }
            let mut prev: Option<u32> = None;
            for r in lo..=hi {
                let ru = r as usize;
                if self.hist_n[ru] == 0 {
                    continue;
                }
                if let Some(pr) = prev {
                    consider(left, pr, r, &mut best);
                }
                left.w += self.hist_w[ru];
                left.p += self.hist_p[ru];
                left.n += self.hist_n[ru] as usize;
                prev = Some(r);
            }
            for &i in rows {
                let r = ranks[i as usize] as usize;
                self.hist_w[r] = 0.0;
                self.hist_p[r] = 0.0;
                self.hist_n[r] = 0;
            }
        } else {
            self.buf.clear();
            for &i in rows {
                let w = self.weights[i as usize];
                let pw = if self.data.labels[i as usize] { w } else { 0.0 };
                self.buf.push((ranks[i as usize], w, pw));
            }
            self.buf.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            let mut prev: Option<u32> = None;
            while k < self.buf.len() {
                let r = self.buf[k].0;
                if let Some(pr) = prev {
                    consider(left, pr, r, &mut best);
                }
                while k < self.buf.len() && self.buf[k].0 == r {
                    left.w += self.buf[k].1;
                    left.p += self.buf[k].2;
                    left.n += 1;
                    k += 1;
                }
                prev = Some(r);
            }
        }
        let (imp, a, b) = best?;
        let u = &self.data.uniques[f];
        let (va, vb) = (u[a as usize], u[b as usize]);
        let mid = va + (vb - va) / 2.0;
        // adjacent floats: the midpoint may round onto the upper value
        let threshold = if mid < vb && mid >= va { mid } else { va };
        Some(Candidate { feature: f, threshold, cut: Some(a), child_impurity: imp })
    }

    fn random_threshold(&self, f: usize, rows: &[u32], total: Stats, rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let ranks = &self.data.ranks[f];
        let (mut lo, mut hi) = (u32::MAX, 0u32);
        for &i in rows {
            let r = ranks[i as usize];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if lo >= hi {
            return None;
        }
        let u = &self.data.uniques[f];
        let (vmin, vmax) = (u[lo as usize], u[hi as usize]);
        let threshold = rng.random_range(vmin..vmax);
        let mut left = Stats { w: 0.0, p: 0.0, n: 0 };
        for &i in rows {
            if u[ranks[i as usize] as usize] <= threshold {
                let w = self.weights[i as usize];
                left.w += w;
                if self.data.labels[i as usize] {
                    left.p += w;
                }
                left.n += 1;
            }
        }
        let imp = admissible(self.params.min_samples_leaf, left, total)?;
        Some(Candidate { feature: f, threshold, cut: None, child_impurity: imp })
    }
}

fn admissible(min_samples_leaf: usize, left: Stats, total: Stats) -> Option<f64> {
    let msl = min_samples_leaf.max(1);
    if left.n < msl || total.n - left.n < msl {
        return None;
    }
    Some(weighted_gini(left.w, left.p) + weighted_gini(total.w - left.w, total.p - left.p))
}

/// Scores every training row of `data` with `tree`.
pub(crate) fn predict_dataset(tree: &Tree, data: &Dataset) -> Vec<f64> {
    (0..data.n_rows).map(|i| tree.predict_ranked(data, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn unsmoothed(depth: Option<usize>) -> TreeParams {
        TreeParams { max_depth: depth, min_samples_leaf: 1, smoothing: LeafSmoothing::None, ..TreeParams::default() }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn one_dimensional_midpoint_split() {
        let data = Dataset::from_row_major(&[1.0, 2.0, 3.0, 4.0], 1, &[false, false, true, true]).unwrap();
        let t = grow_tree(&data, &[1.0; 4], &unsmoothed(Some(1)), &mut rng());
        match t.nodes()[0] {
            TreeNode::Split { feature, threshold, left, right, .. } => {
                assert_eq!((feature, threshold), (0, 2.5));
                assert!(matches!(t.nodes()[left], TreeNode::Leaf { fraction, .. } if fraction == 0.0));
                assert!(matches!(t.nodes()[right], TreeNode::Leaf { fraction, .. } if fraction == 1.0));
            }
            _ => panic!("expected split"),
        }
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let data = Dataset::from_row_major(&[1.0, 5.0, 3.0], 1, &[true, true, true]).unwrap();
        let t = grow_tree(&data, &[1.0; 3], &unsmoothed(None), &mut rng());
        assert_eq!(t.nodes(), &[TreeNode::Leaf { fraction: 1.0, samples: 3.0 }]);
    }

    #[test]
    fn depth_zero_is_smoothed_base_rate() {
        let data = Dataset::from_row_major(&[1.0, 2.0, 3.0, 4.0], 1, &[false, false, false, true]).unwrap();
        let params = TreeParams { max_depth: Some(0), ..TreeParams::default() };
        let t = grow_tree(&data, &[1.0; 4], &params, &mut rng());
        assert_eq!(t.nodes(), &[TreeNode::Leaf { fraction: 2.0 / 6.0, samples: 4.0 }]);
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let y: Vec<bool> = (0..12).map(|i| i == 0 || i == 11).collect();
        let data = Dataset::from_row_major(&x, 1, &y).unwrap();
        let params = TreeParams { min_samples_leaf: 4, ..TreeParams::default() };
        let t = grow_tree(&data, &[1.0; 12], &params, &mut rng());
        for node in t.nodes() {
            if let TreeNode::Leaf { samples, .. } = node {
                assert!(*samples >= 4.0);
            }
        }
    }

    #[test]
    fn random_threshold_lies_inside_node_range() {
        let x = [1.0, 2.0, 3.0, 10.0];
        let data = Dataset::from_row_major(&x, 1, &[false, false, true, true]).unwrap();
        let params = TreeParams { split_mode: SplitMode::RandomThreshold, ..unsmoothed(Some(1)) };
        for s in 0..50 {
            let t = grow_tree(&data, &[1.0; 4], &params, &mut ChaCha8Rng::seed_from_u64(s));
            if let TreeNode::Split { threshold, .. } = t.nodes()[0] {
                assert!((1.0..10.0).contains(&threshold));
            }
        }
    }

    #[test]
    fn adjacent_float_values_split_consistently() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let data = Dataset::from_row_major(&[a, b], 1, &[false, true]).unwrap();
        let t = grow_tree(&data, &[1.0; 2], &unsmoothed(None), &mut rng());
        assert_eq!(t.predict(&[a]), 0.0);
        assert_eq!(t.predict(&[b]), 1.0);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let data = Dataset::from_row_major(&[1.0, 2.0, 3.0], 1, &[true, false, true]).unwrap();
        let t = grow_tree(&data, &[1.0, 0.0, 2.0], &unsmoothed(None), &mut rng());
        assert_eq!(t.nodes(), &[TreeNode::Leaf { fraction: 1.0, samples: 3.0 }]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(Dataset::from_row_major(&[1.0, 2.0], 1, &[true]), Err(LearnError::LengthMismatch { .. })));
    }
}
