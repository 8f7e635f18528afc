//! Tree ensembles over sparse feature matrices: CART with weighted Gini
//! splits, random forests, SAMME AdaBoost and logistic gradient boosting.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("matrix has no features")]
    NoFeatures,
    #[error("matrix has no rows")]
    NoRows,
    #[error("invalid sample weights: {0}")]
    InvalidWeights(String),
    #[error("invalid matrix entry at row {row}, column {col}")]
    InvalidEntry { row: usize, col: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("model feature names do not match the expected feature names")]
    FeatureMismatch,
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major sparse matrix with a column-major copy for split search.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_cols: usize,
    row_ptr: Vec<usize>,
    row_cols: Vec<u32>,
    row_vals: Vec<f64>,
    col_ptr: Vec<usize>,
    col_rows: Vec<u32>,
    col_vals: Vec<f64>,
}

impl FeatureMatrix {
    /// Rows of `(column, value)` pairs in any order; zeros are dropped.
    /// Repeated columns, out-of-range columns and non-finite values are rejected.
    pub fn from_rows(n_cols: usize, rows: &[Vec<(u32, f64)>]) -> Result<Self, ModelError> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut row_cols = Vec::new();
        let mut row_vals = Vec::new();
        row_ptr.push(0);
        for (r, row) in rows.iter().enumerate() {
            let mut sorted: Vec<(u32, f64)> = row.iter().copied().filter(|p| p.1 != 0.0).collect();
            sorted.sort_by_key(|p| p.0);
            for (i, &(c, v)) in sorted.iter().enumerate() {
                let repeated = i > 0 && sorted[i - 1].0 == c;
                if c as usize >= n_cols || !v.is_finite() || repeated {
                    return Err(ModelError::InvalidEntry { row: r, col: c as usize });
                }
                row_cols.push(c);
                row_vals.push(v);
            }
            row_ptr.push(row_cols.len());
        }
        let mut counts = vec![0usize; n_cols + 1];
        for &c in &row_cols {
            counts[c as usize + 1] += 1;
        }
        for i in 0..n_cols {
            counts[i + 1] += counts[i];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut col_rows = vec![0u32; row_cols.len()];
        let mut col_vals = vec![0.0; row_cols.len()];
        for r in 0..rows.len() {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let c = row_cols[k] as usize;
                col_rows[next[c]] = r as u32;
                col_vals[next[c]] = row_vals[k];
                next[c] += 1;
            }
        }
        Ok(FeatureMatrix { n_cols, row_ptr, row_cols, row_vals, col_ptr, col_rows, col_vals })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let sparse: Vec<Vec<(u32, f64)>> = rows
            .iter()
            .map(|row| {
                if row.len() != n_cols {
                    return Err(ModelError::ShapeMismatch { what: "dense row", expected: n_cols, found: row.len() });
                }
                Ok(row.iter().enumerate().map(|(c, v)| (c as u32, *v)).collect())
            })
            .collect::<Result<_, _>>()?;
        FeatureMatrix::from_rows(n_cols, &sparse)
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.row_cols.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.row_cols[span.clone()].binary_search(&(col as u32)) {
            Ok(i) => self.row_vals[span.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        self.row_cols[span.clone()].iter().zip(&self.row_vals[span]).map(|(c, v)| (*c as usize, *v))
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let picked: Vec<Vec<(u32, f64)>> = rows.iter().map(|&r| self.row(r).map(|(c, v)| (c as u32, v)).collect()).collect();
        FeatureMatrix::from_rows(self.n_cols, &picked).expect("rows of a valid matrix are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub incremental: f64,
    pub transformative: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights { incremental: 1.0, transformative: 1.0 };

    pub fn of(&self, transformative: bool) -> f64 {
        if transformative {
            self.transformative
        } else {
            self.incremental
        }
    }
}

/// `w_c = n / (2 n_c)`, which gives both classes the same total weight.
/// `true` marks the transformative class.
pub fn balanced_weights(labels: &[bool]) -> Result<ClassWeights, ModelError> {
    let n_t = labels.iter().filter(|&&y| y).count();
    let n_i = labels.len() - n_t;
    if n_t == 0 || n_i == 0 {
        return Err(ModelError::SingleClass);
    }
    let n = labels.len() as f64;
    Ok(ClassWeights { incremental: n / (2.0 * n_i as f64), transformative: n / (2.0 * n_t as f64) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().round() as usize,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    /// Smallest child weight allowed, as a fraction of the total training weight.
    pub min_leaf_weight: f64,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_leaf_weight: 0.0, max_features: MaxFeatures::All, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: u32, threshold: f64, left: u32, right: u32, impurity_decrease: f64 },
    Leaf { value: f64 },
}

/// Nodes in depth-first order; the root is node 0. Rows with `x <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, x: &FeatureMatrix, row: usize) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    i = if x.get(row, feature as usize) <= threshold { left as usize } else { right as usize };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn split_decreases(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Split { feature, impurity_decrease, .. } => Some((*feature as usize, *impurity_decrease)),
            TreeNode::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Criterion {
    /// Binary targets; leaves hold the weighted positive fraction.
    Gini,
    /// Real targets (gradients); leaves hold a Newton step `sum(w t) / sum(w h)`.
    Newton,
}

impl Criterion {
    /// Weighted node impurity up to a per-node constant that cancels in decreases.
    fn weighted_impurity(self, w: f64, s: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Gini => 2.0 * s * (w - s) / w,
            Criterion::Newton => -s * s / w,
        }
    }
}

struct Candidate {
    decrease: f64,
    feature: u32,
    threshold: f64,
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    target: &'a [f64],
    weight: &'a [f64],
    hessian: Option<&'a [f64]>,
    criterion: Criterion,
    max_depth: usize,
    min_child_weight: f64,
    max_features: usize,
    rng: ChaCha8Rng,
    features: Vec<u32>,
    samples: Vec<u32>,
    position: Vec<u32>,
    present: Vec<u32>,
    stamp: u32,
    entries: Vec<(f64, f64, f64)>,
    nodes: Vec<TreeNode>,
}

impl<'a> TreeBuilder<'a> {
    fn build(mut self) -> Tree {
        let n = self.samples.len();
        self.node(0, n, 0);
        Tree { nodes: self.nodes }
    }

    fn node(&mut self, start: usize, end: usize, depth: usize) -> u32 {
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: 0.0 });
        let (mut w, mut s, mut h, mut sq) = (0.0, 0.0, 0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in &self.samples[start..end] {
            let r = r as usize;
            let (wr, tr) = (self.weight[r], self.target[r]);
            w += wr;
            s += wr * tr;
            sq += wr * tr * tr;
            h += wr * self.hessian.map_or(1.0, |hs| hs[r]);
            lo = lo.min(tr);
            hi = hi.max(tr);
        }
        let value = match self.criterion {
            Criterion::Gini => (s / w).clamp(0.0, 1.0),
            Criterion::Newton => s / h.max(1e-12),
        };
        let splittable = depth < self.max_depth && end - start >= 2 && lo < hi && w >= 2.0 * self.min_child_weight;
        let best = if splittable { self.best_split(start, end, w, s, sq) } else { None };
        let Some(best) = best else {
            self.nodes[idx] = TreeNode::Leaf { value };
            return idx as u32;
        };
        let mid = self.partition(start, end, best.feature as usize, best.threshold);
        let left = self.node(start, mid, depth + 1);
        let right = self.node(mid, end, depth + 1);
        self.nodes[idx] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            impurity_decrease: best.decrease.max(0.0),
        };
        idx as u32
    }

    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f64) -> usize {
        let mut mid = start;
        for i in start..end {
            let r = self.samples[i] as usize;
            if self.x.get(r, feature) <= threshold {
                self.samples.swap(i, mid);
                mid += 1;
            }
        }
        for i in start..end {
            self.position[self.samples[i] as usize] = i as u32;
        }
        mid
    }

    /// Draws features without replacement until `max_features` have been
    /// inspected and at least one of them varies within the node.
    fn best_split(&mut self, start: usize, end: usize, w: f64, s: f64, sq: f64) -> Option<Candidate> {
        self.stamp += 1;
        for &r in &self.samples[start..end] {
            let r = r as usize;
            for k in self.x.row_ptr[r]..self.x.row_ptr[r + 1] {
                self.present[self.x.row_cols[k] as usize] = self.stamp;
            }
        }
        let parent = self.criterion.weighted_impurity(w, s);
        let tol = 1e-12 * (w + sq);
        let mut best: Option<Candidate> = None;
        let mut remaining = self.features.len();
        let mut visited = 0usize;
        let mut varying = 0usize;
        while remaining > 0 && (visited < self.max_features || varying == 0) {
            let k = if self.max_features >= self.features.len() { remaining - 1 } else { self.rng.random_range(0..remaining) };
            remaining -= 1;
            self.features.swap(k, remaining);
            let f = self.features[remaining];
            visited += 1;
            if self.present[f as usize] != self.stamp {
                continue;
            }
            if self.scan_feature(f, start, end, w, s, parent, tol, &mut best) {
                varying += 1;
            }
        }
        best
    }

    /// Evaluates every threshold of one feature; returns false when the
    /// feature is constant within the node.
    #[allow(clippy::too_many_arguments)]
    fn scan_feature(
        &mut self,
        f: u32,
        start: usize,
        end: usize,
        w: f64,
        s: f64,
        parent: f64,
        tol: f64,
        best: &mut Option<Candidate>,
    ) -> bool {
        let x = self.x;
        self.entries.clear();
        let (mut w_nz, mut s_nz) = (0.0, 0.0);
        for k in x.col_ptr[f as usize]..x.col_ptr[f as usize + 1] {
            let r = x.col_rows[k] as usize;
            let p = self.position[r] as usize;
            if p >= start && p < end {
                let wr = self.weight[r];
                let sr = wr * self.target[r];
                w_nz += wr;
                s_nz += sr;
                self.entries.push((x.col_vals[k], wr, sr));
            }
        }
        let n_zero = (end - start) - self.entries.len();
        if n_zero > 0 {
            self.entries.push((0.0, (w - w_nz).max(0.0), s - s_nz));
        }
        self.entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        let first = self.entries[0].0;
        if self.entries.iter().all(|e| e.0 == first) {
            return false;
        }
        let (mut wl, mut sl) = (0.0, 0.0);
        for i in 0..self.entries.len() - 1 {
            let (v, wi, si) = self.entries[i];
            wl += wi;
            sl += si;
            let next = self.entries[i + 1].0;
            if next == v {
                continue;
            }
            let wr = w - wl;
            if wl < self.min_child_weight || wr < self.min_child_weight || wl <= 0.0 || wr <= 0.0 {
                continue;
            }
            let decrease = parent
                - self.criterion.weighted_impurity(wl, sl)
                - self.criterion.weighted_impurity(wr, s - sl);
            if self.criterion == Criterion::Newton && decrease <= tol {
                continue;
            }
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next || !threshold.is_finite() {
                threshold = v;
            }
            let better = match best {
                None => true,
                Some(b) if decrease > b.decrease + tol => true,
                Some(b) if decrease >= b.decrease - tol => (f, threshold) < (b.feature, b.threshold),
                Some(_) => false,
            };
            if better {
                *best = Some(Candidate { decrease, feature: f, threshold });
            }
        }
        true
    }
}

struct TreeJob<'a> {
    target: &'a [f64],
    weight: &'a [f64],
    hessian: Option<&'a [f64]>,
    criterion: Criterion,
    params: TreeParams,
}

fn grow(x: &FeatureMatrix, job: TreeJob<'_>, rng: ChaCha8Rng) -> Tree {
    let n = x.n_rows();
    let samples: Vec<u32> = (0..n as u32).filter(|&r| job.weight[r as usize] > 0.0).collect();
    let mut position = vec![u32::MAX; n];
    for (i, &r) in samples.iter().enumerate() {
        position[r as usize] = i as u32;
    }
    let total: f64 = samples.iter().map(|&r| job.weight[r as usize]).sum();
    TreeBuilder {
        x,
        target: job.target,
        weight: job.weight,
        hessian: job.hessian,
        criterion: job.criterion,
        max_depth: job.params.max_depth.unwrap_or(usize::MAX),
        min_child_weight: job.params.min_leaf_weight * total,
        max_features: job.params.max_features.resolve(x.n_cols()),
        rng,
        features: (0..x.n_cols() as u32).collect(),
        samples,
        position,
        present: vec![0; x.n_cols()],
        stamp: 0,
        entries: Vec::new(),
        nodes: Vec::new(),
    }
    .build()
}

fn check_inputs(x: &FeatureMatrix, y: &[bool], weights: Option<&[f64]>) -> Result<(), ModelError> {
    if x.n_cols() == 0 {
        return Err(ModelError::NoFeatures);
    }
    if x.n_rows() == 0 {
        return Err(ModelError::NoRows);
    }
    if y.len() != x.n_rows() {
        return Err(ModelError::ShapeMismatch { what: "labels", expected: x.n_rows(), found: y.len() });
    }
    if let Some(w) = weights {
        if w.len() != x.n_rows() {
            return Err(ModelError::ShapeMismatch { what: "sample weights", expected: x.n_rows(), found: w.len() });
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if !w.iter().any(|v| *v > 0.0) {
            return Err(ModelError::InvalidWeights("all weights are zero".into()));
        }
    }
    Ok(())
}

fn check_tree_params(p: &TreeParams) -> Result<(), ModelError> {
    if !(0.0..0.5).contains(&p.min_leaf_weight) {
        return Err(ModelError::InvalidParams(format!("min_leaf_weight {} outside [0, 0.5)", p.min_leaf_weight)));
    }
    if p.max_features == MaxFeatures::Count(0) {
        return Err(ModelError::InvalidParams("max_features must be positive".into()));
    }
    Ok(())
}

/// Single classification tree; leaves hold the weighted fraction of `true` labels.
pub fn fit_tree(x: &FeatureMatrix, y: &[bool], weights: &[f64], params: &TreeParams) -> Result<Tree, ModelError> {
    check_inputs(x, y, Some(weights))?;
    check_tree_params(params)?;
    let target: Vec<f64> = y.iter().map(|&t| f64::from(u8::from(t))).collect();
    let job = TreeJob { target: &target, weight: weights, hessian: None, criterion: Criterion::Gini, params: *params };
    Ok(grow(x, job, ChaCha8Rng::seed_from_u64(params.seed)))
}

/// Independent per-tree seed derived from the ensemble seed (SplitMix64 finalizer).
pub fn tree_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    RandomForest,
    AdaBoost,
    GradientBoosted,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 3] = [EnsembleKind::RandomForest, EnsembleKind::AdaBoost, EnsembleKind::GradientBoosted];

    pub fn as_str(self) -> &'static str {
        match self {
            EnsembleKind::RandomForest => "rf",
            EnsembleKind::AdaBoost => "ada",
            EnsembleKind::GradientBoosted => "gbt",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnsembleKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rf" | "randomforest" | "forest" => Ok(EnsembleKind::RandomForest),
            "ada" | "adaboost" => Ok(EnsembleKind::AdaBoost),
            "gbt" | "gradientboosted" | "gbm" | "boosted" => Ok(EnsembleKind::GradientBoosted),
            _ => Err(ModelError::InvalidParams(format!("unknown classifier {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    /// Bootstrap resampling of rows per tree (random forest only).
    pub bootstrap: bool,
    /// `None` trains unweighted.
    pub class_weights: Option<ClassWeights>,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_leaf_weight: f64,
    pub seed: u64,
}

impl EnsembleParams {
    pub fn defaults(kind: EnsembleKind) -> Self {
        let base = EnsembleParams {
            n_trees: 200,
            learning_rate: 0.1,
            bootstrap: false,
            class_weights: None,
            max_depth: Some(3),
            max_features: MaxFeatures::All,
            min_leaf_weight: 0.0,
            seed: 0,
        };
        match kind {
            EnsembleKind::RandomForest => {
                EnsembleParams { bootstrap: true, max_depth: None, max_features: MaxFeatures::Sqrt, ..base }
            }
            EnsembleKind::AdaBoost | EnsembleKind::GradientBoosted => base,
        }
    }

    fn tree_params(&self, seed: u64) -> TreeParams {
        TreeParams { max_depth: self.max_depth, min_leaf_weight: self.min_leaf_weight, max_features: self.max_features, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub version: u32,
    pub kind: EnsembleKind,
    pub params: EnsembleParams,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    pub tree_weights: Vec<f64>,
    /// Initial log-odds for gradient boosting; zero otherwise.
    pub base_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean: f64,
    pub std: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Trains an ensemble. `feature_names` must name every column.
pub fn fit_ensemble(
    kind: EnsembleKind,
    x: &FeatureMatrix,
    y: &[bool],
    feature_names: &[String],
    params: &EnsembleParams,
) -> Result<EnsembleModel, ModelError> {
    check_inputs(x, y, None)?;
    check_tree_params(&params.tree_params(0))?;
    if feature_names.len() != x.n_cols() {
        return Err(ModelError::ShapeMismatch { what: "feature names", expected: x.n_cols(), found: feature_names.len() });
    }
    if params.n_trees == 0 {
        return Err(ModelError::InvalidParams("n_trees must be positive".into()));
    }
    if !(params.learning_rate.is_finite() && params.learning_rate > 0.0) {
        return Err(ModelError::InvalidParams(format!("learning_rate {} must be positive", params.learning_rate)));
    }
    if y.iter().all(|&t| t) || y.iter().all(|&t| !t) {
        return Err(ModelError::SingleClass);
    }
    let cw = params.class_weights.unwrap_or(ClassWeights::UNIFORM);
    if !(cw.incremental > 0.0 && cw.transformative > 0.0 && cw.incremental.is_finite() && cw.transformative.is_finite()) {
        return Err(ModelError::InvalidParams("class weights must be positive and finite".into()));
    }
    let base: Vec<f64> = y.iter().map(|&t| cw.of(t)).collect();
    let target: Vec<f64> = y.iter().map(|&t| f64::from(u8::from(t))).collect();
    let (trees, tree_weights, base_score) = match kind {
        EnsembleKind::RandomForest => fit_forest(x, &target, &base, params),
        EnsembleKind::AdaBoost => fit_adaboost(x, &target, &base, params),
        EnsembleKind::GradientBoosted => fit_boosted(x, &target, &base, params),
    };
    Ok(EnsembleModel {
        version: MODEL_FORMAT_VERSION,
        kind,
        params: *params,
        seed: params.seed,
        feature_names: feature_names.to_vec(),
        trees,
        tree_weights,
        base_score,
    })
}

fn fit_forest(x: &FeatureMatrix, target: &[f64], base: &[f64], params: &EnsembleParams) -> (Vec<Tree>, Vec<f64>, f64) {
    let n = x.n_rows();
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let seed = tree_seed(params.seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weight: Vec<f64> = if params.bootstrap {
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                counts.iter().zip(base).map(|(c, w)| f64::from(*c) * w).collect()
            } else {
                base.to_vec()
            };
            let job = TreeJob { target, weight: &weight, hessian: None, criterion: Criterion::Gini, params: params.tree_params(seed) };
            grow(x, job, rng)
        })
        .collect();
    let weights = vec![1.0; trees.len()];
    (trees, weights, 0.0)
}

/// Vote of a probability leaf: +1, -1, or 0 for an undecided leaf.
fn vote(p: f64) -> f64 {
    if p > 0.5 {
        1.0
    } else if p < 0.5 {
        -1.0
    } else {
        0.0
    }
}

const MIN_ERROR: f64 = 1e-10;

fn fit_adaboost(x: &FeatureMatrix, target: &[f64], base: &[f64], params: &EnsembleParams) -> (Vec<Tree>, Vec<f64>, f64) {
    let n = x.n_rows();
    let total: f64 = base.iter().sum();
    let mut dist: Vec<f64> = base.iter().map(|w| w / total).collect();
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    for m in 0..params.n_trees {
        let seed = tree_seed(params.seed, m);
        let job = TreeJob { target, weight: &dist, hessian: None, criterion: Criterion::Gini, params: params.tree_params(seed) };
        let tree = grow(x, job, ChaCha8Rng::seed_from_u64(seed));
        // miss is 1 for a wrong vote, 1/2 for an undecided one
        let miss: Vec<f64> = (0..n)
            .map(|r| {
                let truth = if target[r] > 0.5 { 1.0 } else { -1.0 };
                (1.0 - vote(tree.predict_row(x, r)) * truth) / 2.0
            })
            .collect();
        let err: f64 = dist.iter().zip(&miss).map(|(d, m)| d * m).sum::<f64>() / dist.iter().sum::<f64>();
        if err >= 0.5 {
            if trees.is_empty() {
                trees.push(tree);
                alphas.push(1.0);
            }
            break;
        }
        let e = err.max(MIN_ERROR);
        let alpha = params.learning_rate * ((1.0 - e) / e).ln();
        trees.push(tree);
        alphas.push(alpha);
        if err <= MIN_ERROR {
            break;
        }
        for (d, m) in dist.iter_mut().zip(&miss) {
            *d *= (alpha * m).exp();
        }
        let z: f64 = dist.iter().sum();
        dist.iter_mut().for_each(|d| *d /= z);
    }
    (trees, alphas, 0.0)
}

fn fit_boosted(x: &FeatureMatrix, target: &[f64], base: &[f64], params: &EnsembleParams) -> (Vec<Tree>, Vec<f64>, f64) {
    let n = x.n_rows();
    let pos: f64 = base.iter().zip(target).map(|(w, t)| w * t).sum();
    let neg: f64 = base.iter().sum::<f64>() - pos;
    let f0 = (pos / neg).ln();
    let mut raw = vec![f0; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for m in 0..params.n_trees {
        let p: Vec<f64> = raw.iter().map(|&z| sigmoid(z)).collect();
        let residual: Vec<f64> = target.iter().zip(&p).map(|(t, p)| t - p).collect();
        let hessian: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let seed = tree_seed(params.seed, m);
        let job = TreeJob {
            target: &residual,
            weight: base,
            hessian: Some(&hessian),
            criterion: Criterion::Newton,
            params: params.tree_params(seed),
        };
        let tree = grow(x, job, ChaCha8Rng::seed_from_u64(seed));
        for (r, z) in raw.iter_mut().enumerate() {
            *z += params.learning_rate * tree.predict_row(x, r);
        }
        trees.push(tree);
    }
    let weights = vec![params.learning_rate; trees.len()];
    (trees, weights, f0)
}

impl EnsembleModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn score_row(&self, x: &FeatureMatrix, r: usize) -> f64 {
        match self.kind {
            EnsembleKind::RandomForest => {
                let sum: f64 = self.trees.iter().zip(&self.tree_weights).map(|(t, w)| w * t.predict_row(x, r)).sum();
                sum / self.tree_weights.iter().sum::<f64>()
            }
            EnsembleKind::AdaBoost => {
                let total: f64 = self.tree_weights.iter().map(|a| a.abs()).sum();
                let margin: f64 = self.trees.iter().zip(&self.tree_weights).map(|(t, a)| a * vote(t.predict_row(x, r))).sum();
                if total > 0.0 {
                    (0.5 + margin / (2.0 * total)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            }
            EnsembleKind::GradientBoosted => {
                let z: f64 = self.trees.iter().zip(&self.tree_weights).map(|(t, w)| w * t.predict_row(x, r)).sum();
                sigmoid(self.base_score + z)
            }
        }
    }

    /// Probability of the transformative class for every row.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        if x.n_cols() != self.n_features() {
            return Err(ModelError::ShapeMismatch { what: "feature columns", expected: self.n_features(), found: x.n_cols() });
        }
        Ok((0..x.n_rows()).map(|r| self.score_row(x, r)).collect())
    }

    /// Per-tree impurity decreases normalised to one, then mean and population
    /// standard deviation across trees. Trees without splits are skipped.
    /// Sorted by descending mean, ties by column order.
    pub fn feature_importances(&self) -> Vec<FeatureImportance> {
        let p = self.n_features();
        let per_tree: Vec<Vec<f64>> = self
            .trees
            .iter()
            .filter_map(|t| {
                let mut acc = vec![0.0; p];
                for (f, d) in t.split_decreases() {
                    acc[f] += d;
                }
                let total: f64 = acc.iter().sum();
                (total > 0.0).then(|| acc.into_iter().map(|v| v / total).collect())
            })
            .collect();
        let k = per_tree.len().max(1) as f64;
        let mut out: Vec<(usize, FeatureImportance)> = (0..p)
            .map(|f| {
                let mean = per_tree.iter().map(|t| t[f]).sum::<f64>() / k;
                let var = per_tree.iter().map(|t| (t[f] - mean).powi(2)).sum::<f64>() / k;
                (f, FeatureImportance { feature: self.feature_names[f].clone(), mean, std: var.sqrt() })
            })
            .collect();
        out.sort_by(|a, b| b.1.mean.total_cmp(&a.1.mean).then(a.0.cmp(&b.0)));
        out.into_iter().map(|(_, fi)| fi).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    /// Hex SHA-256 of the serialized model.
    pub fn model_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Parses and validates a model; with `expected` set, feature names must match exactly.
    pub fn from_json(text: &str, expected: Option<&[String]>) -> Result<Self, ModelError> {
        let model: EnsembleModel = serde_json::from_str(text)?;
        model.validate()?;
        if let Some(names) = expected {
            if names != model.feature_names.as_slice() {
                return Err(ModelError::FeatureMismatch);
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path, expected: Option<&[String]>) -> Result<Self, ModelError> {
        EnsembleModel::from_json(&std::fs::read_to_string(path)?, expected)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Format(m));
        if self.version != MODEL_FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.trees.is_empty() {
            return bad("model has no trees".into());
        }
        if self.tree_weights.len() != self.trees.len() {
            return bad("tree weight count differs from tree count".into());
        }
        if self.tree_weights.iter().any(|w| !w.is_finite()) || !self.base_score.is_finite() {
            return bad("non-finite tree weight or base score".into());
        }
        if self.kind == EnsembleKind::RandomForest && self.tree_weights.iter().any(|w| *w <= 0.0) {
            return bad("forest tree weights must be positive".into());
        }
        let p = self.n_features();
        let probability_leaves = self.kind != EnsembleKind::GradientBoosted;
        for (t, tree) in self.trees.iter().enumerate() {
            let n = tree.nodes.len();
            if n == 0 {
                return bad(format!("tree {t} is empty"));
            }
            let mut parents = vec![0u32; n];
            for (i, node) in tree.nodes.iter().enumerate() {
                match *node {
                    TreeNode::Leaf { value } => {
                        if !value.is_finite() || (probability_leaves && !(0.0..=1.0).contains(&value)) {
                            return bad(format!("tree {t} node {i}: leaf value {value} out of range"));
                        }
                    }
                    TreeNode::Split { feature, threshold, left, right, impurity_decrease } => {
                        let (l, r) = (left as usize, right as usize);
                        if feature as usize >= p || !threshold.is_finite() || !(impurity_decrease >= 0.0) {
                            return bad(format!("tree {t} node {i}: invalid split"));
                        }
                        if l <= i || r <= i || l >= n || r >= n || l == r {
                            return bad(format!("tree {t} node {i}: invalid child index"));
                        }
                        parents[l] += 1;
                        parents[r] += 1;
                    }
                }
            }
            if parents[0] != 0 || parents[1..].iter().any(|&c| c != 1) {
                return bad(format!("tree {t} is not a tree"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("f{i}")).collect()
    }

    fn accuracy(scores: &[f64], y: &[bool]) -> f64 {
        scores.iter().zip(y).filter(|(s, t)| (**s > 0.5) == **t).count() as f64 / y.len() as f64
    }

    /// Pairwise AUC, ties counted half.
    fn auc(scores: &[f64], y: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &yi) in y.iter().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                if yi && !yj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    fn tree_predictions(tree: &Tree, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows()).map(|r| tree.predict_row(x, r)).collect()
    }

    /// Sparse matrix with one planted column (index 3) that carries the label, plus noise.
    fn planted(n: usize, p: usize, seed: u64) -> (FeatureMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let t = rng.random_bool(0.5);
            let mut row = Vec::new();
            for c in 0..p as u32 {
                if rng.random_bool(0.1) {
                    row.push((c, f64::from(rng.random_range(1..4u8))));
                }
            }
            row.retain(|e| e.0 != 3);
            let signal = if t { rng.random_range(1.0..3.0) } else { rng.random_range(0.0..1.2) };
            row.push((3, signal));
            rows.push(row);
            y.push(t);
        }
        (FeatureMatrix::from_rows(p, &rows).unwrap(), y)
    }

    #[test]
    fn matrix_round_trips_rows_and_columns() {
        let x = FeatureMatrix::from_rows(4, &[vec![(2, 1.5), (0, 2.0)], vec![], vec![(3, -1.0), (1, 0.0)]]).unwrap();
        assert_eq!((x.n_rows(), x.n_cols(), x.nnz()), (3, 4, 3));
        assert_eq!(x.get(0, 0), 2.0);
        assert_eq!(x.get(0, 1), 0.0);
        assert_eq!(x.get(2, 3), -1.0);
        assert_eq!(x.row(0).collect::<Vec<_>>(), vec![(0, 2.0), (2, 1.5)]);
        assert_eq!(x.col_ptr, vec![0, 1, 1, 2, 3]);
        assert!(matches!(FeatureMatrix::from_rows(2, &[vec![(2, 1.0)]]), Err(ModelError::InvalidEntry { .. })));
        assert!(FeatureMatrix::from_rows(2, &[vec![(1, 1.0), (1, 2.0)]]).is_err());
        assert!(FeatureMatrix::from_rows(2, &[vec![(1, f64::NAN)]]).is_err());
        let sub = x.select_rows(&[2, 0]);
        assert_eq!(sub.get(0, 3), -1.0);
        assert_eq!(sub.get(1, 2), 1.5);
    }

    #[test]
    fn balanced_weights_examples() {
        let mut labels = vec![false; 365];
        labels.extend(vec![true; 378]);
        let w = balanced_weights(&labels).unwrap();
        assert_eq!(w.incremental, 743.0 / 730.0);
        assert_eq!(w.transformative, 743.0 / 756.0);
        assert!((w.incremental * 365.0 - w.transformative * 378.0).abs() < 1e-12);

        let w = balanced_weights(&[vec![true; 50], vec![false; 50]].concat()).unwrap();
        assert_eq!((w.incremental, w.transformative), (1.0, 1.0));

        let w = balanced_weights(&[vec![true; 10], vec![false; 90]].concat()).unwrap();
        assert_eq!(w.transformative, 5.0);
        assert!((w.incremental - 100.0 / 180.0).abs() < 1e-15);
        assert!((10.0 * w.transformative - 90.0 * w.incremental).abs() < 1e-12);

        assert!(matches!(balanced_weights(&[true, true]), Err(ModelError::SingleClass)));
        assert!(matches!(balanced_weights(&[]), Err(ModelError::SingleClass)));
    }

    #[test]
    fn separable_line_needs_one_split() {
        let x = FeatureMatrix::from_dense(&[vec![1.0], vec![2.0], vec![3.0], vec![10.0], vec![11.0]]).unwrap();
        let y = [false, false, false, true, true];
        let tree = fit_tree(&x, &y, &[1.0; 5], &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes.len(), 3);
        match tree.nodes[0] {
            TreeNode::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 6.5);
            }
            TreeNode::Leaf { .. } => panic!("expected a split"),
        }
        assert_eq!(accuracy(&tree_predictions(&tree, &x), &y), 1.0);
    }

    #[test]
    fn constant_features_give_prior_leaf() {
        let x = FeatureMatrix::from_dense(&vec![vec![1.0, 0.0]; 4]).unwrap();
        let y = [true, false, false, false];
        let tree = fit_tree(&x, &y, &[1.0, 1.0, 1.0, 1.0], &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes, vec![TreeNode::Leaf { value: 0.25 }]);
        let tree = fit_tree(&x, &y, &[3.0, 1.0, 1.0, 1.0], &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes, vec![TreeNode::Leaf { value: 0.5 }]);
    }

    /// Exhaustive enumeration of depth-2 trees on the XOR table: the best
    /// root split has zero Gini decrease, and some depth-2 tree is perfect.
    #[test]
    fn xor_is_solved_at_depth_two() {
        let rows = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [false, true, true, false];
        // leaves predict the majority of their cell; a tie counts as an error
        let mut perfect_exists = false;
        for root in 0..2 {
            for left in 0..2 {
                for right in 0..2 {
                    let leaf_of = |r: &[f64; 2]| {
                        let side = r[root] > 0.5;
                        let f = if side { right } else { left };
                        (side, r[f] > 0.5)
                    };
                    perfect_exists |= rows.iter().zip(&y).all(|(r, t)| {
                        let cell = leaf_of(r);
                        let votes: Vec<bool> = rows.iter().zip(&y).filter(|(q, _)| leaf_of(q) == cell).map(|(_, u)| *u).collect();
                        let pos = votes.iter().filter(|v| **v).count();
                        2 * pos != votes.len() && (2 * pos > votes.len()) == *t
                    });
                }
            }
        }
        assert!(perfect_exists);

        let x = FeatureMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let params = TreeParams { max_depth: Some(2), ..TreeParams::default() };
        let tree = fit_tree(&x, &y, &[1.0; 4], &params).unwrap();
        assert_eq!(accuracy(&tree_predictions(&tree, &x), &y), 1.0);
        match tree.nodes[0] {
            TreeNode::Split { feature, impurity_decrease, .. } => {
                assert_eq!(feature, 0, "ties go to the lowest feature index");
                assert_eq!(impurity_decrease, 0.0);
            }
            TreeNode::Leaf { .. } => panic!("expected a split"),
        }
        let stump = fit_tree(&x, &y, &[1.0; 4], &TreeParams { max_depth: Some(1), ..params }).unwrap();
        assert_eq!(tree_predictions(&stump, &x), vec![0.5; 4]);
    }

    #[test]
    fn leaves_reproduce_weighted_fractions_and_depth_limit() {
        let x = FeatureMatrix::from_dense(&[vec![0.0], vec![0.0], vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let y = [true, false, true, true, false];
        let w = [1.0, 3.0, 2.0, 1.0, 1.0];
        let tree = fit_tree(&x, &y, &w, &TreeParams::default()).unwrap();
        assert_eq!(tree_predictions(&tree, &x), vec![0.25, 0.25, 0.75, 0.75, 0.75]);
        let root = fit_tree(&x, &y, &w, &TreeParams { max_depth: Some(0), ..TreeParams::default() }).unwrap();
        assert_eq!(root.nodes, vec![TreeNode::Leaf { value: 4.0 / 8.0 }]);
    }

    #[test]
    fn min_leaf_weight_blocks_small_children() {
        let x = FeatureMatrix::from_dense(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let y = [true, false, false, false];
        let tree = fit_tree(&x, &y, &[1.0; 4], &TreeParams::default()).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        let params = TreeParams { min_leaf_weight: 0.3, ..TreeParams::default() };
        let tree = fit_tree(&x, &y, &[1.0; 4], &params).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        match tree.nodes[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(threshold, 2.5),
            TreeNode::Leaf { .. } => panic!("expected a split"),
        }
        assert!(fit_tree(&x, &y, &[1.0; 4], &TreeParams { min_leaf_weight: 0.7, ..params }).is_err());
    }

    #[test]
    fn input_validation() {
        let x = FeatureMatrix::from_dense(&[vec![1.0], vec![2.0]]).unwrap();
        let p = TreeParams::default();
        assert!(matches!(fit_tree(&x, &[true], &[1.0, 1.0], &p), Err(ModelError::ShapeMismatch { .. })));
        assert!(matches!(fit_tree(&x, &[true, false], &[1.0], &p), Err(ModelError::ShapeMismatch { .. })));
        assert!(matches!(fit_tree(&x, &[true, false], &[-1.0, 1.0], &p), Err(ModelError::InvalidWeights(_))));
        assert!(matches!(fit_tree(&x, &[true, false], &[0.0, 0.0], &p), Err(ModelError::InvalidWeights(_))));
        let empty = FeatureMatrix::from_rows(0, &[vec![], vec![]]).unwrap();
        assert!(matches!(fit_tree(&empty, &[true, false], &[1.0, 1.0], &p), Err(ModelError::NoFeatures)));
        let params = EnsembleParams::defaults(EnsembleKind::RandomForest);
        let r = fit_ensemble(EnsembleKind::RandomForest, &x, &[true, true], &names(1), &params);
        assert!(matches!(r, Err(ModelError::SingleClass)));
        let r = fit_ensemble(EnsembleKind::RandomForest, &x, &[true, false], &names(2), &params);
        assert!(matches!(r, Err(ModelError::ShapeMismatch { .. })));
    }

    #[test]
    fn one_tree_forest_matches_fit_tree() {
        let (x, y) = planted(120, 30, 4);
        let params = EnsembleParams { n_trees: 1, bootstrap: false, seed: 9, ..EnsembleParams::defaults(EnsembleKind::RandomForest) };
        let model = fit_ensemble(EnsembleKind::RandomForest, &x, &y, &names(30), &params).unwrap();
        let tree_params = params.tree_params(tree_seed(9, 0));
        let tree = fit_tree(&x, &y, &vec![1.0; 120], &tree_params).unwrap();
        assert_eq!(model.trees[0], tree);
        assert_eq!(model.predict_proba(&x).unwrap(), tree_predictions(&tree, &x));
    }

    #[test]
    fn planted_signal_is_learned_by_every_kind() {
        let (x, y) = planted(200, 40, 11);
        for kind in EnsembleKind::ALL {
            let params = EnsembleParams { n_trees: 50, seed: 3, ..EnsembleParams::defaults(kind) };
            let model = fit_ensemble(kind, &x, &y, &names(40), &params).unwrap();
            let scores = model.predict_proba(&x).unwrap();
            assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
            let a = auc(&scores, &y);
            assert!(a >= 0.95, "{kind}: training AUC {a}");
            let top = &model.feature_importances()[0];
            assert_eq!(top.feature, "f3", "{kind}");
        }
    }

    #[test]
    fn same_seed_same_model_hash() {
        let (x, y) = planted(80, 20, 2);
        for kind in EnsembleKind::ALL {
            let params = EnsembleParams { n_trees: 10, seed: 5, ..EnsembleParams::defaults(kind) };
            let a = fit_ensemble(kind, &x, &y, &names(20), &params).unwrap();
            let b = fit_ensemble(kind, &x, &y, &names(20), &params).unwrap();
            assert_eq!(a.model_hash(), b.model_hash());
            assert_eq!(a.model_hash().len(), 64);
        }
        let p1 = EnsembleParams { n_trees: 10, seed: 5, ..EnsembleParams::defaults(EnsembleKind::RandomForest) };
        let p2 = EnsembleParams { seed: 6, ..p1 };
        let a = fit_ensemble(EnsembleKind::RandomForest, &x, &y, &names(20), &p1).unwrap();
        let b = fit_ensemble(EnsembleKind::RandomForest, &x, &y, &names(20), &p2).unwrap();
        assert_ne!(a.model_hash(), b.model_hash());
    }

    #[test]
    fn importances_are_normalised_and_sorted() {
        let (x, y) = planted(100, 25, 8);
        let params = EnsembleParams { n_trees: 20, seed: 1, ..EnsembleParams::defaults(EnsembleKind::RandomForest) };
        let model = fit_ensemble(EnsembleKind::RandomForest, &x, &y, &names(25), &params).unwrap();
        let imp = model.feature_importances();
        assert_eq!(imp.len(), 25);
        let total: f64 = imp.iter().map(|i| i.mean).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(imp.windows(2).all(|w| w[0].mean >= w[1].mean));
        assert!(imp.iter().all(|i| i.std >= 0.0));
    }

    #[test]
    fn single_decisive_feature_takes_all_importance() {
        let x = FeatureMatrix::from_dense(&[vec![0.0, 5.0], vec![1.0, 5.0], vec![0.0, 5.0], vec![1.0, 5.0]]).unwrap();
        let y = [false, true, false, true];
        let params = EnsembleParams { n_trees: 5, bootstrap: false, seed: 0, ..EnsembleParams::defaults(EnsembleKind::RandomForest) };
        let model = fit_ensemble(EnsembleKind::RandomForest, &x, &y, &names(2), &params).unwrap();
        let imp = model.feature_importances();
        assert_eq!(imp[0].feature, "f0");
        assert_eq!(imp[0].mean, 1.0);
        assert_eq!(imp[1].mean, 0.0);
    }

    #[test]
    fn forest_mean_ignores_order_and_duplicates() {
        let (x, y) = planted(60, 15, 6);
        let params = EnsembleParams { n_trees: 7, seed: 2, ..EnsembleParams::defaults(EnsembleKind::RandomForest) };
        let model = fit_ensemble(EnsembleKind::RandomForest, &x, &y, &names(15), &params).unwrap();
        let base = model.predict_proba(&x).unwrap();
        let mut reversed = model.clone();
        reversed.trees.reverse();
        let mut doubled = model.clone();
        doubled.trees.extend(model.trees.clone());
        doubled.tree_weights.extend(model.tree_weights.clone());
        for other in [reversed, doubled] {
            let scores = other.predict_proba(&x).unwrap();
            for (a, b) in base.iter().zip(&scores) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_leaves_predict_half() {
        let x = FeatureMatrix::from_dense(&[vec![1.0], vec![2.0]]).unwrap();
        for kind in [EnsembleKind::RandomForest, EnsembleKind::AdaBoost] {
            let model = EnsembleModel {
                version: MODEL_FORMAT_VERSION,
                kind,
                params: EnsembleParams::defaults(kind),
                seed: 0,
                feature_names: names(1),
                trees: vec![Tree { nodes: vec![TreeNode::Leaf { value: 0.5 }] }; 3],
                tree_weights: vec![0.7, 1.0, 2.0],
                base_score: 0.0,
            };
            assert_eq!(model.predict_proba(&x).unwrap(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn adaboost_stops_on_a_perfect_stump() {
        let x = FeatureMatrix::from_dense(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let y = [false, false, true, true];
        let params = EnsembleParams { seed: 0, ..EnsembleParams::defaults(EnsembleKind::AdaBoost) };
        let model = fit_ensemble(EnsembleKind::AdaBoost, &x, &y, &names(1), &params).unwrap();
        assert_eq!(model.trees.len(), 1);
        assert!(model.tree_weights[0].is_finite() && model.tree_weights[0] > 0.0);
        assert_eq!(model.predict_proba(&x).unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn gradient_boosting_starts_from_log_odds() {
        let x = FeatureMatrix::from_dense(&vec![vec![1.0]; 4]).unwrap();
        let y = [true, true, true, false];
        let params = EnsembleParams { n_trees: 3, ..EnsembleParams::defaults(EnsembleKind::GradientBoosted) };
        let model = fit_ensemble(EnsembleKind::GradientBoosted, &x, &y, &names(1), &params).unwrap();
        assert!((model.base_score - 3f64.ln()).abs() < 1e-12);
        for p in model.predict_proba(&x).unwrap() {
            assert!((p - 0.75).abs() < 1e-9);
        }
    }

    #[test]
    fn model_file_round_trip_and_validation() {
        let (x, y) = planted(50, 10, 1);
        let params = EnsembleParams { n_trees: 4, seed: 1, ..EnsembleParams::defaults(EnsembleKind::GradientBoosted) };
        let model = fit_ensemble(EnsembleKind::GradientBoosted, &x, &y, &names(10), &params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = EnsembleModel::load(&path, Some(&names(10))).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.model_hash(), model.model_hash());
        assert!(matches!(EnsembleModel::load(&path, Some(&names(9))), Err(ModelError::FeatureMismatch)));

        let mut broken = model.clone();
        broken.trees.clear();
        broken.tree_weights.clear();
        assert!(matches!(EnsembleModel::from_json(&broken.to_json(), None), Err(ModelError::Format(_))));
        let mut broken = model.clone();
        broken.version = 99;
        assert!(EnsembleModel::from_json(&broken.to_json(), None).is_err());
        let mut broken = model.clone();
        broken.trees[0].nodes[0] = TreeNode::Split { feature: 0, threshold: 0.0, left: 0, right: 0, impurity_decrease: 0.0 };
        assert!(EnsembleModel::from_json(&broken.to_json(), None).is_err());
        assert!(EnsembleModel::from_json("{}", None).is_err());
        assert!(matches!(model.predict_proba(&FeatureMatrix::from_dense(&[vec![1.0]]).unwrap()), Err(ModelError::ShapeMismatch { .. })));
    }

    #[test]
    fn kind_names_parse() {
        for kind in EnsembleKind::ALL {
            assert_eq!(kind.as_str().parse::<EnsembleKind>().unwrap(), kind);
        }
        assert_eq!("Random-Forest".parse::<EnsembleKind>().unwrap(), EnsembleKind::RandomForest);
        assert!("svm".parse::<EnsembleKind>().is_err());
    }

    #[test]
    fn tree_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| tree_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(tree_seed(1, 0), tree_seed(1, 0));
    }

    fn small_dataset() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>, Vec<f64>)> {
        (4usize..30, 1usize..5).prop_flat_map(|(n, p)| {
            (
                prop::collection::vec(prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0, 2.0, 3.5]), p), n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(0.25f64..4.0, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scaling_weights_keeps_the_tree(
            (rows, y, w) in small_dataset(),
            exp in -3i32..4,
            seed in any::<u64>(),
        ) {
            let x = FeatureMatrix::from_dense(&rows).unwrap();
            let c = 2f64.powi(exp);
            let params = TreeParams { max_features: MaxFeatures::Count(1), seed, ..TreeParams::default() };
            let a = fit_tree(&x, &y, &w, &params).unwrap();
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let b = fit_tree(&x, &y, &scaled, &params).unwrap();
            prop_assert_eq!(a.nodes.len(), b.nodes.len());
            for (na, nb) in a.nodes.iter().zip(&b.nodes) {
                match (na, nb) {
                    (TreeNode::Leaf { value: va }, TreeNode::Leaf { value: vb }) => prop_assert_eq!(va, vb),
                    (
                        TreeNode::Split { feature: fa, threshold: ta, left: la, right: ra, impurity_decrease: da },
                        TreeNode::Split { feature: fb, threshold: tb, left: lb, right: rb, impurity_decrease: db },
                    ) => {
                        prop_assert_eq!((fa, ta, la, ra), (fb, tb, lb, rb));
                        prop_assert!((da * c - db).abs() <= 1e-9 * (1.0 + db.abs()));
                    }
                    _ => prop_assert!(false, "node kinds differ"),
                }
            }
        }

        #[test]
        fn scaling_by_three_keeps_predictions((rows, y, w) in small_dataset(), seed in any::<u64>()) {
            let x = FeatureMatrix::from_dense(&rows).unwrap();
            let params = TreeParams { seed, ..TreeParams::default() };
            let a = fit_tree(&x, &y, &w, &params).unwrap();
            let scaled: Vec<f64> = w.iter().map(|v| v * 3.0).collect();
            let b = fit_tree(&x, &y, &scaled, &params).unwrap();
            for (pa, pb) in tree_predictions(&a, &x).iter().zip(tree_predictions(&b, &x)) {
                prop_assert!((pa - pb).abs() < 1e-9);
            }
        }

        #[test]
        fn recorded_decreases_are_non_negative_and_leaves_are_fractions(
            (rows, y, w) in small_dataset(),
            seed in any::<u64>(),
        ) {
            let x = FeatureMatrix::from_dense(&rows).unwrap();
            let tree = fit_tree(&x, &y, &w, &TreeParams { seed, ..TreeParams::default() }).unwrap();
            for node in &tree.nodes {
                match *node {
                    TreeNode::Split { impurity_decrease, threshold, .. } => {
                        prop_assert!(impurity_decrease >= 0.0);
                        prop_assert!(threshold.is_finite());
                    }
                    TreeNode::Leaf { value } => prop_assert!((0.0..=1.0).contains(&value)),
                }
            }
            // a fully grown tree reproduces the weighted label fraction of each distinct row
            for r in 0..x.n_rows() {
                let (mut wt, mut st) = (0.0, 0.0);
                for (q, row) in rows.iter().enumerate() {
                    if *row == rows[r] {
                        wt += w[q];
                        st += w[q] * f64::from(u8::from(y[q]));
                    }
                }
                prop_assert!((tree.predict_row(&x, r) - st / wt).abs() < 1e-9);
            }
        }

        #[test]
        fn forest_is_invariant_to_tree_order(seed in any::<u64>(), shift in 1usize..6) {
            let (x, y) = planted(40, 8, seed);
            prop_assume!(y.iter().any(|t| *t) && y.iter().any(|t| !*t));
            let params = EnsembleParams { n_trees: 6, seed, ..EnsembleParams::defaults(EnsembleKind::RandomForest) };
            let model = fit_ensemble(EnsembleKind::RandomForest, &x, &y, &names(8), &params).unwrap();
            let mut rotated = model.clone();
            rotated.trees.rotate_left(shift);
            let a = model.predict_proba(&x).unwrap();
            let b = rotated.predict_proba(&x).unwrap();
            for (pa, pb) in a.iter().zip(&b) {
                prop_assert!((pa - pb).abs() < 1e-12);
            }
        }
    }
}
