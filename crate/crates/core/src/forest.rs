//! Random Forest classifier built from Gini CART trees.
//!
//! Everything here is deterministic for a fixed seed: tree `t` draws its
//! bootstrap sample and candidate features from ChaCha stream `t` of the root
//! seed, split candidates are compared with exact integer arithmetic, and all
//! ties resolve to the lowest feature index, threshold or class id. Trees may
//! be grown in parallel without changing the result.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tabular::FeatureTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    /// `max(1, floor(sqrt(n_features)))`
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, n_features: usize) -> Result<usize> {
        match self {
            MaxFeatures::Sqrt => Ok(((n_features as f64).sqrt().floor() as usize).max(1)),
            MaxFeatures::All => Ok(n_features),
            MaxFeatures::Count(c) if c >= 1 && c <= n_features => Ok(c),
            MaxFeatures::Count(c) => Err(Error::invalid(format!(
                "max_features {c} outside [1, {n_features}]"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// Draw a bootstrap sample per tree. Off means every tree sees all rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("n_trees must be positive"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::invalid("min_samples_split must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_counts(&self, row: &[f64]) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the leaf reached by `row`; ties go to the lowest id.
    pub fn predict_row(&self, row: &[f64]) -> u32 {
        argmax(self.leaf_counts(row))
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// `(feature, threshold)` of the root, or `None` for a single-leaf tree.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}

fn argmax(counts: &[u32]) -> u32 {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
    /// Mean over trees of the reach-weighted impurity decrease per feature.
    importance_sums: Vec<f64>,
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// SHA-256 over the full tree structure, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.trees.len() as u64).to_le_bytes());
        for tree in &self.trees {
            h.update((tree.nodes.len() as u64).to_le_bytes());
            for node in &tree.nodes {
                match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        h.update([0u8]);
                        h.update((*feature as u64).to_le_bytes());
                        h.update(threshold.to_bits().to_le_bytes());
                        h.update((*left as u64).to_le_bytes());
                        h.update((*right as u64).to_le_bytes());
                    }
                    Node::Leaf { counts } => {
                        h.update([1u8]);
                        for c in counts {
                            h.update(c.to_le_bytes());
                        }
                    }
                }
            }
        }
        for v in &self.importance_sums {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Human-readable node listing, one tree after another. Not a stable
    /// format; meant for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(out, "tree {t} nodes={}", tree.nodes.len());
            for (i, node) in tree.nodes.iter().enumerate() {
                let _ = match node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(
                        out,
                        "  {i} split {} <= {threshold} -> {left} {right}",
                        self.feature_names[*feature]
                    ),
                    Node::Leaf { counts } => writeln!(out, "  {i} leaf {counts:?}"),
                };
            }
        }
        out
    }
}

pub fn train_forest(train: &FeatureTable, params: &ForestParams) -> Result<ForestModel> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyTable);
    }
    let present = train.n_present_classes();
    if present < 2 {
        return Err(Error::SingleClass(present));
    }
    let max_features = params.max_features.resolve(train.n_features())?;
    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| TreeBuilder::new(train, params, max_features, t as u64).grow())
        .collect();

    let p = train.n_features();
    let mut importance_sums = vec![0.0; p];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (acc, v) in importance_sums.iter_mut().zip(&imp) {
            *acc += v;
        }
        trees.push(tree);
    }
    let n = trees.len() as f64;
    importance_sums.iter_mut().for_each(|v| *v /= n);
    Ok(ForestModel {
        trees,
        class_names: train.class_names().to_vec(),
        feature_names: train.feature_names().to_vec(),
        importance_sums,
    })
}

struct TreeBuilder<'a> {
    table: &'a FeatureTable,
    params: &'a ForestParams,
    max_features: usize,
    n_classes: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    /// (value, class) scratch space for split search.
    scratch: Vec<(f64, u32)>,
}

/// Best split found so far, scored by `num / den`, which is
/// `sum(c_l^2)/n_l + sum(c_r^2)/n_r` kept as an exact fraction.
#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    num: u128,
    den: u128,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                let lhs = self.num * o.den;
                let rhs = o.num * self.den;
                lhs > rhs || (lhs == rhs && self.feature < o.feature)
            }
        }
    }
}

impl<'a> TreeBuilder<'a> {
    fn new(table: &'a FeatureTable, params: &'a ForestParams, max_features: usize, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(index);
        Self {
            table,
            params,
            max_features,
            n_classes: table.n_classes(),
            rng,
            nodes: Vec::new(),
            importance: vec![0.0; table.n_features()],
            scratch: Vec::new(),
        }
    }

    fn grow(mut self) -> (Tree, Vec<f64>) {
        let n = self.table.n_rows();
        let mut samples: Vec<usize> = if self.params.bootstrap {
            (0..n).map(|_| self.rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let total = samples.len() as f64;
        let labels = self.table.labels();

        self.nodes.push(Node::Leaf { counts: Vec::new() });
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        let mut features: Vec<usize> = (0..self.table.n_features()).collect();
        while let Some((id, start, end, depth)) = stack.pop() {
            let reach = &mut samples[start..end];
            let counts = self.class_counts(reach);
            let m = reach.len();
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
            if pure || m < self.params.min_samples_split || depth_capped {
                self.nodes[id] = Node::Leaf { counts };
                continue;
            }
            let Some(best) = self.best_split(reach, &mut features) else {
                self.nodes[id] = Node::Leaf { counts };
                continue;
            };

            // partition in place: rows with value <= threshold first
            let f = best.feature;
            let mut split_at = 0;
            for i in 0..m {
                if self.table.get(reach[i], f) <= best.threshold {
                    reach.swap(i, split_at);
                    split_at += 1;
                }
            }
            debug_assert!(split_at > 0 && split_at < m);
            let left_counts = self.class_counts(&reach[..split_at]);
            let right_counts: Vec<u32> = counts.iter().zip(&left_counts).map(|(a, b)| a - b).collect();
            let decrease = m as f64 * gini(&counts)
                - split_at as f64 * gini(&left_counts)
                - (m - split_at) as f64 * gini(&right_counts);
            self.importance[f] += decrease.max(0.0) / total;
            debug_assert!(reach[..split_at].iter().all(|&r| labels[r] < self.n_classes as u32));

            let left = self.nodes.len();
            let right = left + 1;
            self.nodes.push(Node::Leaf { counts: Vec::new() });
            self.nodes.push(Node::Leaf { counts: Vec::new() });
            self.nodes[id] = Node::Split {
                feature: f,
                threshold: best.threshold,
                left,
                right,
            };
            // right pushed first so the left subtree is built first
            stack.push((right, start + split_at, end, depth + 1));
            stack.push((left, start, start + split_at, depth + 1));
        }
        (Tree { nodes: self.nodes }, self.importance)
    }

    fn class_counts(&self, rows: &[usize]) -> Vec<u32> {
        let labels = self.table.labels();
        let mut counts = vec![0u32; self.n_classes];
        for &r in rows {
            counts[labels[r] as usize] += 1;
        }
        counts
    }

    /// Visits features in random order until `max_features` non-constant ones
    /// have been searched or none remain.
    fn best_split(&mut self, rows: &[usize], features: &mut [usize]) -> Option<Candidate> {
        let p = features.len();
        let mut best: Option<Candidate> = None;
        let mut searched = 0;
        for i in 0..p {
            if searched == self.max_features {
                break;
            }
            let pick = self.rng.gen_range(i..p);
            features.swap(i, pick);
            let f = features[i];
            if let Some(c) = self.search_feature(rows, f) {
                searched += 1;
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Best threshold on one feature, or `None` if it is constant here.
    fn search_feature(&mut self, rows: &[usize], f: usize) -> Option<Candidate> {
        let labels = self.table.labels();
        let mut pairs = std::mem::take(&mut self.scratch);
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (self.table.get(r, f), labels[r])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let m = pairs.len();
        if pairs[0].0 == pairs[m - 1].0 {
            self.scratch = pairs;
            return None;
        }

        let mut right = vec![0u64; self.n_classes];
        for &(_, c) in &pairs {
            right[c as usize] += 1;
        }
        let mut left = vec![0u64; self.n_classes];
        let mut sq_left: u64 = 0;
        let mut sq_right: u64 = right.iter().map(|c| c * c).sum();
        let mut best: Option<Candidate> = None;
        for i in 0..m - 1 {
            let c = pairs[i].1 as usize;
            sq_left += 2 * left[c] + 1;
            sq_right -= 2 * right[c] - 1;
            left[c] += 1;
            right[c] -= 1;
            let (a, b) = (pairs[i].0, pairs[i + 1].0);
            if a == b {
                continue;
            }
            let n_l = (i + 1) as u128;
            let n_r = (m - i - 1) as u128;
            let cand = Candidate {
                feature: f,
                threshold: midpoint(a, b),
                num: sq_left as u128 * n_r + sq_right as u128 * n_l,
                den: n_l * n_r,
            };
            // strict comparison keeps the lowest threshold on ties
            if best.is_none_or(|o| cand.num * o.den > o.num * cand.den) {
                best = Some(cand);
            }
        }
        self.scratch = pairs;
        best
    }
}

/// Midpoint of `a < b`, pulled back to `a` if rounding lands on `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a * 0.5 + b * 0.5;
    if mid >= a && mid < b {
        mid
    } else {
        a
    }
}

fn gini(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Majority vote of the trees' leaf-majority classes; ties go to the lowest
/// class id.
pub fn predict(model: &ForestModel, table: &FeatureTable) -> Result<Vec<u32>> {
    if table.n_features() != model.n_features() {
        return Err(Error::invalid(format!(
            "table has {} features, model was trained on {}",
            table.n_features(),
            model.n_features()
        )));
    }
    let n_classes = model.class_names.len();
    Ok((0..table.n_rows())
        .into_par_iter()
        .map(|i| {
            let row = table.row(i);
            let mut votes = vec![0u32; n_classes];
            for tree in &model.trees {
                votes[tree.predict_row(row) as usize] += 1;
            }
            argmax(&votes)
        })
        .collect())
}

/// Per-feature mean decrease in Gini impurity, normalized to sum to 1. A
/// model without a single split spreads the mass evenly.
pub fn feature_importance(model: &ForestModel) -> Vec<f64> {
    let total: f64 = model.importance_sums.iter().sum();
    let p = model.importance_sums.len();
    if total > 0.0 {
        model.importance_sums.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / p as f64; p]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum F1Average {
    #[default]
    Macro,
    /// Per-class F1 weighted by support in the truth labels.
    Weighted,
}

/// Precision, recall and F1 for `class`; 0/0 counts as 0.
fn class_f1(pred: &[u32], truth: &[u32], class: u32) -> f64 {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == class, t == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn f1_score(pred: &[u32], truth: &[u32], average: F1Average) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut classes: Vec<u32> = truth.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let n = truth.len() as f64;
    let mut acc = 0.0;
    for &c in &classes {
        let f1 = class_f1(pred, truth, c);
        acc += match average {
            F1Average::Macro => f1 / classes.len() as f64,
            F1Average::Weighted => f1 * truth.iter().filter(|&&t| t == c).count() as f64 / n,
        };
    }
    Ok(acc)
}

/// Unweighted mean of per-class F1 over the classes present in `truth`.
pub fn macro_f1(pred: &[u32], truth: &[u32]) -> Result<f64> {
    f1_score(pred, truth, F1Average::Macro)
}
