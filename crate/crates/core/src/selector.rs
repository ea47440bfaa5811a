//! Importance-ranked feature selection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{feature_importance, train_forest, ForestParams};
use crate::tabular::{format_shortest, FeatureTable};

/// Mixed into the caller's seed so the ranking forest never shares a random
/// stream with an evaluation forest built from the same seed.
const RANKING_SEED_DOMAIN: u64 = 0x7365_6c65_6374_6f72;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    feature_names: Vec<String>,
    order: Vec<usize>,
    importance: Vec<f64>,
    seed: u64,
}

impl FeatureRanking {
    /// Builds a ranking from per-feature importances: descending importance,
    /// ties by ascending feature index.
    pub fn from_importance(feature_names: Vec<String>, importance: Vec<f64>, seed: u64) -> Result<Self> {
        if importance.len() != feature_names.len() {
            return Err(Error::invalid("importance length differs from feature count"));
        }
        if importance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("importances must be finite and non-negative"));
        }
        let mut order: Vec<usize> = (0..importance.len()).collect();
        order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
        Ok(Self {
            feature_names,
            order,
            importance,
            seed,
        })
    }

    /// Feature indices, most informative first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Importance per feature, indexed by original column.
    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Names of the top `k` features in rank order.
    pub fn top(&self, k: usize) -> Vec<&str> {
        self.order[..k.min(self.order.len())]
            .iter()
            .map(|&j| self.feature_names[j].as_str())
            .collect()
    }

    /// `feature,importance` lines in rank order, with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,importance\n");
        for &j in &self.order {
            let _ = writeln!(out, "{},{}", self.feature_names[j], format_shortest(self.importance[j]));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Ranks features by the mean decrease in Gini impurity of a default-parameter
/// forest trained on `train`.
pub fn rank_features(train: &FeatureTable, seed: u64) -> Result<FeatureRanking> {
    if train.is_empty() {
        return Err(Error::EmptyTable);
    }
    let params = ForestParams::with_seed(seed ^ RANKING_SEED_DOMAIN);
    let model = train_forest(train, &params)?;
    FeatureRanking::from_importance(train.feature_names().to_vec(), feature_importance(&model), seed)
}

/// Keeps the top `k` ranked columns, reordered by rank.
pub fn apply_selection(table: &FeatureTable, ranking: &FeatureRanking, k: usize) -> Result<FeatureTable> {
    if table.n_features() != ranking.len() {
        return Err(Error::invalid(format!(
            "ranking covers {} features, table has {}",
            ranking.len(),
            table.n_features()
        )));
    }
    if k == 0 || k > ranking.len() {
        return Err(Error::invalid(format!(
            "cannot select {k} of {} features",
            ranking.len()
        )));
    }
    table.select_columns(&ranking.order[..k])
}
