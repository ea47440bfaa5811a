#![allow(dead_code)]

use std::sync::OnceLock;

use featpress_core::tabular::{stratified_split, synth_generate, FeatureTable, SynthSpec};

pub const SEED: u64 = 7;

pub fn reference_table() -> &'static FeatureTable {
    static TABLE: OnceLock<FeatureTable> = OnceLock::new();
    TABLE.get_or_init(|| synth_generate(&SynthSpec::reference()).unwrap())
}

/// The reference dataset's 70/30 stratified split.
pub fn reference() -> &'static (FeatureTable, FeatureTable) {
    static SPLIT: OnceLock<(FeatureTable, FeatureTable)> = OnceLock::new();
    SPLIT.get_or_init(|| stratified_split(reference_table(), 0.3, SEED).unwrap())
}

pub fn map_values(table: &FeatureTable, f: impl Fn(f64) -> f64) -> FeatureTable {
    table
        .with_features(
            table.feature_names().to_vec(),
            table.values().iter().map(|&v| f(v)).collect(),
        )
        .unwrap()
}
