//! Feature tables: the in-memory form of a traffic feature log.
//!
//! A [`FeatureTable`] is a dense row-major matrix of finite `f64` values with
//! named columns, one class label per row and optional per-row timestamps and
//! group keys. Tables are immutable once built; every transform in the crate
//! returns a new table that carries labels, timestamps and group keys along.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    feature_names: Vec<String>,
    values: Vec<f64>,
    n_rows: usize,
    labels: Vec<u32>,
    class_names: Vec<String>,
    timestamps: Option<Vec<f64>>,
    group_key: Option<Vec<String>>,
}

impl FeatureTable {
    /// Builds a table from text labels, interning them by first appearance.
    pub fn new<S: AsRef<str>>(
        feature_names: Vec<String>,
        values: Vec<f64>,
        labels: &[S],
    ) -> Result<Self> {
        let (ids, class_names) = intern_labels(labels.iter().map(AsRef::as_ref));
        Self::from_parts(feature_names, values, ids, class_names, None, None)
    }

    /// Builds a table from already-interned label ids.
    pub fn from_parts(
        feature_names: Vec<String>,
        values: Vec<f64>,
        labels: Vec<u32>,
        class_names: Vec<String>,
        timestamps: Option<Vec<f64>>,
        group_key: Option<Vec<String>>,
    ) -> Result<Self> {
        check_unique(&feature_names)?;
        check_unique(&class_names)?;
        let n_rows = labels.len();
        let n_features = feature_names.len();
        if values.len() != n_rows * n_features {
            return Err(Error::invalid(format!(
                "{} values do not fill {} rows x {} features",
                values.len(),
                n_rows,
                n_features
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_names.len()) {
            return Err(Error::invalid(format!(
                "label id {bad} outside the {} known classes",
                class_names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n_features + 1,
                column: feature_names[pos % n_features].clone(),
            });
        }
        if let Some(ts) = &timestamps {
            if ts.len() != n_rows {
                return Err(Error::invalid("timestamp count differs from row count"));
            }
            if let Some(pos) = ts.iter().position(|t| !t.is_finite()) {
                return Err(Error::NonFinite {
                    row: pos + 1,
                    column: "<timestamp>".into(),
                });
            }
        }
        if let Some(g) = &group_key {
            if g.len() != n_rows {
                return Err(Error::invalid("group key count differs from row count"));
            }
        }
        Ok(Self {
            feature_names,
            values,
            n_rows,
            labels,
            class_names,
            timestamps,
            group_key,
        })
    }

    pub fn with_timestamps(self, timestamps: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            self.feature_names,
            self.values,
            self.labels,
            self.class_names,
            Some(timestamps),
            self.group_key,
        )
    }

    pub fn with_group_key(self, group_key: Vec<String>) -> Result<Self> {
        Self::from_parts(
            self.feature_names,
            self.values,
            self.labels,
            self.class_names,
            self.timestamps,
            Some(group_key),
        )
    }

    /// Replaces the feature matrix, keeping labels, timestamps and group keys.
    pub fn with_features(&self, feature_names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        Self::from_parts(
            feature_names,
            values,
            self.labels.clone(),
            self.class_names.clone(),
            self.timestamps.clone(),
            self.group_key.clone(),
        )
    }

    /// Rows at `indices`, in the given order. The class map is kept whole so
    /// label ids stay comparable across subsets.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let p = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            feature_names: self.feature_names.clone(),
            values,
            n_rows: indices.len(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|ts| indices.iter().map(|&i| ts[i]).collect()),
            group_key: self
                .group_key
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    /// Columns at `indices`, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        let p = self.n_features();
        if let Some(&bad) = indices.iter().find(|&&j| j >= p) {
            return Err(Error::invalid(format!("column index {bad} out of range")));
        }
        let names = indices.iter().map(|&j| self.feature_names[j].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows * indices.len());
        for row in self.rows() {
            values.extend(indices.iter().map(|&j| row[j]));
        }
        self.with_features(names, values)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_features();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn get(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features() + feature]
    }

    pub fn column(&self, feature: usize) -> impl Iterator<Item = f64> + '_ {
        let p = self.n_features();
        self.values.iter().skip(feature).step_by(p.max(1)).copied()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Number of distinct classes that actually occur in the rows.
    pub fn n_present_classes(&self) -> usize {
        self.labels.iter().collect::<HashSet<_>>().len()
    }

    pub fn label_name(&self, row: usize) -> &str {
        &self.class_names[self.labels[row] as usize]
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn group_key(&self) -> Option<&[String]> {
        self.group_key.as_deref()
    }

    /// Time covered by the rows, if timestamps are present and span a
    /// positive interval.
    pub fn duration_seconds(&self) -> Option<f64> {
        let ts = self.timestamps.as_ref()?;
        let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi > lo).then_some(hi - lo)
    }

    /// Row indices per class id, in row order.
    pub fn rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    pub fn same_schema(&self, other: &FeatureTable) -> bool {
        self.feature_names == other.feature_names
    }
}

/// Puts two tables on one class map. Classes of `a` keep their ids; classes
/// seen only in `b` are appended in `b`'s order.
pub fn align_classes(a: &FeatureTable, b: &FeatureTable) -> (FeatureTable, FeatureTable) {
    if a.class_names == b.class_names {
        return (a.clone(), b.clone());
    }
    let mut names = a.class_names.clone();
    for n in &b.class_names {
        if !names.contains(n) {
            names.push(n.clone());
        }
    }
    let id_of: HashMap<&str, u32> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect();
    let remap = |t: &FeatureTable| FeatureTable {
        labels: t.labels.iter().map(|&l| id_of[t.class_names[l as usize].as_str()]).collect(),
        class_names: names.clone(),
        ..t.clone()
    };
    (remap(a), remap(b))
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::DuplicateColumn(n.clone()));
        }
    }
    Ok(())
}

fn intern_labels<'a>(labels: impl Iterator<Item = &'a str>) -> (Vec<u32>, Vec<String>) {
    let mut map: HashMap<&str, u32> = HashMap::new();
    let mut names = Vec::new();
    let ids = labels
        .map(|l| {
            *map.entry(l).or_insert_with(|| {
                names.push(l.to_string());
                (names.len() - 1) as u32
            })
        })
        .collect();
    (ids, names)
}

/// Which columns of a delimited file carry labels, timestamps and groups.
#[derive(Debug, Clone)]
pub struct CsvColumns {
    pub label: String,
    pub timestamp: Option<String>,
    pub group: Option<String>,
}

impl Default for CsvColumns {
    fn default() -> Self {
        Self {
            label: "label".into(),
            timestamp: None,
            group: None,
        }
    }
}

impl CsvColumns {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    pub fn timestamp(mut self, name: impl Into<String>) -> Self {
        self.timestamp = Some(name.into());
        self
    }

    pub fn group(mut self, name: impl Into<String>) -> Self {
        self.group = Some(name.into());
        self
    }
}

pub fn load_csv(path: impl AsRef<Path>, columns: &CsvColumns) -> Result<FeatureTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, columns)
}

/// Parses comma-separated text with a header line. Designated columns are
/// pulled out; every other column becomes a feature, in header order.
pub fn parse_csv(text: &str, columns: &CsvColumns) -> Result<FeatureTable> {
    let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header: Vec<&str> = match lines.next() {
        Some(h) if !h.is_empty() => h.split(',').collect(),
        _ => return Err(Error::MissingHeader),
    };
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(*h) {
            return Err(Error::DuplicateColumn(h.to_string()));
        }
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_idx = find(&columns.label)?;
    let ts_idx = columns.timestamp.as_deref().map(find).transpose()?;
    let group_idx = columns.group.as_deref().map(find).transpose()?;
    let designated = [Some(label_idx), ts_idx, group_idx];
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|i| !designated.contains(&Some(*i)))
        .collect();
    let feature_names: Vec<String> = feature_idx.iter().map(|&i| header[i].to_string()).collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut timestamps = ts_idx.map(|_| Vec::new());
    let mut groups = group_idx.map(|_| Vec::new());
    let mut row = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        row += 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: cells.len(),
            });
        }
        for &j in &feature_idx {
            values.push(parse_number(cells[j], row, header[j])?);
        }
        labels.push(cells[label_idx]);
        if let (Some(ts), Some(j)) = (timestamps.as_mut(), ts_idx) {
            ts.push(parse_number(cells[j], row, header[j])?);
        }
        if let (Some(g), Some(j)) = (groups.as_mut(), group_idx) {
            g.push(cells[j].to_string());
        }
    }
    let (ids, class_names) = intern_labels(labels.into_iter());
    FeatureTable::from_parts(feature_names, values, ids, class_names, timestamps, groups)
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::NotNumeric {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite {
            row,
            column: column.to_string(),
        });
    }
    Ok(v)
}

/// Shortest decimal rendering of `v` that parses back to the same bits.
pub fn format_shortest(v: f64) -> String {
    // Rust's float formatting emits the shortest round-tripping digits; the
    // positional and scientific forms differ only in length.
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

/// Features-only serialization: header of feature names, one line per row,
/// `\n` terminated. This is the lossless text baseline for storage accounting.
pub fn canonical_csv(table: &FeatureTable) -> String {
    let mut out = String::new();
    out.push_str(&table.feature_names.join(","));
    out.push('\n');
    for row in table.rows() {
        push_row(&mut out, row);
        out.push('\n');
    }
    out
}

fn push_row(out: &mut String, row: &[f64]) {
    for (j, v) in row.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&format_shortest(*v));
    }
}

/// Full serialization: features followed by the designated label, timestamp
/// and group columns named in `columns` (timestamp/group only when present).
pub fn to_csv_string(table: &FeatureTable, columns: &CsvColumns) -> Result<String> {
    let mut header = table.feature_names.clone();
    header.push(columns.label.clone());
    let ts_name = table
        .timestamps
        .as_ref()
        .map(|_| columns.timestamp.clone().unwrap_or_else(|| "timestamp".into()));
    let group_name = table
        .group_key
        .as_ref()
        .map(|_| columns.group.clone().unwrap_or_else(|| "group".into()));
    header.extend(ts_name.iter().cloned());
    header.extend(group_name.iter().cloned());
    check_unique(&header)?;

    let mut out = header.join(",");
    out.push('\n');
    for (i, row) in table.rows().enumerate() {
        push_row(&mut out, row);
        if !row.is_empty() {
            out.push(',');
        }
        out.push_str(table.label_name(i));
        if let Some(ts) = &table.timestamps {
            let _ = write!(out, ",{}", format_shortest(ts[i]));
        }
        if let Some(g) = &table.group_key {
            out.push(',');
            out.push_str(&g[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_csv(table: &FeatureTable, columns: &CsvColumns, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_csv_string(table, columns)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Splits each class independently: `floor(test_fraction * count)` rows
/// (at least one) go to the test side after a seeded shuffle. Both outputs
/// keep the original row order.
pub fn stratified_split(
    table: &FeatureTable,
    test_fraction: f64,
    seed: u64,
) -> Result<(FeatureTable, FeatureTable)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; table.n_rows()];
    for (class, mut rows) in table.rows_by_class().into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: table.class_names[class].clone(),
                count: rows.len(),
            });
        }
        // Small epsilon so products like 0.29 * 100 floor to 29, not 28.
        let n_test = ((test_fraction * rows.len() as f64 + 1e-9).floor() as usize).max(1);
        if n_test >= rows.len() {
            return Err(Error::invalid(format!(
                "test fraction {test_fraction} leaves no training rows for class `{}`",
                table.class_names[class]
            )));
        }
        rows.shuffle(&mut rng);
        for &i in &rows[..n_test] {
            is_test[i] = true;
        }
    }
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..table.n_rows()).partition(|&i| is_test[i]);
    Ok((table.subset(&train_idx), table.subset(&test_idx)))
}

/// Parameters of the seeded synthetic feature-log generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub n_informative: usize,
    pub n_noise: usize,
    pub rows_per_class: usize,
    /// Class-mean spacing, in within-class standard deviations.
    pub separation: f64,
    /// Fraction of informative features drawn log-normally.
    pub heavy_tail_fraction: f64,
    pub record_rate_hz: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// The fixed reference dataset: 5 classes, 20 informative and 10 noise
    /// features, 400 rows per class, separation 3, seed 7.
    pub fn reference() -> Self {
        Self {
            n_classes: 5,
            n_informative: 20,
            n_noise: 10,
            rows_per_class: 400,
            separation: 3.0,
            heavy_tail_fraction: 0.3,
            record_rate_hz: 1.0,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::invalid("n_classes must be positive"));
        }
        if self.n_informative + self.n_noise == 0 {
            return Err(Error::invalid("need at least one feature"));
        }
        if self.rows_per_class < 2 {
            return Err(Error::invalid("rows_per_class must be at least 2"));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::invalid("separation must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.heavy_tail_fraction) {
            return Err(Error::invalid("heavy_tail_fraction must lie in [0, 1]"));
        }
        if !(self.record_rate_hz.is_finite() && self.record_rate_hz > 0.0) {
            return Err(Error::invalid("record_rate_hz must be positive"));
        }
        Ok(())
    }

    fn n_heavy(&self) -> usize {
        (self.heavy_tail_fraction * self.n_informative as f64).round() as usize
    }
}

/// Generates a labelled feature log from `spec`.
///
/// Rows cycle through the classes (row `i` belongs to class `i % n_classes`)
/// and are stamped at `i / record_rate_hz` seconds. Informative feature `j`
/// puts class `c` at mean `separation * perm_j(c)` for a seeded permutation
/// `perm_j`, so no single feature orders the classes the same way. The first
/// `round(heavy_tail_fraction * n_informative)` informative features are
/// exponentiated. Noise features are standard normal for every class.
pub fn synth_generate(spec: &SynthSpec) -> Result<FeatureTable> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_heavy = spec.n_heavy();
    let perms: Vec<Vec<usize>> = (0..spec.n_informative)
        .map(|_| {
            let mut p: Vec<usize> = (0..spec.n_classes).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();

    let n_features = spec.n_informative + spec.n_noise;
    let n_rows = spec.n_classes * spec.rows_per_class;
    let width = n_features.to_string().len().max(2);
    let feature_names = (0..n_features)
        .map(|j| format!("f{:0width$}", j + 1, width = width))
        .collect();
    let class_names = (0..spec.n_classes).map(|c| format!("class{c}")).collect();

    let mut values = Vec::with_capacity(n_rows * n_features);
    let mut labels = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let class = i % spec.n_classes;
        labels.push(class as u32);
        for (j, perm) in perms.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let x = spec.separation * perm[class] as f64 + z;
            values.push(if j < n_heavy { x.exp() } else { x });
        }
        for _ in 0..spec.n_noise {
            values.push(rng.sample(StandardNormal));
        }
    }
    let timestamps = (0..n_rows).map(|i| i as f64 / spec.record_rate_hz).collect();
    FeatureTable::from_parts(
        feature_names,
        values,
        labels,
        class_names,
        Some(timestamps),
        None,
    )
}
