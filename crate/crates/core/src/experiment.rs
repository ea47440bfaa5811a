//! Pipeline composition, configuration sweeps and tradeoff reporting.
//!
//! A [`PipelineConfig`] names which stages run: feature selection, then PCA,
//! then quantization. Every stage is fitted on the training split; the test
//! split is only ever transformed. The classifier is trained and evaluated on
//! dequantized values, and storage is measured on the sealed test container.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{self, baseline_sizes, BaselineSizes, StorageReport};
use crate::error::{Error, Result};
use crate::forest::{f1_score, predict, train_forest, F1Average, ForestParams};
use crate::projector::{fit_pca_with, project, PcaModel};
use crate::quantizer::{check_bits, decode_like, encode, fit_ranges, round_trip, RangeModel};
use crate::selector::{apply_selection, rank_features, FeatureRanking};
use crate::tabular::{align_classes, format_shortest, FeatureTable};

/// Bit widths of the default sweeps; `None` is the unquantized baseline.
pub const DEFAULT_BITS: [Option<u32>; 6] = [None, Some(32), Some(16), Some(8), Some(4), Some(2)];
pub const DEFAULT_PCA_TARGETS: [Option<f64>; 3] = [None, Some(0.99), Some(0.80)];
pub const DEFAULT_SELECTION: [Option<usize>; 3] = [None, Some(100), Some(20)];
pub const DEFAULT_EPSILON: f64 = 0.02;

pub const REPORT_HEADER: &str = "selection_k,pca_target,bits,f1,lossy_bytes,baseline_csv_bytes,\
reduction_vs_csv,reduction_vs_f32,bits_per_second,wall_time_seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub selection_k: Option<usize>,
    pub pca_target: Option<f64>,
    /// `None` stores the stage output losslessly.
    pub bits: Option<u32>,
    pub forest: ForestParams,
    /// Seeds the selection ranking.
    pub seed: u64,
}

impl PipelineConfig {
    /// No selection, no PCA, no quantization. Forest and ranking share `seed`.
    pub fn baseline(seed: u64) -> Self {
        Self {
            selection_k: None,
            pca_target: None,
            bits: None,
            forest: ForestParams::with_seed(seed),
            seed,
        }
    }

    pub fn with_bits(mut self, bits: Option<u32>) -> Self {
        self.bits = bits;
        self
    }

    pub fn with_pca(mut self, target: Option<f64>) -> Self {
        self.pca_target = target;
        self
    }

    pub fn with_selection(mut self, k: Option<usize>) -> Self {
        self.selection_k = k;
        self
    }

    pub fn with_forest(mut self, forest: ForestParams) -> Self {
        self.forest = forest;
        self
    }

    fn stage_key(&self) -> StageKey {
        (self.selection_k, self.pca_target.map(f64::to_bits))
    }

    fn validate(&self) -> Result<()> {
        if let Some(b) = self.bits {
            check_bits(b)?;
        }
        if self.selection_k == Some(0) {
            return Err(Error::invalid("selection k must be positive"));
        }
        Ok(())
    }
}

/// Selection size and PCA target bits: configurations sharing a key differ
/// only in quantization.
type StageKey = (Option<usize>, Option<u64>);

/// Settings shared by every configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub level: u32,
    pub average: F1Average,
    /// Used for bits/s when the test split carries no timestamps.
    pub duration_seconds: Option<f64>,
    pub standardize_pca: bool,
    /// Worker threads for sweeps and forests; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            level: codec::DEFAULT_LEVEL,
            average: F1Average::Macro,
            duration_seconds: None,
            standardize_pca: true,
            jobs: None,
        }
    }
}

/// Stage models fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub selection: Option<(FeatureRanking, usize)>,
    pub pca: Option<PcaModel>,
    pub ranges: Option<RangeModel>,
    pub bits: Option<u32>,
}

impl FittedPipeline {
    /// Fits every configured stage on `train` and returns the models together
    /// with the transformed (unquantized) training table.
    pub fn fit(
        train: &FeatureTable,
        config: &PipelineConfig,
        options: &EvalOptions,
    ) -> Result<(Self, FeatureTable)> {
        config.validate()?;
        let mut current = train.clone();
        let selection = match config.selection_k {
            Some(k) => {
                let ranking = rank_features(&current, config.seed)?;
                current = apply_selection(&current, &ranking, k)?;
                Some((ranking, k))
            }
            None => None,
        };
        let pca = match config.pca_target {
            Some(target) => {
                let model = fit_pca_with(&current, target, options.standardize_pca)?;
                current = project(&current, &model)?;
                Some(model)
            }
            None => None,
        };
        let ranges = match config.bits {
            Some(_) => Some(fit_ranges(&current)?),
            None => None,
        };
        Ok((
            Self {
                selection,
                pca,
                ranges,
                bits: config.bits,
            },
            current,
        ))
    }

    /// Applies selection and projection (not quantization).
    pub fn transform(&self, table: &FeatureTable) -> Result<FeatureTable> {
        let mut current = match &self.selection {
            Some((ranking, k)) => apply_selection(table, ranking, *k)?,
            None => table.clone(),
        };
        if let Some(model) = &self.pca {
            current = project(&current, model)?;
        }
        Ok(current)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffPoint {
    pub config: PipelineConfig,
    pub f1: f64,
    pub storage: StorageReport,
    /// Columns stored after selection and projection.
    pub stored_features: usize,
    pub wall_time_seconds: f64,
}

struct Outcome {
    fitted: FittedPipeline,
    predictions: Vec<u32>,
    truth: Vec<u32>,
    lossy_bytes: u64,
    baseline: BaselineSizes,
    raw_csv_bytes: u64,
    stored_features: usize,
}

fn check_splits(train: &FeatureTable, test: &FeatureTable) -> Result<()> {
    if !train.same_schema(test) {
        return Err(Error::SchemaMismatch {
            expected: train.feature_names().to_vec(),
            found: test.feature_names().to_vec(),
        });
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(())
}

fn evaluate(
    train: &FeatureTable,
    test: &FeatureTable,
    config: &PipelineConfig,
    options: &EvalOptions,
) -> Result<Outcome> {
    let (train, test) = align_classes(train, test);
    let (fitted, train_stage) = FittedPipeline::fit(&train, config, options)?;
    let test_stage = fitted.transform(&test)?;
    let baseline = baseline_sizes(&test_stage, options.level)?;
    let raw_csv_bytes = if fitted.selection.is_none() && fitted.pca.is_none() {
        baseline.csv_bytes
    } else {
        baseline_sizes(&test, options.level)?.csv_bytes
    };

    let (train_eval, test_eval, lossy_bytes) = match (&fitted.ranges, fitted.bits) {
        (Some(ranges), Some(bits)) => {
            let codes = encode(&test_stage, ranges, bits)?;
            let sealed = codec::seal(&codec::pack(&codes, ranges)?, options.level)?;
            let test_eval = decode_like(&codes, ranges, &test_stage)?;
            let train_eval = round_trip(&train_stage, ranges, bits)?;
            (train_eval, test_eval, sealed.len() as u64)
        }
        _ => (train_stage, test_stage, baseline.csv_bytes),
    };

    let model = train_forest(&train_eval, &config.forest)?;
    let predictions = predict(&model, &test_eval)?;
    Ok(Outcome {
        stored_features: test_eval.n_features(),
        fitted,
        predictions,
        truth: test_eval.labels().to_vec(),
        lossy_bytes,
        baseline,
        raw_csv_bytes,
    })
}

/// Runs one configuration and also returns the fitted stage models.
pub fn run_config_detailed(
    train: &FeatureTable,
    test: &FeatureTable,
    config: &PipelineConfig,
    options: &EvalOptions,
) -> Result<(TradeoffPoint, FittedPipeline)> {
    let start = Instant::now();
    check_splits(train, test)?;
    let out = evaluate(train, test, config, options)?;
    let f1 = f1_score(&out.predictions, &out.truth, options.average)?;
    let duration = options.duration_seconds.or_else(|| test.duration_seconds());
    let storage = StorageReport::new(out.lossy_bytes, out.baseline, out.raw_csv_bytes, duration)?;
    let point = TradeoffPoint {
        config: config.clone(),
        f1,
        storage,
        stored_features: out.stored_features,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((point, out.fitted))
}

pub fn run_config(
    train: &FeatureTable,
    test: &FeatureTable,
    config: &PipelineConfig,
    options: &EvalOptions,
) -> Result<TradeoffPoint> {
    run_config_detailed(train, test, config, options).map(|(p, _)| p)
}

/// Runs a configuration separately for every group key value (one model per
/// group) and aggregates: F1 over the pooled predictions, storage as sums.
pub fn run_config_grouped(
    train: &FeatureTable,
    test: &FeatureTable,
    config: &PipelineConfig,
    options: &EvalOptions,
) -> Result<TradeoffPoint> {
    let start = Instant::now();
    check_splits(train, test)?;
    let (train, test) = align_classes(train, test);
    let groups = |t: &FeatureTable| -> Result<BTreeMap<String, Vec<usize>>> {
        let keys = t
            .group_key()
            .ok_or_else(|| Error::invalid("per-group evaluation needs a group column"))?;
        let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            map.entry(k.clone()).or_default().push(i);
        }
        Ok(map)
    };
    let train_groups = groups(&train)?;
    let test_groups = groups(&test)?;

    let mut predictions = Vec::new();
    let mut truth = Vec::new();
    let mut lossy = 0;
    let mut baseline = BaselineSizes {
        csv_bytes: 0,
        f32_bytes: 0,
    };
    let mut raw = 0;
    let mut stored_features = 0;
    for (key, test_rows) in &test_groups {
        let train_rows = train_groups
            .get(key)
            .ok_or_else(|| Error::invalid(format!("group `{key}` has no training rows")))?;
        let out = evaluate(&train.subset(train_rows), &test.subset(test_rows), config, options)?;
        predictions.extend(out.predictions);
        truth.extend(out.truth);
        lossy += out.lossy_bytes;
        baseline.csv_bytes += out.baseline.csv_bytes;
        baseline.f32_bytes += out.baseline.f32_bytes;
        raw += out.raw_csv_bytes;
        stored_features = stored_features.max(out.stored_features);
    }
    let f1 = f1_score(&predictions, &truth, options.average)?;
    let duration = options.duration_seconds.or_else(|| test.duration_seconds());
    Ok(TradeoffPoint {
        config: config.clone(),
        f1,
        storage: StorageReport::new(lossy, baseline, raw, duration)?,
        stored_features,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// One point per configuration, in input order. Configurations run
/// concurrently; results do not depend on the number of workers.
pub fn sweep(
    train: &FeatureTable,
    test: &FeatureTable,
    configs: &[PipelineConfig],
    options: &EvalOptions,
) -> Result<Vec<TradeoffPoint>> {
    sweep_with(train, test, configs, options, run_config)
}

/// [`sweep`] with one model per group key value.
pub fn sweep_grouped(
    train: &FeatureTable,
    test: &FeatureTable,
    configs: &[PipelineConfig],
    options: &EvalOptions,
) -> Result<Vec<TradeoffPoint>> {
    sweep_with(train, test, configs, options, run_config_grouped)
}

fn sweep_with(
    train: &FeatureTable,
    test: &FeatureTable,
    configs: &[PipelineConfig],
    options: &EvalOptions,
    run: fn(&FeatureTable, &FeatureTable, &PipelineConfig, &EvalOptions) -> Result<TradeoffPoint>,
) -> Result<Vec<TradeoffPoint>> {
    if configs.is_empty() {
        return Err(Error::invalid("empty configuration list"));
    }
    in_pool(options.jobs, || {
        configs
            .par_iter()
            .map(|c| run(train, test, c, options))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Cartesian product, selection outermost and bits innermost.
pub fn config_grid(
    selection: &[Option<usize>],
    pca: &[Option<f64>],
    bits: &[Option<u32>],
    forest: &ForestParams,
    seed: u64,
) -> Vec<PipelineConfig> {
    let mut out = Vec::with_capacity(selection.len() * pca.len() * bits.len());
    for &k in selection {
        for &target in pca {
            for &b in bits {
                out.push(PipelineConfig {
                    selection_k: k,
                    pca_target: target,
                    bits: b,
                    forest: forest.clone(),
                    seed,
                });
            }
        }
    }
    out
}

/// Bits {none, 32, 16, 8, 4, 2} x PCA {none, 0.99, 0.80}: 18 configurations.
pub fn core_sweep(forest: &ForestParams, seed: u64) -> Vec<PipelineConfig> {
    config_grid(&[None], &DEFAULT_PCA_TARGETS, &DEFAULT_BITS, forest, seed)
}

/// Bits {none, 32, 16, 8, 4, 2} x selection {none, 100, 20}.
pub fn iot_sweep(forest: &ForestParams, seed: u64) -> Vec<PipelineConfig> {
    config_grid(&DEFAULT_SELECTION, &[None], &DEFAULT_BITS, forest, seed)
}

/// Configurations whose F1 stays within `epsilon` of the unquantized point
/// with the same selection and PCA settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub epsilon: f64,
    /// Indices into the point list.
    pub members: Vec<usize>,
    pub min_reduction: f64,
    pub max_reduction: f64,
}

pub fn operating_region(points: &[TradeoffPoint], epsilon: f64) -> Result<Region> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon {epsilon} must be non-negative")));
    }
    if points.is_empty() {
        return Err(Error::invalid("no points"));
    }
    let mut baselines = BTreeMap::new();
    for p in points.iter().filter(|p| p.config.bits.is_none()) {
        baselines.entry(p.config.stage_key()).or_insert(p.f1);
    }
    let mut members = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let base = *baselines
            .get(&p.config.stage_key())
            .ok_or(Error::MissingBaseline {
                selection_k: p.config.selection_k,
                pca_target: p.config.pca_target,
            })?;
        if p.f1 >= base - epsilon {
            members.push(i);
        }
    }
    let reductions = members.iter().map(|&i| points[i].storage.reduction_vs_csv);
    let min_reduction = reductions.clone().fold(f64::INFINITY, f64::min);
    let max_reduction = reductions.fold(f64::NEG_INFINITY, f64::max);
    Ok(Region {
        epsilon,
        members,
        min_reduction,
        max_reduction,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

/// Report rows under [`REPORT_HEADER`]. Wall times are written only when
/// `timing` is set, so that reports of identical runs are byte-identical.
pub fn report_csv(points: &[TradeoffPoint], timing: bool) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for p in points {
        let s = &p.storage;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            opt(p.config.selection_k),
            p.config.pca_target.map_or_else(|| "none".into(), format_shortest),
            opt(p.config.bits),
            format_shortest(p.f1),
            s.lossy_bytes,
            s.baseline_csv_bytes,
            format_shortest(s.reduction_vs_csv),
            format_shortest(s.reduction_vs_f32),
            s.bits_per_second.map(format_shortest).unwrap_or_default(),
            if timing {
                format_shortest(p.wall_time_seconds)
            } else {
                String::new()
            },
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    pub svg: bool,
    pub timing: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            svg: true,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
}

/// Writes `report.csv` (and `tradeoff.svg`) into `dir`, creating it.
pub fn write_report(
    points: &[TradeoffPoint],
    region: Option<&Region>,
    dir: impl AsRef<Path>,
    options: ReportOptions,
) -> Result<ReportFiles> {
    if points.is_empty() {
        return Err(Error::invalid("no points to report"));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("report.csv");
    fs::write(&csv, report_csv(points, options.timing)).map_err(|e| Error::io(&csv, e))?;
    let svg = if options.svg {
        let path = dir.join("tradeoff.svg");
        fs::write(&path, tradeoff_svg(points, region)).map_err(|e| Error::io(&path, e))?;
        Some(path)
    } else {
        None
    };
    Ok(ReportFiles { csv, svg })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn series_label(c: &PipelineConfig) -> String {
    match (c.selection_k, c.pca_target) {
        (None, None) => "quantization only".into(),
        (Some(k), None) => format!("top-{k} features"),
        (None, Some(t)) => format!("PCA {}%", format_shortest(t * 100.0)),
        (Some(k), Some(t)) => format!("top-{k} + PCA {}%", format_shortest(t * 100.0)),
    }
}

/// Scatter of F1 against storage reduction (log x axis), one polyline per
/// selection/PCA setting, with the operating region shaded.
pub fn tradeoff_svg(points: &[TradeoffPoint], region: Option<&Region>) -> String {
    const W: f64 = 720.0;
    const H: f64 = 480.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 200.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 60.0;
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;

    let reductions: Vec<f64> = points.iter().map(|p| p.storage.reduction_vs_csv).collect();
    let lo_r = reductions.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    let hi_r = reductions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_min = lo_r.log2().floor();
    let x_max = hi_r.log2().ceil().max(x_min + 1.0);
    let min_f1 = points.iter().map(|p| p.f1).fold(1.0, f64::min);
    let y_min = ((min_f1 - 0.05) * 10.0).floor().max(0.0) / 10.0;
    let y_max = 1.0;
    let sx = |r: f64| LEFT + (r.log2() - x_min) / (x_max - x_min) * plot_w;
    let sy = |f: f64| TOP + (y_max - f) / (y_max - y_min).max(1e-9) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<g fill="white"><path d="M0 0H{W}V{H}H0Z"/></g>"#);
    if let Some(r) = region.filter(|r| !r.members.is_empty()) {
        let x0 = sx(r.min_reduction);
        let x1 = sx(r.max_reduction).max(x0 + 4.0);
        let _ = writeln!(
            s,
            r##"<rect class="region" x="{x0:.2}" y="{TOP}" width="{:.2}" height="{plot_h}" fill="#9ecae1" fill-opacity="0.35"><title>operating region, epsilon {}</title></rect>"##,
            x1 - x0,
            format_shortest(r.epsilon)
        );
    }
    // axes and ticks
    let _ = writeln!(
        s,
        r#"<path class="axes" d="M{LEFT} {TOP}V{}H{}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    let mut e = x_min;
    while e <= x_max {
        let x = sx(2f64.powf(e));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}x</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            format_shortest(2f64.powf(e))
        );
        e += 1.0;
    }
    let mut f = y_min;
    while f <= y_max + 1e-9 {
        let y = sy(f);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{f:.1}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
        f += 0.1;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">storage reduction factor (log scale)</text>"#,
        LEFT + plot_w / 2.0,
        H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {}) rotate(-90)" text-anchor="middle">F1-score</text>"#,
        TOP + plot_h / 2.0
    );

    // one series per selection/PCA setting, in first-appearance order
    let mut series: Vec<(StageKey, Vec<usize>)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let key = p.config.stage_key();
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => series.push((key, vec![i])),
        }
    }
    for (n, (_, idx)) in series.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let pts: Vec<String> = idx
            .iter()
            .map(|&i| format!("{:.2},{:.2}", sx(reductions[i]), sy(points[i].f1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}"/>"#,
            pts.join(" ")
        );
        for &i in idx {
            let p = &points[i];
            let _ = writeln!(
                s,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="{color}"><title>bits={} f1={} reduction={}</title></circle>"#,
                sx(reductions[i]),
                sy(p.f1),
                opt(p.config.bits),
                format_shortest(p.f1),
                format_shortest(reductions[i])
            );
        }
        let ly = TOP + 10.0 + n as f64 * 18.0;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            s,
            r#"<path d="M{lx} {ly}h20" stroke="{color}"/><text x="{}" y="{}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            series_label(&points[idx[0]].config)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{stratified_split, synth_generate, SynthSpec};

    fn small() -> (FeatureTable, FeatureTable) {
        let t = synth_generate(&SynthSpec {
            n_classes: 3,
            n_informative: 4,
            n_noise: 2,
            rows_per_class: 40,
            separation: 3.0,
            heavy_tail_fraction: 0.25,
            record_rate_hz: 2.0,
            seed: 5,
        })
        .unwrap();
        stratified_split(&t, 0.3, 1).unwrap()
    }

    fn fast(seed: u64) -> PipelineConfig {
        PipelineConfig::baseline(seed).with_forest(ForestParams {
            n_trees: 10,
            ..ForestParams::with_seed(seed)
        })
    }

    fn point(k: Option<usize>, pca: Option<f64>, bits: Option<u32>, f1: f64, red: f64) -> TradeoffPoint {
        TradeoffPoint {
            config: fast(0).with_selection(k).with_pca(pca).with_bits(bits),
            f1,
            storage: StorageReport {
                lossy_bytes: 100,
                baseline_csv_bytes: (100.0 * red) as u64,
                baseline_f32_bytes: 100,
                raw_csv_bytes: 100,
                reduction_vs_csv: red,
                reduction_vs_f32: 1.0,
                reduction_vs_raw_csv: red,
                bits_per_second: None,
            },
            stored_features: 1,
            wall_time_seconds: 0.0,
        }
    }

    #[test]
    fn baseline_point_has_unit_reduction() {
        let (train, test) = small();
        let p = run_config(&train, &test, &fast(1), &EvalOptions::default()).unwrap();
        assert_eq!(p.storage.reduction_vs_csv, 1.0);
        assert_eq!(p.storage.reduction_vs_raw_csv, 1.0);
        assert_eq!(p.storage.lossy_bytes, p.storage.baseline_csv_bytes);
        assert!(p.f1 > 0.8);
        // test split spans the whole capture at 2 Hz
        assert!(p.storage.bits_per_second.is_some());
    }

    #[test]
    fn staged_config_runs() {
        let (train, test) = small();
        let c = fast(1).with_selection(Some(3)).with_pca(Some(0.9)).with_bits(Some(6));
        let (p, fitted) = run_config_detailed(&train, &test, &c, &EvalOptions::default()).unwrap();
        let k = fitted.pca.as_ref().unwrap().n_components();
        assert_eq!(p.stored_features, k);
        assert!(k <= 3);
        assert!(p.storage.reduction_vs_raw_csv > p.storage.reduction_vs_csv);
        assert_eq!(fitted.ranges.unwrap().len(), k);
    }

    #[test]
    fn schema_mismatch_rejected() {
        let (train, test) = small();
        let narrow = test.select_columns(&[0, 1]).unwrap();
        assert!(matches!(
            run_config(&train, &narrow, &fast(0), &EvalOptions::default()),
            Err(Error::SchemaMismatch { .. })
        ));
        assert!(run_config(&train, &test, &fast(0).with_bits(Some(40)), &EvalOptions::default()).is_err());
    }

    #[test]
    fn singleton_sweep_matches_run_config() {
        let (train, test) = small();
        let c = fast(3).with_bits(Some(4));
        let opts = EvalOptions::default();
        let one = run_config(&train, &test, &c, &opts).unwrap();
        let swept = sweep(&train, &test, std::slice::from_ref(&c), &opts).unwrap();
        assert_eq!(swept.len(), 1);
        assert_eq!(swept[0].f1, one.f1);
        assert_eq!(swept[0].storage, one.storage);
        assert!(sweep(&train, &test, &[], &opts).is_err());
    }

    #[test]
    fn default_grids() {
        let f = ForestParams::default();
        let core = core_sweep(&f, 0);
        assert_eq!(core.len(), 18);
        assert_eq!(core.iter().filter(|c| c.bits.is_none()).count(), 3);
        assert_eq!(iot_sweep(&f, 0).len(), 18);
        assert_eq!(core[1].bits, Some(32));
        assert_eq!(core[6].pca_target, Some(0.99));
    }

    #[test]
    fn region_membership() {
        let pts = vec![
            point(None, None, None, 0.90, 1.0),
            point(None, None, Some(8), 0.89, 5.0),
            point(None, None, Some(2), 0.60, 20.0),
            point(None, Some(0.8), None, 0.70, 1.0),
            point(None, Some(0.8), Some(8), 0.70, 6.0),
        ];
        let all = operating_region(&pts, 1.0).unwrap();
        assert_eq!(all.members, [0, 1, 2, 3, 4]);
        let r = operating_region(&pts, 0.02).unwrap();
        assert_eq!(r.members, [0, 1, 3, 4]);
        assert_eq!((r.min_reduction, r.max_reduction), (1.0, 6.0));
        let strict = operating_region(&pts, 0.0).unwrap();
        assert_eq!(strict.members, [0, 3, 4]);
        let orphan = vec![point(None, None, Some(8), 0.9, 3.0)];
        assert!(matches!(
            operating_region(&orphan, 0.02),
            Err(Error::MissingBaseline { .. })
        ));
        assert!(operating_region(&pts, -1.0).is_err());
    }

    #[test]
    fn report_format() {
        let pts = vec![point(Some(20), Some(0.8), Some(4), 0.5, 2.5)];
        let csv = report_csv(&pts, false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "selection_k,pca_target,bits,f1,lossy_bytes,baseline_csv_bytes,reduction_vs_csv,reduction_vs_f32,bits_per_second,wall_time_seconds"
        );
        assert_eq!(lines[1], "20,0.8,4,0.5,100,250,2.5,1,,");
        let timed = report_csv(&pts, true);
        assert!(timed.lines().nth(1).unwrap().ends_with(",,0"));
        let base = report_csv(&[point(None, None, None, 1.0, 1.0)], false);
        assert!(base.lines().nth(1).unwrap().starts_with("none,none,none,1,"));
    }

    #[test]
    fn svg_structure() {
        let pts = vec![
            point(None, None, None, 0.9, 1.0),
            point(None, None, Some(8), 0.88, 4.0),
            point(None, Some(0.8), None, 0.7, 1.0),
        ];
        let region = operating_region(&pts, 0.02).unwrap();
        let svg = tradeoff_svg(&pts, Some(&region));
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches(r#"<circle class="marker""#).count(), 3);
        assert_eq!(svg.matches(r#"class="region""#).count(), 1);
        assert_eq!(svg.matches(r#"<polyline class="series""#).count(), 2);
        assert!(!svg.contains("href"));
    }

    #[test]
    fn unwritable_report_path() {
        let pts = vec![point(None, None, None, 0.9, 1.0)];
        let err = write_report(&pts, None, "/proc/featpress-report", ReportOptions::default()).unwrap_err();
        assert!(err.is_io());
        assert!(write_report(&[], None, "/tmp", ReportOptions::default()).is_err());
    }

    #[test]
    fn grouped_mode() {
        let (train, test) = small();
        let key = |t: &FeatureTable| (0..t.n_rows()).map(|i| format!("AS{}", i % 2)).collect::<Vec<_>>();
        let train = train.clone().with_group_key(key(&train)).unwrap();
        let test = test.clone().with_group_key(key(&test)).unwrap();
        let c = fast(2).with_bits(Some(8));
        let p = run_config_grouped(&train, &test, &c, &EvalOptions::default()).unwrap();
        assert!(p.f1 > 0.5);
        assert!(p.storage.reduction_vs_csv > 1.0);
        let (plain_train, plain_test) = small();
        assert!(run_config_grouped(&plain_train, &plain_test, &c, &EvalOptions::default()).is_err());
    }
}
