mod common;

use std::sync::OnceLock;

use featpress_core::experiment::{
    core_sweep, operating_region, report_csv, sweep, tradeoff_svg, write_report, EvalOptions,
    ReportOptions, TradeoffPoint, REPORT_HEADER,
};
use featpress_core::forest::ForestParams;

use common::{reference, SEED};

fn default_sweep() -> &'static Vec<TradeoffPoint> {
    static POINTS: OnceLock<Vec<TradeoffPoint>> = OnceLock::new();
    POINTS.get_or_init(|| {
        let (train, test) = reference();
        let configs = core_sweep(&ForestParams::with_seed(SEED), SEED);
        sweep(train, test, &configs, &EvalOptions::default()).unwrap()
    })
}

fn stage(points: &[TradeoffPoint], pca: Option<f64>) -> Vec<&TradeoffPoint> {
    points.iter().filter(|p| p.config.pca_target == pca).collect()
}

#[test]
fn default_sweep_covers_three_stages_by_six_widths() {
    let points = default_sweep();
    assert_eq!(points.len(), 18);
    for pca in [None, Some(0.99), Some(0.8)] {
        let bits: Vec<Option<u32>> = stage(points, pca).iter().map(|p| p.config.bits).collect();
        assert_eq!(bits, [None, Some(32), Some(16), Some(8), Some(4), Some(2)]);
    }
}

#[test]
fn baselines_anchor_at_one_and_sizes_fall_with_bits() {
    for pca in [None, Some(0.99), Some(0.8)] {
        let s = stage(default_sweep(), pca);
        assert_eq!(s[0].storage.reduction_vs_csv, 1.0);
        assert!(s[1].storage.reduction_vs_csv >= 1.0, "32-bit codes lose to text");
        for w in s[1..].windows(2) {
            assert!(w[1].storage.lossy_bytes <= w[0].storage.lossy_bytes);
        }
        let (two, eight) = (s[5], s[3]);
        assert!(two.f1 <= eight.f1 + 0.02);
        assert!((s[1].f1 - s[0].f1).abs() <= 0.01);
    }
}

#[test]
fn projection_stores_fewer_columns() {
    let points = default_sweep();
    let width = |pca| stage(points, pca)[0].stored_features;
    assert_eq!(width(None), 30);
    assert!(width(Some(0.8)) < width(Some(0.99)));
    assert!(width(Some(0.99)) <= 30);
    for p in stage(points, Some(0.8)) {
        assert!(p.storage.reduction_vs_raw_csv > p.storage.reduction_vs_csv * 0.99);
    }
}

#[test]
fn quantization_region_includes_fine_widths() {
    let points: Vec<TradeoffPoint> = stage(default_sweep(), None).into_iter().cloned().collect();
    let region = operating_region(&points, 0.02).unwrap();
    let bits: Vec<Option<u32>> = region.members.iter().map(|&i| points[i].config.bits).collect();
    assert!(bits.contains(&Some(32)) && bits.contains(&Some(16)));
    assert_eq!(region.min_reduction, 1.0);

    let all = operating_region(default_sweep(), 1.0).unwrap();
    assert_eq!(all.members.len(), 18);
}

#[test]
fn svg_has_a_marker_per_point_and_one_region() {
    let points = default_sweep();
    let region = operating_region(points, 0.02).unwrap();
    let svg = tradeoff_svg(points, Some(&region));
    assert_eq!(svg.matches(r#"<circle class="marker""#).count(), 18);
    assert_eq!(svg.matches("<rect").count(), 1);
    assert_eq!(svg.matches(r#"<rect class="region""#).count(), 1);
    assert_eq!(svg.matches(r#"<polyline class="series""#).count(), 3);
}

#[test]
fn report_files_match_in_memory_rendering() {
    let points = default_sweep();
    let dir = std::env::temp_dir().join(format!("featpress-pipeline-{}", std::process::id()));
    let region = operating_region(points, 0.02).unwrap();
    let files = write_report(points, Some(&region), &dir, ReportOptions::default()).unwrap();
    let csv = std::fs::read_to_string(&files.csv).unwrap();
    assert_eq!(csv, report_csv(points, false));
    assert_eq!(csv.lines().next(), Some(REPORT_HEADER));
    assert_eq!(csv.lines().count(), 19);
    assert!(files.svg.as_ref().is_some_and(|p| p.exists()));
    std::fs::remove_dir_all(&dir).unwrap();
}
