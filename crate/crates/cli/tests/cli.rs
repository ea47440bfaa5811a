use std::fs;
use std::path::Path;

use featpress_cli::{run, EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE};
use featpress_core::quantizer::{decode, encode, fit_ranges};
use featpress_core::tabular::{
    canonical_csv, load_csv, synth_generate, to_csv_string, CsvColumns, SynthSpec,
};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn featpress(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("featpress").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> Output {
    let o = featpress(args);
    assert_eq!(o.code, EXIT_OK, "featpress {args:?} failed: {}", o.stderr);
    o
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small synthetic log split into train and test files.
fn fixture(dir: &Path) -> (String, String, String) {
    let all = dir.join("all.csv");
    let train = dir.join("train.csv");
    let test = dir.join("test.csv");
    ok(&[
        "synth", "--rows-per-class", "40", "--informative", "6", "--noise", "2",
        "--classes", "3", "--seed", "3", "-o", p(&all),
    ]);
    ok(&[
        "split", p(&all), "--seed", "3", "--train-out", p(&train), "--test-out", p(&test),
    ]);
    (p(&all).into(), p(&train).into(), p(&test).into())
}

#[test]
fn help_lists_every_flag_with_its_default() {
    let cases: &[(&str, &[&str])] = &[
        ("synth", &["--classes <CLASSES>", "[default: 5]", "--heavy-tail", "[default: 0.3]", "--seed"]),
        ("split", &["--test-fraction", "[default: 0.3]", "--label", "[default: label]", "--train-out", "--test-out"]),
        ("compress", &["--bits", "[default: 8]", "--pca", "--select-k", "[default: none]", "--level", "[default: 6]"]),
        ("decompress", &["--no-sidecar", "--output"]),
        ("eval", &["--train", "--test", "--trees", "[default: 100]", "--max-features", "[default: sqrt]", "--bits"]),
        ("sweep", &["--bits-list", "[default: none,32,16,8,4,2]", "--pca-list", "--select-list", "--epsilon", "[default: 0.02]", "--jobs", "[default: 1]", "--timing"]),
        ("inspect", &["<INPUT>"]),
        ("rank", &["--seed", "[default: 0]"]),
    ];
    for (sub, needles) in cases {
        let o = featpress(&[sub, "--help"]);
        assert_eq!(o.code, EXIT_OK, "{sub} --help");
        for n in *needles {
            assert!(o.stdout.contains(n), "`{sub} --help` lacks {n}:\n{}", o.stdout);
        }
    }
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    assert_eq!(featpress(&[]).code, EXIT_USAGE);
    assert_eq!(featpress(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(featpress(&["sweep", "--train", "a", "--test", "b", "-o", "d", "--bits-list", "8,x"]).code, EXIT_USAGE);
    assert_eq!(featpress(&["inspect", "/definitely/not/here.nfq"]).code, EXIT_IO);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b,label\n1,oops,x\n").unwrap();
    let o = featpress(&["compress", p(&bad), "-o", p(&dir.path().join("x.nfq"))]);
    assert_eq!(o.code, EXIT_DATA);
    assert!(o.stderr.contains("row 1"), "{}", o.stderr);
    assert!(o.stdout.is_empty());

    let not_nfq = dir.path().join("n.nfq");
    fs::write(&not_nfq, b"hello world, not a container").unwrap();
    assert_eq!(featpress(&["inspect", p(&not_nfq)]).code, EXIT_DATA);
}

#[test]
fn synth_reference_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ref.csv");
    ok(&["synth", "--seed", "7", "-o", p(&out)]);
    let table = synth_generate(&SynthSpec { seed: 7, ..SynthSpec::reference() }).unwrap();
    let expected = to_csv_string(&table, &CsvColumns::default().timestamp("timestamp")).unwrap();
    assert_eq!(fs::read_to_string(&out).unwrap(), expected);
    assert_eq!(table.n_rows(), 2000);
    assert_eq!(table.n_features(), 30);

    let to_stdout = ok(&["synth", "--seed", "7"]);
    assert_eq!(to_stdout.stdout, expected);
}

#[test]
fn decompress_inverts_compress_up_to_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let (all, _, _) = fixture(dir.path());
    let nfq = dir.path().join("all.nfq");
    let back = dir.path().join("back.csv");
    ok(&["compress", &all, "--bits", "6", "-o", p(&nfq)]);
    ok(&["decompress", p(&nfq), "-o", p(&back)]);

    let cols = CsvColumns::default().timestamp("timestamp");
    let input = load_csv(Path::new(&all), &cols).unwrap();
    let ranges = fit_ranges(&input).unwrap();
    let expected = decode(&encode(&input, &ranges, 6).unwrap(), &ranges).unwrap();

    let restored = load_csv(&back, &cols).unwrap();
    assert_eq!(restored.values(), expected.values());
    assert_eq!(restored.labels(), input.labels());
    assert_eq!(restored.class_names(), input.class_names());
    assert_eq!(restored.timestamps(), input.timestamps());

    // without the sidecar only feature columns come back
    let bare = dir.path().join("bare.csv");
    ok(&["decompress", p(&nfq), "--no-sidecar", "-o", p(&bare)]);
    assert_eq!(fs::read_to_string(&bare).unwrap(), canonical_csv(&expected));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("all.nfq.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["bits"], 6);
    assert_eq!(manifest["label"], "label");
}

#[test]
fn inspect_reports_header_fields() {
    let dir = tempfile::tempdir().unwrap();
    let (all, _, _) = fixture(dir.path());
    let nfq = dir.path().join("a.nfq");
    ok(&["compress", &all, "--bits", "4", "--select-k", "3", "-o", p(&nfq)]);
    let o = ok(&["inspect", p(&nfq)]);
    assert!(o.stdout.contains("bits: 4\n"), "{}", o.stdout);
    assert!(o.stdout.contains("rows: 120\n"));
    assert!(o.stdout.contains("features: 3\n"));
    let table_part = o.stdout.split("name,lo,hi\n").nth(1).unwrap();
    assert_eq!(table_part.lines().count(), 3);
}

#[test]
fn eval_prints_header_and_one_row_only() {
    let dir = tempfile::tempdir().unwrap();
    let (_, train, test) = fixture(dir.path());
    let o = ok(&["eval", "--train", &train, "--test", &test, "--bits", "8", "--trees", "20"]);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("selection_k,pca_target,bits,f1,"));
    assert!(lines[1].starts_with("none,none,8,"));
    assert!(lines[1].ends_with(','), "wall time is blank without --timing");
}

#[test]
fn sweep_report_is_independent_of_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let (_, train, test) = fixture(dir.path());
    let mut reports = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("out{jobs}"));
        let o = ok(&[
            "sweep", "--train", &train, "--test", &test, "--trees", "20", "--seed", "5",
            "--pca-list", "none,0.9", "--jobs", jobs, "-o", p(&out),
        ]);
        assert!(o.stdout.is_empty());
        assert!(o.stderr.contains("operating region"));
        reports.push((
            fs::read(out.join("report.csv")).unwrap(),
            fs::read(out.join("tradeoff.svg")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
    let csv = String::from_utf8(reports[0].0.clone()).unwrap();
    assert_eq!(csv.lines().count(), 1 + 12);
}

#[test]
fn rank_writes_every_feature_once() {
    let dir = tempfile::tempdir().unwrap();
    let (_, train, _) = fixture(dir.path());
    let o = ok(&["rank", &train, "--seed", "1"]);
    let mut lines = o.stdout.lines();
    assert_eq!(lines.next(), Some("feature,importance"));
    let mut names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    names.sort_unstable();
    assert_eq!(names, ["f01", "f02", "f03", "f04", "f05", "f06", "f07", "f08"]);
}
