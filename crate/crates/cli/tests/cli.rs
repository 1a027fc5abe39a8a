use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synth200").join(name)
}

fn chanbal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chanbal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = chanbal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = chanbal(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_snapshot_is_a_usage_error() {
    let out = chanbal(&["evaluate", "--labels", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_or_invalid_data_exits_2() {
    let out = chanbal(&["predict", "--snapshot", "/nonexistent/graph.json", "--model", "equal-split"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = chanbal(&["predict", "--snapshot", s(&bad), "--model", "equal-split"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_fixture_reports_every_estimator_and_repeats_exactly() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let snapshot = fixture("snapshot.json");
    let labels = fixture("labels.csv");
    let before = std::fs::read(&labels).unwrap();
    for dir in &dirs {
        ok(&[
            "evaluate",
            "--snapshot",
            s(&snapshot),
            "--labels",
            s(&labels),
            "--trees",
            "30",
            "--seed",
            "42",
            "--out",
            s(dir.path()),
        ]);
    }
    let results = std::fs::read_to_string(dirs[0].path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 8);
    for name in ["results.csv", "results.txt", "histogram.csv", "scatter.csv", "mdi.csv", "confusion.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    assert_eq!(std::fs::read(&labels).unwrap(), before);
}

#[test]
fn synth_is_reproducible() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        ok(&["synth", "--nodes", "60", "--seed", "3", "--out", s(dir.path())]);
    }
    for name in ["snapshot.json", "labels.csv", "truth.csv"] {
        assert_eq!(
            std::fs::read(dirs[0].path().join(name)).unwrap(),
            std::fs::read(dirs[1].path().join(name)).unwrap()
        );
    }
}

#[test]
fn train_then_inspect_predict_route_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("joint");
    let snapshot = fixture("snapshot.json");
    let labels = fixture("labels.csv");
    ok(&[
        "train",
        "--snapshot",
        s(&snapshot),
        "--labels",
        s(&labels),
        "--variant",
        "joint",
        "--trees",
        "20",
        "--out",
        s(&bundle),
    ]);

    let importances = ok(&["importance", "--model", s(&bundle)]);
    let total: f64 = importances
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-4);

    let predictions = ok(&["predict", "--snapshot", s(&snapshot), "--model", s(&bundle)]);
    assert_eq!(predictions.lines().count(), 1 + 2 * 397);

    let (src, dest) = (
        "020000000000000000000000000000000000000000000000000000000000000005",
        "0200000000000000000000000000000000000000000000000000000000000000c7",
    );
    let route = ok(&[
        "route", "--snapshot", s(&snapshot), "--model", "equal-split", "--src", src, "--dest", dest, "--amount-sat", "1000",
    ]);
    assert!(route.starts_with("hop,channel_id"));
    assert!(route.lines().last().unwrap().starts_with("total_cost,"));

    let out = dir.path().join("sim");
    let models = format!("{},equal-split,capacity-uniform,oracle", s(&bundle));
    let summary = ok(&[
        "simulate",
        "--snapshot",
        s(&snapshot),
        "--labels",
        s(&fixture("truth.csv")),
        "--models",
        &models,
        "--payments",
        "60",
        "--out",
        s(&out),
    ]);
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(summary.lines().any(|l| l.starts_with("oracle,")));
    assert_eq!(std::fs::read_to_string(out.join("simulation.csv")).unwrap(), summary);
    assert_eq!(std::fs::read_to_string(out.join("payments.csv")).unwrap().lines().count(), 1 + 4 * 60);
}

#[test]
fn untrained_forest_name_is_rejected() {
    let out = chanbal(&[
        "simulate",
        "--snapshot",
        s(&fixture("snapshot.json")),
        "--labels",
        s(&fixture("truth.csv")),
        "--models",
        "joint",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("chanbal train"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "seed = 5\nvariants = [\"equal-split\", \"edge-wise\"]\n[paths]\nsnapshot = {:?}\nlabels = {:?}\n[train.forest]\nn_trees = 10\n",
            s(&fixture("snapshot.json")),
            s(&fixture("labels.csv"))
        ),
    )
    .unwrap();
    let from_file = ok(&["--config", s(&config), "evaluate", "--out", s(&dir.path().join("a"))]);
    assert_eq!(from_file.lines().count(), 1 + 2);
    let overridden = ok(&[
        "--config",
        s(&config),
        "evaluate",
        "--variant",
        "equal-split",
        "--out",
        s(&dir.path().join("b")),
    ]);
    assert_eq!(overridden.lines().count(), 1 + 1);

    std::fs::write(&config, "sed = 1\n").unwrap();
    let out = chanbal(&["--config", s(&config), "evaluate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn featurize_writes_matrix_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("edge.csv");
    ok(&[
        "featurize",
        "--snapshot",
        s(&fixture("snapshot.json")),
        "--labels",
        s(&fixture("labels.csv")),
        "--variant",
        "edge-wise",
        "--out",
        s(&matrix),
    ]);
    let text = std::fs::read_to_string(&matrix).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("channel_id,src_pub,dst_pub,") && header.ends_with(",target_p"));
    assert_eq!(text.lines().count(), 1 + 2 * 397);
    assert!(dir.path().join("edge.schema.json").exists());
}
