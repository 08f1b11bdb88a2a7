use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use llp::bags::Strategy;
use llp::model::ModelKind;
use llp::pipeline::{AttributeConfig, EstimateRequest, PipelineConfig};
use llp::synth::{planted_theta, AttributeSpec, GeneratorSpec};

fn llp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llp"))
        .args(args)
        .env("LLP_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = llp(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = llp(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct World {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl World {
    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Synthetic corpus plus ingested artifacts, all produced through the binary.
fn world() -> World {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let spec = GeneratorSpec {
        seed: 9,
        start: NaiveDate::from_ymd_opt(2016, 10, 1).unwrap(),
        n_days: 3,
        vocab_size: 40,
        n_parents: 5,
        sub_bags_per_parent: 3,
        docs_per_sub_bag: 15,
        docs_jitter: 0,
        doc_length: 20,
        background: None,
        attributes: vec![
            AttributeSpec::planted("dem", planted_theta(40, 20, 2.0, 0), (0.2, 0.8)),
            AttributeSpec::planted("female", planted_theta(40, 20, 2.0, 20), (0.3, 0.7)),
        ],
    };
    llp::io::write_toml(&root.join("spec.toml"), &spec).unwrap();
    let out = ok(&[
        "synth", "--spec", s(&root.join("spec.toml")), "--out", s(&root.join("data")), "--political", "dem",
        "--polled-parents", "2",
    ]);
    assert!(out.contains("documents,675"), "{out}");
    let out = ok(&[
        "ingest", "--docs", s(&root.join("data/docs.jsonl")), "--regions", s(&root.join("data/regions.csv")), "--out",
        s(&root.join("ingest")),
    ]);
    assert!(out.contains("documents,675") && out.contains("terms,40"), "{out}");
    World { _dir: dir, root }
}

fn train(w: &World, extra: &[&str], out: &str) -> String {
    let features = w.p("ingest/features.jsonl");
    let vocab = w.p("ingest/vocab.txt");
    let out = w.p(out);
    let mut args = vec![
        "train", "--features", s(&features), "--vocab", s(&vocab), "--out", s(&out), "--collapse-threshold", "10",
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn end_to_end_train_predict_estimate() {
    let w = world();
    let census = w.p("data/census.csv");
    let polls = w.p("data/polls.csv");
    let pvi = w.p("data/pvi.csv");
    let log = w.p("log.csv");
    train(
        &w,
        &[
            "--attribute", "dem", "--model", "wlr", "--strategy", "np", "--polls", s(&polls), "--pvi", s(&pvi),
            "--training-log", s(&log),
        ],
        "dem.json",
    );
    train(&w, &["--attribute", "female", "--model", "ridge", "--census", s(&census)], "female.json");

    let model = llp::io::read_model(&w.p("dem.json")).unwrap();
    assert_eq!(model.attribute, "dem");
    assert_eq!(model.kind, ModelKind::Wlr);
    let log = fs::read_to_string(w.p("log.csv")).unwrap();
    assert!(log.starts_with("iteration,cost,gradient_norm\n0,"));

    let preds = ok(&[
        "predict", "--model", s(&w.p("dem.json")), "--vocab", s(&w.p("ingest/vocab.txt")), "--features",
        s(&w.p("ingest/features.jsonl")),
    ]);
    assert!(preds.starts_with("id,date,region,probability,label\n"));
    assert_eq!(preds.lines().count(), 676);

    let vocab = s(&w.p("ingest/vocab.txt")).to_owned();
    let feats = s(&w.p("ingest/features.jsonl")).to_owned();
    let single = ok(&[
        "estimate", "--model", s(&w.p("dem.json")), "--vocab", &vocab, "--features", &feats, "--day", "2016-10-03",
    ]);
    let mut lines = single.lines();
    assert_eq!(lines.next(), Some("date,boundary,attribute,n_documents,hard,soft,marginal"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6, "five parents plus the national total");
    assert!(rows.iter().any(|r| r.starts_with("2016-10-03,US,dem,225,")));

    let pair = ok(&[
        "estimate", "--model", s(&w.p("dem.json")), s(&w.p("female.json")), "--vocab", &vocab, "--features", &feats,
        "--boundary", "P001",
    ]);
    let mut lines = pair.lines();
    assert_eq!(
        lines.next(),
        Some("date,boundary,attribute_a,attribute_b,n_documents,hard,soft,joint,marginal_b,conditional")
    );
    for row in lines {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(&f[1..4], ["P001", "dem", "female"]);
        let (hard, soft, joint): (f64, f64, f64) = (f[5].parse().unwrap(), f[6].parse().unwrap(), f[7].parse().unwrap());
        assert!((joint - (0.75 * soft + 0.25 * hard)).abs() < 1e-12);
        let (mb, cond): (f64, f64) = (f[8].parse().unwrap(), f[9].parse().unwrap());
        assert!(cond * mb == joint || (cond - joint / mb).abs() < 1e-15);
    }
}

#[test]
fn state_strategy_without_state_polls_fails() {
    let w = world();
    let national_only: String = fs::read_to_string(w.p("data/polls.csv"))
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("date") || l.contains(",US,"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(w.p("national.csv"), national_only).unwrap();
    let err = fails(&[
        "train", "--features", s(&w.p("ingest/features.jsonl")), "--vocab", s(&w.p("ingest/vocab.txt")), "--out",
        s(&w.p("m.json")), "--attribute", "dem", "--strategy", "sn", "--polls", s(&w.p("national.csv")),
    ]);
    assert!(err.contains("no state polls"), "{err}");
}

#[test]
fn ingest_reports_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    let regions = dir.path().join("regions.csv");
    fs::write(&regions, "region_id,parent_id\nc1,FL\n").unwrap();
    let good = r#"{"id":"ID","date":"2016-11-01","region":"c1","text":"vote today"}"#;
    let mut text: String = (0..6).map(|i| good.replace("ID", &i.to_string()) + "\n").collect();
    text.push_str("{\"id\": 7,\n");
    fs::write(&docs, text).unwrap();
    let out = dir.path().join("out");
    let err = fails(&["ingest", "--docs", s(&docs), "--regions", s(&regions), "--out", s(&out)]);
    assert!(err.contains("line 7"), "{err}");

    fs::write(&docs, "").unwrap();
    let err = fails(&["ingest", "--docs", s(&docs), "--regions", s(&regions), "--out", s(&out)]);
    assert!(err.contains("no records"), "{err}");
}

#[test]
fn eval_reports_mae() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "window,category,value\n2016-10,college,0.40\n2016-10,no college,0.55\n").unwrap();
    let out = ok(&["eval", "--estimates", s(&a), "--reference", s(&a)]);
    assert!(out.trim_end().ends_with("*,MAE,,,0"), "{out}");

    fs::write(&b, "window,category,value\n2016-10,college,0.45\n2016-10,no college,0.60\n").unwrap();
    let out = ok(&["eval", "--estimates", s(&a), "--reference", s(&b)]);
    let mae: f64 = out.trim_end().rsplit(',').next().unwrap().parse().unwrap();
    assert!((mae - 0.05).abs() < 1e-12, "{out}");

    fs::write(&b, "window,category,value\n2016-10,college,0.45\n2016-10,income<50k,0.60\n").unwrap();
    let err = fails(&["eval", "--estimates", s(&a), "--reference", s(&b)]);
    assert!(err.contains("income<50k") && err.contains("no college"), "{err}");
}

#[test]
fn pipeline_command_writes_artifacts() {
    let w = world();
    let config = PipelineConfig {
        min_doc_count: 1,
        collapse_threshold: 10,
        attributes: vec![
            AttributeConfig::political("dem", ModelKind::Wlr, Strategy::Np),
            AttributeConfig::census("female", ModelKind::Ridge),
        ],
        estimates: vec![EstimateRequest::joint("dem", "female")],
        ..Default::default()
    };
    llp::io::write_toml(&w.p("pipeline.toml"), &config).unwrap();
    let out = ok(&[
        "pipeline", "--config", s(&w.p("pipeline.toml")), "--docs", s(&w.p("data/docs.jsonl")), "--regions",
        s(&w.p("data/regions.csv")), "--census", s(&w.p("data/census.csv")), "--polls", s(&w.p("data/polls.csv")),
        "--pvi", s(&w.p("data/pvi.csv")), "--start", "2016-09-30", "--end", "2016-10-03", "--out", s(&w.p("run")),
        "--trajectory-term", "w0000", "--trajectory-attribute", "dem",
    ]);
    // the window ending on the first day holds no documents
    assert_eq!(out, "days,3\nfailed,1\n");
    assert!(w.p("run/models/2016-10-02/dem.json").exists());
    assert!(w.p("run/models/2016-10-02/female.json").exists());
    let est = fs::read_to_string(w.p("run/estimates.csv")).unwrap();
    assert!(est.starts_with("date,boundary,attribute_a,attribute_b,hard,soft,blended,n_documents\n"));
    assert_eq!(est.lines().count(), 1 + 3 * 6);
    let diag = fs::read_to_string(w.p("run/diagnostics.csv")).unwrap();
    assert!(diag.contains("2016-09-30,,failed:"), "{diag}");
    let traj = fs::read_to_string(w.p("run/trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 4);
}

#[test]
fn bad_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "window_days = 0\n[[attributes]]\nname = \"x\"\nmodel = \"ridge\"\nsource = \"census\"\n").unwrap();
    let err = fails(&[
        "pipeline", "--config", s(&cfg), "--docs", "missing.jsonl", "--regions", "missing.csv", "--start",
        "2016-01-01", "--end", "2016-01-02", "--out", s(dir.path()),
    ]);
    assert!(err.contains("window_days"), "{err}");
}
