use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_retina-vasc");

fn run(args: &[&str], threads: Option<usize>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args).env_remove("RUST_LOG");
    if let Some(t) = threads {
        c.env("RETINA_VASC_THREADS", t.to_string());
    }
    c.output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args, None);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small grids so a whole pipeline runs in seconds.
fn small_config(dir: &Path) -> PathBuf {
    std::fs::write(
        dir.join("grids.json"),
        r#"{"KNC": {"n_neighbors": [3, 7]}, "DTC": {"max_depth": [2, null]}, "GNB": {}, "LR": {"C": [1.0, 10.0]}}"#,
    )
    .unwrap();
    let cfg = dir.join("config.json");
    std::fs::write(
        &cfg,
        r#"{"grid_file": "grids.json", "top_k": 2, "explain_samples": 4, "background_size": 16, "perplexity": 8, "tsne_iterations": 300}"#,
    )
    .unwrap();
    cfg
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--out", s(d.path()), "frobnicate"], None).status.code(), Some(2));
    assert_eq!(run(&["--out", s(d.path()), "regress", "/no/such/table.csv"], None).status.code(), Some(2));
    let o = run(&["--out", s(d.path()), "synth", "tree"], Some(0));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("RETINA_VASC_THREADS"));

    // a dangling junction reference is listed and rejected
    let bad = d.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"disc":{"cx":512,"cy":512,"d":100},"image":[1024,1024],"segments":[{"id":"a1","kind":"arteriole","parent":null,"generation":0,"pts":[[600,512],[700,512]],"widths":[10,10]}],"junctions":[{"at":[700,512],"trunk":"a1","daughters":["a2","a3"]}]}"#,
    )
    .unwrap();
    let o = run(&["--out", s(d.path()), "quantify", s(&bad)], None);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("junction #0"), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = d.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"models": ["SVC"]}"#).unwrap();
    let o = run(&["--out", s(d.path()), "--config", s(&cfg), "train", s(&bad)], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not implemented"));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let d = tempfile::tempdir().unwrap();
    let out = s(d.path());
    ok(&["--out", out, "synth", "tree", "--depth", "2"]);
    let before = std::fs::read(d.path().join("tree.json")).unwrap();
    let o = run(&["--out", out, "--seed", "5", "synth", "tree", "--depth", "2"], None);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(std::fs::read(d.path().join("tree.json")).unwrap(), before);
    ok(&["--out", out, "--seed", "5", "--force", "synth", "tree", "--depth", "2"]);
    assert_ne!(std::fs::read(d.path().join("tree.json")).unwrap(), before);
}

#[test]
fn quantify_appends_and_guards_ids() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["--out", s(&a), "synth", "tree", "--depth", "2"]);
    ok(&["--out", s(&b), "--seed", "3", "synth", "tree", "--depth", "2", "--tortuosity", "0.05"]);
    let img1 = d.path().join("img1.json");
    let img2 = d.path().join("img2.json");
    std::fs::copy(a.join("tree.json"), &img1).unwrap();
    std::fs::copy(b.join("tree.json"), &img2).unwrap();
    let out = d.path().join("q");
    ok(&["--out", s(&out), "quantify", s(&img1), "--grade", "1"]);
    ok(&["--out", s(&out), "quantify", s(&img2), "--grade", "3"]);
    let table = retina_vasc::features::read_csv(&out.join("features.csv"), None).unwrap();
    let ids: Vec<(&str, u8)> = table.records.iter().map(|r| (r.image_id.as_str(), r.grade)).collect();
    assert_eq!(ids, [("img1", 1), ("img2", 3)]);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("features.diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["images"].as_array().unwrap().len(), 2);

    assert_eq!(run(&["--out", s(&out), "quantify", s(&img1)], None).status.code(), Some(2));
    ok(&["--out", s(&out), "--force", "quantify", s(&img1), "--grade", "2"]);
    let table = retina_vasc::features::read_csv(&out.join("features.csv"), None).unwrap();
    assert_eq!(table.len(), 2);
    assert_eq!(table.records.iter().find(|r| r.image_id == "img1").unwrap().grade, 2);
}

#[test]
fn svg_outputs_are_well_formed() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let out = s(d.path());
    let c = s(&cfg);
    ok(&["--out", out, "--config", c, "synth", "dataset", "--counts", "30,30,30", "--features", "6", "--test-fraction", "0.2"]);
    let table = d.path().join("dataset.csv");
    ok(&["--out", out, "--config", c, "train", s(&table)]);
    ok(&["--out", out, "--config", c, "explain", s(&table), "--train-report", s(&d.path().join("train.json"))]);
    ok(&["--out", out, "--config", c, "tsne", s(&table)]);
    for name in ["importance.svg", "tsne.svg"] {
        let text = std::fs::read_to_string(d.path().join(name)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        let prov = doc.descendants().find(|n| n.has_tag_name("provenance")).expect("provenance element");
        let v: serde_json::Value = serde_json::from_str(prov.text().unwrap()).unwrap();
        assert_eq!(v["tool"], "retina-vasc");
        assert!(doc.descendants().any(|n| n.has_tag_name("generated")));
    }
    let csv = std::fs::read_to_string(d.path().join("importance.csv")).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "rank,feature,mean_abs_phi");
    assert_eq!(body.len(), 7);
}

#[test]
fn deterministic_reruns_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    ok(&["--out", s(d.path()), "--config", s(&cfg), "synth", "dataset", "--counts", "25,25", "--features", "5", "--test-fraction", "0.2"]);
    let table = d.path().join("dataset.csv");
    let outs = [d.path().join("r1"), d.path().join("r2")];
    for o in &outs {
        let base = ["--out", s(o), "--config", s(&cfg), "--deterministic"];
        let report = o.join("train.json");
        ok(&[&base[..], &["train", s(&table)]].concat());
        ok(&[&base[..], &["evaluate", s(&table), "--train-report", s(&report)]].concat());
        ok(&[&base[..], &["tsne", s(&table)]].concat());
    }
    for name in ["train.json", "train.txt", "evaluate.json", "evaluate.txt", "tsne.json", "tsne.svg"] {
        let a = std::fs::read(outs[0].join(name)).unwrap();
        assert_eq!(a, std::fs::read(outs[1].join(name)).unwrap(), "{name} differs");
    }
}

#[test]
fn regress_sentence_and_table() {
    let d = tempfile::tempdir().unwrap();
    let out = s(d.path());
    ok(&["--out", out, "synth", "dataset", "--counts", "40,40,40", "--features", "8", "--separation", "2"]);
    let line = ok(&["--out", out, "regress", s(&d.path().join("dataset.csv"))]);
    let line = line.trim();
    let (head, rest) = line.split_once(" = ").unwrap();
    assert!(head.starts_with("F(") && head.ends_with(')'), "{line}");
    let df: Vec<usize> = head[2..head.len() - 1].split(", ").map(|v| v.parse().unwrap()).collect();
    assert_eq!(df[0] + df[1] + 1, 120, "{line}");
    let parts: Vec<&str> = rest.split(", ").collect();
    assert_eq!(parts.len(), 3, "{line}");
    assert!(parts[0].parse::<f64>().is_ok() && parts[0].split('.').nth(1).unwrap().len() == 3);
    assert!(parts[1] == "p<.0005" || parts[1].starts_with("p=."), "{line}");
    assert!(parts[2].starts_with("R² = ."), "{line}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("regress.json")).unwrap()).unwrap();
    assert_eq!(json["sentence"], line);
    assert_eq!(json["report"]["selected"].as_array().unwrap().len(), df[0]);
}

#[test]
fn evaluate_rejects_overlapping_ids() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config(d.path());
    let (out, c) = (s(d.path()), s(&cfg));
    ok(&["--out", out, "--config", c, "synth", "dataset", "--counts", "20,20", "--features", "4"]);
    let table = d.path().join("dataset.csv");
    ok(&["--out", out, "--config", c, "train", s(&table), "--models", "GNB"]);
    let o = run(
        &["--out", out, "--config", c, "evaluate", s(&table), "--test-table", s(&table), "--train-report", s(&d.path().join("train.json"))],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("both train and test"), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!d.path().join("evaluate.json").exists());
}
