use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/tiny")
}

fn gridfill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridfill"))
        .args(args)
        .env_remove("GRIDFILL_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = gridfill(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthesizes the tiny scenario and trains a repository in `dir`.
fn prepare(dir: &Path) {
    let a = assets();
    ok(&["synth", "--scenario", s(&a.join("scenario.json")), "--out", s(&dir.join("data"))]);
    ok(&[
        "train",
        "--teachers",
        s(&dir.join("data/teachers")),
        "--config",
        s(&a.join("config.json")),
        "--out",
        s(&dir.join("repo")),
    ]);
}

fn enrich_args<'a>(dir: &'a Path, config: &'a Path, out: &'a Path) -> Vec<String> {
    [
        "enrich",
        "--repo",
        s(&dir.join("repo")),
        "--student",
        s(&dir.join("data/students/S01.csv")),
        "--customers",
        s(&dir.join("data/students/S01_customers.csv")),
        "--config",
        s(config),
        "--out",
        s(out),
    ]
    .map(String::from)
    .to_vec()
}

fn run(args: &[String]) -> Output {
    gridfill(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn error_json(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn tiny_scenario_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = assets();
    prepare(d);
    let cfg = a.join("config.json");
    let mut args = enrich_args(d, &cfg, &d.join("enriched.csv"));
    args.extend(["--meta".into(), s(&d.join("meta.json")).into()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    ok(&[
        "validate",
        "--actual",
        s(&d.join("data/truth")),
        "--enriched",
        s(&d.join("enriched.csv")),
        "--report",
        s(&d.join("report.json")),
        "--histograms",
        s(&d.join("hist")),
    ]);
    for (loads, name) in [(d.join("enriched.csv"), "v.csv"), (d.join("data/truth"), "v_actual.csv")] {
        ok(&[
            "powerflow",
            "--feeder",
            s(&a.join("feeder.json")),
            "--loads",
            s(&loads),
            "--config",
            s(&cfg),
            "--out",
            s(&d.join(name)),
        ]);
    }
    ok(&[
        "report",
        "--validation",
        s(&d.join("report.json")),
        "--voltages",
        s(&d.join("v.csv")),
        "--reference-voltages",
        s(&d.join("v_actual.csv")),
        "--out",
        s(&d.join("summary.json")),
    ]);

    let enriched = std::fs::read_to_string(d.join("enriched.csv")).unwrap();
    assert_eq!(enriched.lines().count(), 1 + 2 * 86_400);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    assert!(summary["transformers"]["S01"]["fraction_beating_baseline"].as_f64().unwrap() > 0.5);
    assert!(summary["buses"]["v_bus2"]["wasserstein_over_iqr"].is_number());
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["S01"]["intervals"].as_array().unwrap().len(), 48);
    assert_eq!(std::fs::read_dir(d.join("hist")).unwrap().count(), 1);

    for m in ["data/run_manifest.json", "repo/run_manifest.json", "enriched.csv.manifest.json", "v.csv.manifest.json", "summary.json.manifest.json"] {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join(m)).unwrap()).unwrap();
        assert_eq!(v["version"], env!("CARGO_PKG_VERSION"), "{m}");
        assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64, "{m}");
    }
}

#[test]
fn outputs_are_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let cfg = assets().join("config.json");
    let (a, b, c) = (d.join("a.csv"), d.join("b.csv"), d.join("c.csv"));
    assert!(run(&enrich_args(d, &cfg, &a)).status.success());
    assert!(run(&enrich_args(d, &cfg, &b)).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let ma = std::fs::read_to_string(d.join("a.csv.manifest.json")).unwrap();
    let mb = std::fs::read_to_string(d.join("b.csv.manifest.json")).unwrap();
    assert_eq!(ma.replace("a.csv", "x"), mb.replace("b.csv", "x"));

    let args = enrich_args(d, &cfg, &c);
    let out = Command::new(env!("CARGO_BIN_EXE_gridfill")).args(&args).env("GRIDFILL_SEED", "9").output().unwrap();
    assert!(out.status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    let mc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("c.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(mc["seed"], 9);
}

#[test]
fn mismatched_state_count_names_both_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepare(d);
    let cfg = d.join("other.json");
    std::fs::write(&cfg, r#"{"n_states": 8, "n_levels": 4}"#).unwrap();
    let err = error_json(&run(&enrich_args(d, &cfg, &d.join("x.csv"))));
    assert_eq!(err["error"]["kind"], "config");
    let msg = err["error"]["message"].as_str().unwrap();
    assert!(msg.contains('8') && msg.contains("10"), "{msg}");
    assert!(!d.join("x.csv").exists());
}

#[test]
fn bad_inputs_report_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let err = error_json(&gridfill(&["train", "--teachers", s(&d.join("missing")), "--out", s(&d.join("repo"))]));
    assert_eq!(err["error"]["kind"], "io");

    let bad = d.join("bad.csv");
    std::fs::write(&bad, "timestamp_s,transformer_id,p_kw\n0,S01,1.0\n1,S01,oops\n").unwrap();
    let err = error_json(&gridfill(&["powerflow", "--loads", s(&bad), "--out", s(&d.join("v.csv"))]));
    assert_eq!(err["error"]["kind"], "csv");

    let err = error_json(&gridfill(&["enrich", "--repo", "r"]));
    assert_eq!(err["error"]["kind"], "usage");

    let out = Command::new(env!("CARGO_BIN_EXE_gridfill"))
        .args(["synth", "--out", s(&d.join("x"))])
        .env("GRIDFILL_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(error_json(&out)["error"]["kind"], "config");
}

#[test]
fn help_lists_every_subcommand() {
    let out = gridfill(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["synth", "train", "enrich", "validate", "powerflow", "report", "--jobs"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}
