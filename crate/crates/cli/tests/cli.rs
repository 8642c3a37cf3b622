use std::path::Path;
use std::process::{Command, Output};

fn ideal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ideal")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = ideal(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_flag_is_usage_error() {
    let o = ideal(&["gen-data"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dispatch_with_missing_model_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(ideal(&["gen-world", "--rows", "4", "--cols", "4", "--out-dir", out]).status.success());
    let network = dir.path().join("network.json");
    let missing = dir.path().join("no-such-model.json");
    let o = ideal(&[
        "dispatch",
        "--network",
        network.to_str().unwrap(),
        "--model",
        missing.to_str().unwrap(),
        "--radius",
        missing.to_str().unwrap(),
        "--context-json",
        "[]",
        "--depot",
        "n1_1",
        "--depot",
        "n2_2",
        "--dest",
        "n0_3",
        "--out-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no-such-model.json"), "{}", stderr(&o));
}

fn run_ok(args: &[&str]) {
    let o = ideal(args);
    assert!(o.status.success(), "{args:?}: {}", stderr(&o));
}

#[test]
fn pipeline_writes_outputs_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    let out = p("");
    let g = ["--seed", "5", "--out-dir", out.as_str()];
    let with = |a: &[&str]| a.iter().chain(g.iter()).copied().map(String::from).collect::<Vec<_>>();
    let run = |a: &[&str]| {
        let v = with(a);
        run_ok(&v.iter().map(String::as_str).collect::<Vec<_>>());
    };
    run(&["gen-world", "--rows", "5", "--cols", "5"]);
    run(&["gen-data", "--world", &p("world.json"), "--n", "60"]);
    run(&["train", "--network", &p("network.json"), "--samples", &p("samples.jsonl"), "--iterations", "10"]);
    run(&["radius-targets", "--network", &p("network.json"), "--samples", &p("samples.jsonl"), "--model", &p("model.json")]);
    run(&["fit-radius", "--model", &p("model.json"), "--samples", &p("samples.jsonl"), "--targets", &p("targets.jsonl"), "--epochs", "50"]);
    run(&["replay", "--world", &p("world.json"), "--model", &p("model.json"), "--radius", &p("radius.json"), "--n", "20"]);
    run(&["sweep", "--records", &p("records.jsonl")]);

    let ctx: Vec<f64> = {
        let first = std::fs::read_to_string(p("samples.jsonl")).unwrap();
        let v: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
        serde_json::from_value(v["context"].clone()).unwrap()
    };
    let ctx_path = p("context.json");
    std::fs::write(&ctx_path, serde_json::to_string(&ctx).unwrap()).unwrap();
    run(&[
        "dispatch",
        "--network",
        &p("network.json"),
        "--model",
        &p("model.json"),
        "--radius",
        &p("radius.json"),
        "--context-json",
        &ctx_path,
        "--depot",
        "n1_1",
        "--depot",
        "n3_3",
        "--dest",
        "n0_4",
        "--C",
        "10",
        "--risk-curve",
        "exp:1:900",
    ]);

    let decision: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("decision.json")).unwrap()).unwrap();
    for key in ["tau", "z1_edges", "z2_edges", "gap_s", "thr_s", "rho", "t_nominal_s"] {
        assert!(decision.get(key).is_some(), "decision.json lacks {key}");
    }
    let header = std::fs::read_to_string(p("metrics.csv")).unwrap();
    assert!(header.starts_with("strategy,thr,a_bar,mean,p95,p99,cvar95,cvar99,cand_opt_rate\n"));
    let wil = std::fs::read_to_string(p("wilcoxon.csv")).unwrap();
    assert!(wil.starts_with("baseline,n,n_nonzero,mean_diff,ci_lo,ci_hi,W,p\n"));
    let target: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(p("targets.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    for key in ["i", "rho", "h_hat", "t"] {
        assert!(target.get(key).is_some());
    }
    for cmd in ["gen-world", "gen-data", "train", "radius-targets", "fit-radius", "replay", "sweep", "dispatch"] {
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(Path::new(&out).join(format!("manifest-{cmd}.json"))).unwrap()).unwrap();
        assert_eq!(m["seed"], 5);
        assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
        assert!(!m["outputs"].as_array().unwrap().is_empty());
    }

    let report = ideal(&["report", "--dir", &out]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("ideal_dual"));
}

#[test]
fn selftest_subset_passes() {
    let o = ideal(&["selftest", "--only", "2,9,11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
