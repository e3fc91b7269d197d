use std::path::Path;
use std::process::{Command, Output};

fn mghs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mghs")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mghs(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_emits_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, fit, sel, met, diag) = (
        tmp.path().join("data"),
        tmp.path().join("fit"),
        tmp.path().join("sel"),
        tmp.path().join("met"),
        tmp.path().join("diag"),
    );
    ok(&["simulate", "--scenario", "coupled", "--p", "20", "--n", "50", "--seed", "3", "--out-dir", s(&data)]);
    for f in ["group_1.csv", "group_4.csv", "truth.json", "manifest.json", "config.toml"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    ok(&["fit", s(&data), "--chains", "2", "--burnin", "100", "--iters", "200", "--thin", "2", "--seed", "3", "--out-dir", s(&fit)]);
    for f in ["posterior.json", "manifest.json", "chain_0/trace.csv", "chain_1/kappa.csv", "chain_1/summary.json", "chain_0/selection.json"] {
        assert!(fit.join(f).is_file(), "{f}");
    }
    ok(&["select", "--fit-dir", s(&fit), "--select-mode", "mpm", "--out-dir", s(&sel)]);
    let adj = std::fs::read_to_string(sel.join("adjacency.csv")).unwrap();
    assert_eq!(adj.lines().count(), 1 + 4 * 190);

    let stdout = ok(&["metrics", "--fit-dir", s(&fit), "--truth", s(&data.join("truth.json")), "--out-dir", s(&met)]);
    assert!(stdout.contains("mghs_mpm") && stdout.contains("mghs_cut"));
    let rows = std::fs::read_to_string(met.join("metrics.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);

    ok(&["diagnose", "--fit-dir", s(&fit), "--out-dir", s(&diag)]);
    let d: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(diag.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(d["chains"], 2);
    assert_eq!(d["draws"], 100);
}

#[test]
fn manifest_config_replays_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, a, b) = (tmp.path().join("data"), tmp.path().join("a"), tmp.path().join("b"));
    ok(&["simulate", "--groups", "2", "--p", "10", "--n", "30", "--seed", "5", "--out-dir", s(&data)]);
    ok(&["fit", s(&data), "--burnin", "50", "--iters", "100", "--seed", "11", "--out-dir", s(&a)]);
    // replay from the echoed configuration, pointed at a new directory
    ok(&["fit", s(&data), "--config", s(&a.join("config.toml")), "--out-dir", s(&b)]);
    for f in ["posterior.json", "chain_0/trace.csv", "chain_0/kappa.csv", "chain_0/selection.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "fit");
    assert_eq!(m["config"]["seed"], 11);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn effective_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["simulate", "--p", "10", "--n", "10", "--groups", "2", "--scenario", "p2020", "--a", "12", "--select-mode", "mpm", "--out-dir", s(&a)]);
    let first = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(first.contains("a = 12.0") && first.contains("b = 25.0"));
    ok(&["simulate", "--config", s(&a.join("config.toml")), "--out-dir", s(&b)]);
    let second = std::fs::read_to_string(b.join("config.toml")).unwrap();
    assert_eq!(first.replace(s(&a), ""), second.replace(s(&b), ""));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = mghs(&["fit", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_have_distinct_statuses() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = tmp.path().join("u.toml");
    std::fs::write(&unknown, "seeed = 1\n").unwrap();
    let typed = tmp.path().join("t.toml");
    std::fs::write(&typed, "seed = \"x\"\n").unwrap();
    let codes: Vec<Option<i32>> = [
        mghs(&["g3p-check", "--config", s(&unknown)]),
        mghs(&["g3p-check", "--config", s(&typed)]),
        mghs(&["fit", s(&tmp.path().join("missing.csv"))]),
        mghs(&["g3p-check", "--config", s(&tmp.path().join("missing.toml"))]),
    ]
    .iter()
    .map(|o| o.status.code())
    .collect();
    assert_eq!(codes, [Some(3), Some(4), Some(5), Some(5)]);
    let msg = String::from_utf8_lossy(&mghs(&["g3p-check", "--config", s(&unknown)]).stderr).into_owned();
    assert!(msg.contains("seeed"), "{msg}");
}

#[test]
fn parse_errors_name_row_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("g.csv");
    std::fs::write(&f, "x,y,z\n1,2,3\n4,oops,6\n").unwrap();
    let out = mghs(&["fit", s(&f), "--out-dir", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(msg.contains("row 3, column 2"), "{msg}");
}

#[test]
fn single_group_runs_in_ghs_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, fit) = (tmp.path().join("data"), tmp.path().join("fit"));
    ok(&["simulate", "--scenario", "independent", "--groups", "1", "--p", "10", "--n", "40", "--out-dir", s(&data)]);
    let stdout = ok(&["fit", s(&data.join("group_1.csv")), "--burnin", "20", "--iters", "40", "--out-dir", s(&fit)]);
    assert!(stdout.contains("graphical horseshoe mode"));
    let post: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit.join("posterior.json")).unwrap()).unwrap();
    assert_eq!(post["model"], "ghs");
    assert_eq!(post["k"], 1);
}

#[test]
fn g3p_check_reports_kl_spot_values() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&["g3p-check", "--draws", "2000", "--out-dir", s(tmp.path())]);
    assert!(stdout.contains("PASS KL γ=1 β/α=0.002"), "{stdout}");
    assert!(stdout.contains("PASS KL γ=100 β/α=8"), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
}
