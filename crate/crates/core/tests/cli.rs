use std::path::Path;
use std::process::{Command, Output};

use mpglab::scenario::CASE_STUDY_DOCUMENT;

fn mpglab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpglab"))
        .args(args)
        .current_dir(dir)
        .env_remove("MPGLAB_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("case.json"), CASE_STUDY_DOCUMENT).unwrap();
    std::fs::write(
        dir.path().join("cycle.json"),
        r#"{"schema":"mpg-v1","nodes":[
            {"id":"pue","layer":2,"domain":1},{"id":"cost","layer":6,"domain":3}],
          "edges":[{"src":"pue","dst":"cost","op":{"kind":"linear","alpha":0.5}},
                   {"src":"cost","dst":"pue","op":{"kind":"linear","alpha":0.5}}]}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("loop.json"),
        r#"{"schema":"mpg-v1","allow_intra_layer_cycles":[4],"nodes":[
            {"id":"x","layer":4,"domain":1,"init":1},{"id":"y","layer":4,"domain":2,"init":1}],
          "edges":[{"src":"x","dst":"y","op":{"kind":"linear","alpha":1.2}},
                   {"src":"y","dst":"x","op":{"kind":"linear","alpha":1.0}}]}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("scn.json"),
        r#"{"schema":"scn-v1","graph":"case.json","horizon":10,"shocks":[{"t":0,"node":"ci","delta":0.2}]}"#,
    )
    .unwrap();
    dir
}

#[test]
fn eval_pue_prints_symbol_and_value() {
    let dir = workspace();
    let o = mpglab(&["eval", "pue", "--bind", "E_total=1.56MWh", "--bind", "E_IT=1.0MWh"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "PUE = 1.56\n");
}

#[test]
fn eval_with_units() {
    let dir = workspace();
    let o = mpglab(&["eval", "wue", "--bind", "V_water=1800L", "--bind", "E_IT=1MWh"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "WUE = 1.8 L/kWh\n");
}

#[test]
fn hard_range_violation_exits_one() {
    let dir = workspace();
    let o = mpglab(&["eval", "erf", "--bind", "E_reuse=2MWh", "--bind", "E_total=1MWh"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn validate_reports_cycle_path() {
    let dir = workspace();
    let o = mpglab(&["validate", "cycle.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("pue -> cost -> pue"), "{}", stderr(&o));
    let o = mpglab(&["validate", "case.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "ok: 5 nodes, 4 edges\n");
}

#[test]
fn unknown_operator_is_a_parse_error() {
    let dir = workspace();
    let text = CASE_STUDY_DOCUMENT.replacen("\"linear\"", "\"quadratic\"", 1);
    std::fs::write(dir.path().join("bad.json"), text).unwrap();
    let o = mpglab(&["validate", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("quadratic"));
}

#[test]
fn case_study_command() {
    let dir = workspace();
    let o = mpglab(&["case-study", "--csv", "out.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("rho(W) = 0 (stable)"));
    assert!(out.contains("composite ci -> cost_per_1k_tokens = 0.00756"));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert!(csv.ends_with("10,0.2,0.03,0.0021,0.00168,0.001512\n"));
}

#[test]
fn propagate_matches_case_study_csv() {
    let dir = workspace();
    let a = mpglab(&["propagate", "scn.json", "--csv", "-"], dir.path());
    let b = mpglab(&["case-study", "--csv", "-"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn analyze_and_compose() {
    let dir = workspace();
    let o = mpglab(&["analyze", "loop.json", "--stability"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "rho = 1.09544511501\nclassification: divergent\n");
    let o = mpglab(&["analyze", "case.json", "--bottlenecks"], dir.path());
    assert!(stdout(&o).lines().nth(1).unwrap().contains("cost_per_1k_tokens"));
    let o = mpglab(&["compose", "case.json", "--from", "ci", "--to", "cost_per_1k_tokens"], dir.path());
    assert!(stdout(&o).starts_with("ci -> cost_per_1k_tokens: coefficient 0.00756 over 1 path(s)"));
    let o = mpglab(&["compose", "case.json", "--from", "cost_per_1k_tokens", "--to", "ci"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn divergent_propagation_flags_overflow() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("div.json"),
        r#"{"schema":"scn-v1","graph":"loop.json","horizon":1000}"#,
    )
    .unwrap();
    let o = mpglab(&["propagate", "div.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("overflow at t="));
}

#[test]
fn topology_metrics() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("topo.json"),
        r#"{"schema":"topo-v1","unit":"GB/s","nodes":["a","b","c","d"],
          "links":[{"a":"a","b":"b","bw":100},{"a":"b","b":"c","bw":100},
                   {"a":"c","b":"d","bw":100},{"a":"d","b":"a","bw":100}],
          "gpu_aggregate_bw":800,"switch_uplink_bw":200}"#,
    )
    .unwrap();
    let run = |m| stdout(&mpglab(&["topo", "topo.json", "--metric", m], dir.path()));
    assert_eq!(run("diameter"), "diameter = 2 hops\n");
    assert_eq!(run("ibb"), "IBB = 200 GB/s\n");
    assert_eq!(run("bbb"), "BBB = 200 GB/s\n");
    assert_eq!(run("osr"), "OSR = 4\n");
}

#[test]
fn seed_variable_must_be_numeric() {
    let dir = workspace();
    let o = Command::new(env!("CARGO_BIN_EXE_mpglab"))
        .args(["propagate", "scn.json"])
        .current_dir(dir.path())
        .env("MPGLAB_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
