use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fomc-absa"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_and_help_exit_zero() {
    let v = cli(&["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
    let h = cli(&["--help"]);
    assert_eq!(h.status.code(), Some(0));
    let help = String::from_utf8_lossy(&h.stdout);
    for sub in ["ingest", "embed", "aspects", "sentiment", "series", "regress", "stats", "compare-pooling", "run-all"] {
        assert!(help.contains(sub), "help lacks {sub}");
    }
}

#[test]
fn missing_upstream_exits_2_naming_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cli(&["--output-dir", s(tmp.path()), "--backend", "stub", "embed"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sentences.jsonl"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    // no corpus configured
    assert_eq!(cli(&["--output-dir", out, "ingest"]).status.code(), Some(1));
    // unknown backend
    assert_eq!(cli(&["--output-dir", out, "--backend", "gpu", "ingest"]).status.code(), Some(1));
    // unreadable config file
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"not_a_field\": 1}").unwrap();
    assert_eq!(cli(&["--config", s(&bad), "ingest"]).status.code(), Some(1));
    // model mode without model paths
    let corpus = fixtures().join("corpus");
    assert_eq!(cli(&["--corpus-dir", s(&corpus), "--output-dir", out, "ingest"]).status.code(), Some(0));
    let o = cli(&["--output-dir", out, "embed"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("encoder_path"), "{}", stderr(&o));
}

#[test]
fn individual_stages_equal_run_all() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = fixtures().join("run_all.json");
    let o = cli(&["--config", s(&config), "--output-dir", s(a.path()), "run-all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for stage in ["ingest", "embed", "aspects", "sentiment", "series", "stats", "regress"] {
        let o = cli(&["--config", s(&config), "--output-dir", s(b.path()), stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    for f in ["sentences.jsonl", "embeddings.jsonl", "aspects.jsonl", "predictions.jsonl", "series.csv", "stats.json", "regression.json"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn flags_override_config_and_regress_takes_explicit_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixtures().join("run_all.json");
    let out = s(tmp.path());
    let o = cli(&["--config", s(&config), "--output-dir", out, "--workers", "3", "--seed", "11", "run-all"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let series = tmp.path().join("series.csv");
    let gdp = fixtures().join("gdp_growth.csv");
    let o = cli(&[
        "--output-dir", out, "--plot", "regress", "--series", s(&series), "--macro", s(&gdp),
        "--indicator", "gdp_growth", "--aspect", "inflation", "--lead", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("regression.json")).unwrap()).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 1);
    assert_eq!(report[0]["aspect"], "inflation");
    assert_eq!(report[0]["lead"], 1);
    assert!(tmp.path().join("regression_gdp_growth_inflation.svg").is_file());
    let table = std::fs::read_to_string(tmp.path().join("regression.txt")).unwrap();
    assert!(table.contains("gdp_growth"));

    // partial explicit inputs are a configuration error
    let o = cli(&["--output-dir", out, "regress", "--indicator", "gdp_growth"]);
    assert_eq!(o.status.code(), Some(1));
    // a missing series file is a missing artifact
    let o = cli(&["--output-dir", out, "regress", "--series", s(&tmp.path().join("none.csv"))]);
    assert_eq!(o.status.code(), Some(2));
}
