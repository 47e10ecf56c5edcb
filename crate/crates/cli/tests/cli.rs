use std::fs;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maseptide"))
        .args(args)
        .output()
        .expect("run maseptide")
}

const CASCADE: &str = "time,magnitude\n0,3618\n2,42\n5,900\n9,12\n30,150\n31,7\n64,2000\n100,33\n250,410\n600,9\n1500,77\n4000,5\n";

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["fit"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.csv");
    fs::write(&file, CASCADE).unwrap();
    let o = run(&["predict", file.to_str().unwrap(), "--method", "median"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["fit", file.to_str().unwrap(), "--horizon-days", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_1() {
    let o = run(&["fit", "/nonexistent/cascade.csv"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_gof_predict_on_one_cascade() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.csv");
    fs::write(&file, CASCADE).unwrap();
    let f = file.to_str().unwrap();

    let o = run(&["fit", f, "--censor-hours", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows[0]["n_observed"], 11);
    assert!(rows[0]["alpha"].as_f64().unwrap() > 0.0);

    let out = dir.path().join("gof.csv");
    let o = run(&["gof", f, "--params", "5.711,0.024,1.455,1.254,0.173", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("T_hours,n_observed,ks_statistic,p_value,residuals"));

    let out = dir.path().join("pred.json");
    let o = run(&[
        "predict", f, "--censor-hours", "0.5", "--method", "eq", "--method", "sim-mean", "--nsim", "20", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["n_pred"].as_f64().unwrap() >= r["n_observed"].as_f64().unwrap());
    }
}

#[test]
fn simulate_then_evaluate_json() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = run(&["simulate", "--corpus", corpus.to_str().unwrap(), "--count", "4", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(corpus.join("index.csv").is_file());

    let out = dir.path().join("eval.json");
    let o = run(&[
        "evaluate",
        corpus.to_str().unwrap(),
        "--censor-hours",
        "1",
        "--method",
        "eq",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(recs.as_array().unwrap().len(), 4);
    let keys: Vec<_> = recs[0].as_object().unwrap().keys().cloned().collect();
    for k in ["id", "T_hours", "method", "n_observed", "n_true", "n_pred", "ape", "se", "ae", "fail_code"] {
        assert!(keys.iter().any(|x| x == k), "missing {k}");
    }
    assert!(dir.path().join("eval.summary.json").is_file());
}
