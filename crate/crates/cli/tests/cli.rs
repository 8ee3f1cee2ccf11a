use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rwalk::graph::Graph;
use rwalk::model::Dataset;
use rwalk::transition::RowStochasticMatrix;
use tempfile::TempDir;

fn rwalk(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rwalk"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("RWALK_THREADS", t),
        None => cmd.env_remove("RWALK_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.display().to_string()
}

const SMALL: &str = r#"{
  "graph": {"type": "ring", "n": 30},
  "data": {"d": 3, "sigma_l_sq": 1.0, "sigma_h_sq": 100.0, "p_high": 0.0, "min_heavy": 1, "seed": 4},
  "algo": {"sampler_kind": ["uniform-mh", "is-mh", "mhlj"], "gamma": "auto-grid", "T": 5000,
           "p_j": 0.1, "p_d": 0.5, "r": 3, "seed": 4},
  "output": {"csv": "trace.csv", "log_every": 10}
}"#;

fn run_in(dir: &TempDir, json: &str, sub: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir.path(), json);
    let out = dir.path().join("out").display().to_string();
    let mut args = vec![sub, "--config", cfg.as_str(), "--out", out.as_str()];
    args.extend_from_slice(extra);
    rwalk(&args, None)
}

#[test]
fn run_writes_one_trace_per_sampler() {
    let dir = TempDir::new().unwrap();
    let o = run_in(&dir, SMALL, "run", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for kind in ["uniform-mh", "is-mh", "mhlj"] {
        let text = fs::read_to_string(dir.path().join(format!("out/trace-{kind}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# format=rwalk-trace v1"));
        let echo = lines.next().unwrap();
        assert!(echo.starts_with("# config={"));
        assert!(!echo.contains("auto-grid"), "gamma is echoed resolved");
        assert!(lines.next().unwrap().starts_with(&format!("# sampler={kind} gamma=")));
        assert_eq!(lines.next(), Some("iter,node,mse,dist_sq,comm_count"));
        assert_eq!(lines.count(), 500);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["format"], "rwalk-summary v1");
    assert_eq!(summary["runs"].as_array().unwrap().len(), 3);
    let mhlj = &summary["runs"][2];
    for key in ["final_mse", "final_dist_sq", "comm_count", "comm_per_update", "heavy_share", "max_dwell"] {
        assert!(!mhlj[key].is_null(), "{key}");
    }
}

#[test]
fn run_is_byte_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert!(run_in(&a, SMALL, "run", &[]).status.success());
    assert!(run_in(&b, SMALL, "run", &[]).status.success());
    for f in ["trace-uniform-mh.csv", "trace-is-mh.csv", "trace-mhlj.csv", "summary.json"] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn config_errors_exit_two_without_output() {
    let cases = [
        SMALL.replace(r#""T": 5000,"#, ""),
        SMALL.replace(r#""seed": 4},"#, r#""seed": 4, "colour": 1},"#),
        SMALL.replace(r#""auto-grid""#, r#""auto""#),
        SMALL.replace(r#""r": 3, "#, ""),
        SMALL.replace(r#""type": "ring""#, r#""type": "torus""#),
        "{ not json".to_string(),
    ];
    for (i, json) in cases.iter().enumerate() {
        let dir = TempDir::new().unwrap();
        let o = run_in(&dir, json, "run", &[]);
        assert_eq!(o.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!dir.path().join("out").exists(), "case {i} wrote output");
    }
}

#[test]
fn divergence_has_its_own_exit_code() {
    let dir = TempDir::new().unwrap();
    let json = SMALL.replace(r#""auto-grid""#, "4.0");
    let o = run_in(&dir, &json, "run", &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn matrix_dumps_parse_back() {
    let dir = TempDir::new().unwrap();
    let o = run_in(&dir, SMALL, "matrix", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let g = Graph::parse_edge_list(&fs::read_to_string(out.join("graph.edges")).unwrap()).unwrap();
    assert_eq!(g, Graph::ring(30).unwrap());
    let ds = Dataset::parse(&fs::read_to_string(out.join("dataset.txt")).unwrap()).unwrap();
    assert_eq!(ds.n(), 30);
    for name in ["mh_uniform", "mh_importance", "levy", "mix"] {
        let text = fs::read_to_string(out.join(format!("{name}.triplets"))).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("# format="));
        let p = RowStochasticMatrix::parse_triplets(&text).unwrap();
        assert_eq!(p.n(), 30);
    }
    let st = fs::read_to_string(out.join("stationary_mh_importance.csv")).unwrap();
    let rows: Vec<(f64, f64)> = st
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("node"))
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect();
    assert_eq!(rows.len(), 30);
    let tv: f64 = rows.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv < 1e-10);
}

fn diagnose_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .parse()
        .unwrap()
}

#[test]
fn diagnose_reports_the_jump_trade_off() {
    let dir = TempDir::new().unwrap();
    let json = SMALL.replace(r#""n": 30"#, r#""n": 50"#);
    let o = run_in(&dir, &json, "diagnose", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("out/diagnose.txt")).unwrap();
    assert!(text.starts_with("# format=rwalk-diagnose v1\n# config="));
    assert!(diagnose_value(&text, "tau_mix_mix") <= diagnose_value(&text, "tau_mix_is"));
    assert!(diagnose_value(&text, "residual_is") < 1e-13);
    assert!(diagnose_value(&text, "residual_mix") > 1e-6);
    assert!(diagnose_value(&text, "error_gap_estimate") > 0.0);

    let dir = TempDir::new().unwrap();
    let o = run_in(&dir, &SMALL.replace(r#""p_j": 0.1"#, r#""p_j": 0.0"#), "diagnose", &[]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(diagnose_value(&text, "error_gap_estimate"), 0.0);
    assert!(diagnose_value(&text, "tv_mix_to_target") < 1e-10);
}

const SWEEP: &str = r#"{
  "graph": {"type": "ring", "n": 30},
  "data": {"d": 3, "sigma_l_sq": 1.0, "sigma_h_sq": 100.0, "p_high": 0.0, "min_heavy": 1, "seed": 4},
  "algo": {"sampler_kind": "mhlj", "gamma": 0.005, "T": 3000, "p_j": 0.1, "p_d": 0.5, "r": 3, "seed": 4},
  "output": {"csv": "trace.csv", "log_every": 100}
}"#;

#[test]
fn sweep_counts_rows_and_ignores_worker_count() {
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let dir = TempDir::new().unwrap();
        let cfg = write_config(dir.path(), SWEEP);
        let out = dir.path().join("out").display().to_string();
        let o = rwalk(
            &["sweep", "--config", &cfg, "--out", &out, "--replicas", "5", "--sweep", "p_j=0.4,0.2,0.1,0.05"],
            Some(threads),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(dir.path().join("out/sweep.csv")).unwrap());
    }
    assert!(outputs[0] == outputs[1]);
    let text = String::from_utf8(outputs.pop().unwrap()).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 20);
    let header_cols = text.lines().find(|l| l.starts_with("value,")).unwrap().split(',').count();
    assert!(rows.iter().all(|r| r.split(',').count() == header_cols));
    let keys: Vec<(f64, u64)> = rows
        .iter()
        .map(|r| {
            let f: Vec<&str> = r.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn sweep_rejects_empty_values_and_unknown_parameters() {
    for spec in ["p_j=", "colour=1,2", "p_j"] {
        let dir = TempDir::new().unwrap();
        let o = run_in(&dir, SWEEP, "sweep", &["--sweep", spec]);
        assert_eq!(o.status.code(), Some(2), "{spec}");
    }
}

#[test]
fn sweep_records_divergence() {
    let dir = TempDir::new().unwrap();
    let o = run_in(&dir, SWEEP, "sweep", &["--sweep", "gamma=0.005,8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("8,0,mhlj,"));
    assert!(!last.ends_with(','), "diverged_at is filled");
}
