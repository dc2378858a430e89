use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

struct Run {
    code: i32,
    stderr: String,
    dir: PathBuf,
}

fn holgen(command: &str, config: &str, work: &Path, extra: &[&str]) -> Run {
    let cfg = work.join(format!("{command}.json"));
    std::fs::write(&cfg, config).unwrap();
    let dir = work.join(format!("out-{command}-{}", extra.join("_").replace(['-', '/'], "")));
    let out: Output = Command::new(env!("CARGO_BIN_EXE_holgen"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .args(extra)
        .output()
        .unwrap();
    Run { code: out.status.code().unwrap(), stderr: String::from_utf8_lossy(&out.stderr).into_owned(), dir }
}

fn report(run: &Run) -> Value {
    serde_json::from_slice(&std::fs::read(run.dir.join("report.json")).unwrap()).unwrap()
}

const DELTA: &str = r#"{
  "version": 1,
  "objects": {"delta": {"kind": "classical", "object": {"kind": "delta"}}},
  "params": {"object": "delta"}
}"#;

#[test]
fn embed_delta_reports_closed_form_and_norm_table() {
    let work = tempfile::tempdir().unwrap();
    let run = holgen("embed", DELTA, work.path(), &["--budget", "500"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = report(&run);
    assert_eq!(r["result"]["representative"], "1/pi*zeta/(zeta^2 + z1^2)");
    assert_eq!(r["provenance"]["grid"]["budget"], 500);
    assert_eq!(r["provenance"]["config_sha256"].as_str().unwrap().len(), 64);
    let table = std::fs::read_to_string(run.dir.join("norms.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "n,estimate,coarse_estimate,stable,points");
    assert_eq!(lines.count(), 3);
    assert!(run.dir.join("meta.json").exists());
}

#[test]
fn malformed_expression_is_a_config_error_with_position() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "objects": {"f": {"kind": "expr", "src": "zeta^2 + * z", "n": 2}}, "params": {"object": "f"}}"#;
    let run = holgen("norm", cfg, work.path(), &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("column 10"), "{}", run.stderr);
}

#[test]
fn heaviside_needs_one_sided_family() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1,
      "objects": {"h": {"kind": "classical", "object": {"kind": "constant_at_infinity", "c_minus": 0.0, "c_plus": 1.0}}},
      "params": {"object": "h"}}"#;
    let run = holgen("embed", cfg, work.path(), &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("one-sided"), "{}", run.stderr);
}

#[test]
fn json_syntax_errors_carry_line_numbers() {
    let work = tempfile::tempdir().unwrap();
    let run = holgen("norm", "{\n  \"version\": 1,\n  \"seed\": ,\n}", work.path(), &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains(":3:"), "{}", run.stderr);
}

#[test]
fn unknown_command_is_a_usage_error() {
    let work = tempfile::tempdir().unwrap();
    let run = holgen("frobnicate", DELTA, work.path(), &[]);
    assert_eq!(run.code, 2);
}

#[test]
fn numeric_failures_exit_three() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "objects": {"f": {"kind": "expr", "src": "log(zeta)", "n": 2}}, "params": {"object": "f", "x": [5.0]}}"#;
    let run = holgen("laurent", cfg, work.path(), &[]);
    assert_eq!(run.code, 3, "{}", run.stderr);
}

#[test]
fn associate_on_delta_squared_is_divergent_of_order_one() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1,
      "objects": {"d": {"kind": "classical", "object": {"kind": "delta"}}, "d2": {"kind": "product", "of": ["d", "d"]}},
      "params": {"object": "d2", "expect": "divergent"}}"#;
    let run = holgen("associate", cfg, work.path(), &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = &report(&run)["result"]["verdict"];
    assert_eq!(v["verdict"], "divergent");
    assert!((v["order"].as_f64().unwrap() - 1.0).abs() < 0.02);
    let cfg = cfg.replace("divergent", "converged");
    assert_eq!(holgen("associate", &cfg, work.path(), &["--seed", "1"]).code, 4);
}

#[test]
fn psi_on_powers_emits_q0_table() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "seed": 8, "grid": {"budget": 2000, "floor": 1e-8},
      "params": {"space": {"n": 2}, "generate": {"template": "zeta^{p}", "from": 1, "to": 12}, "limit": "zero"}}"#;
    let run = holgen("psi", cfg, work.path(), &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let mut rdr = csv::Reader::from_path(run.dir.join("q0.csv")).unwrap();
    let q0: Vec<usize> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    // smallest p with (1/3)^{3+p} ≤ ε
    let oracle: Vec<usize> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|eps: &f64| (1..).find(|&p| (1.0f64 / 3.0).powi(3 + p) <= *eps).unwrap() as usize)
        .collect();
    assert_eq!(q0, oracle);
    let nu = std::fs::read_to_string(run.dir.join("nu.csv")).unwrap();
    assert!(nu.starts_with("r,nu\n"));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "seed": 3, "grid": {"budget": 400, "floor": 1e-6},
      "objects": {"b": {"kind": "classical", "object": {"kind": "continuous_compact", "f": {"type": "bump", "center": 0.0, "radius": 1.0, "scale": 1.0}}}},
      "params": {"object": "b"}}"#;
    let a = holgen("embed", cfg, work.path(), &[]);
    let b = holgen("embed", cfg, work.path(), &["--seed", "3"]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    for f in ["report.json", "norms.csv"] {
        assert_eq!(std::fs::read(a.dir.join(f)).unwrap(), std::fs::read(b.dir.join(f)).unwrap(), "{f}");
    }
    let c = holgen("embed", cfg, work.path(), &["--seed", "4"]);
    assert_eq!(report(&c)["provenance"]["seed"], 4);
}

#[test]
fn nulltest_assertions_drive_exit_status() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1,
      "objects": {
        "d": {"kind": "classical", "object": {"kind": "delta"}},
        "closed": {"kind": "expr", "src": "zeta/(pi*(z^2+zeta^2))", "n": 2},
        "eps": {"kind": "expr", "src": "zeta", "n": 2},
        "diff": {"kind": "linear", "terms": [[1, "d"], [-1, "closed"]]},
        "perturbed": {"kind": "linear", "terms": [[1, "diff"], ["1/1000", "eps"]]}
      },
      "params": {"object": "OBJ", "probes": [[3.0], [-4.5]], "expect": "zero"}}"#;
    let ok = holgen("nulltest", &cfg.replace("OBJ", "diff"), work.path(), &[]);
    assert_eq!(ok.code, 0, "{}", ok.stderr);
    assert_eq!(report(&ok)["result"]["verdict"]["verdict"], "zero");
    let bad = holgen("nulltest", &cfg.replace("OBJ", "perturbed"), work.path(), &["--seed", "1"]);
    assert_eq!(bad.code, 4, "{}", bad.stderr);
    assert_eq!(report(&bad)["result"]["verdict"]["witness"]["j"], 1);
}

#[test]
fn hull_accepts_rational_weights() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1,
      "objects": {"a": {"kind": "expr", "src": "zeta", "n": 1}, "b": {"kind": "expr", "src": "z + 1", "n": 1},
                  "c": {"kind": "expr", "src": "zeta^2", "n": 1}},
      "params": {"generators": ["a", "b"], "weights": ["1/2", "-1/4"],
                 "product": {"generators": ["c", "a"], "weights": ["1/3", 0.5]},
                 "probes": [{"x": [0.5], "xi": 0.1}, {"x": [-2.0], "xi": 0.01}]}}"#;
    let run = holgen("hull", cfg, work.path(), &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let r = report(&run);
    assert_eq!(r["result"]["hull"]["mass"], 0.75);
    // 0.5·0.1 − 0.25·1.5
    let v = r["result"]["hull"]["values"][0][0].as_f64().unwrap();
    assert!((v - (0.05 - 0.375)).abs() < 1e-15);
    assert!(r["result"]["product_error"].as_f64().unwrap() < 1e-15);
    let heavy = cfg.replace("\"-1/4\"", "\"3/4\"");
    assert_eq!(holgen("hull", &heavy, work.path(), &["--seed", "2"]).code, 4);
    let broken = cfg.replace("\"-1/4\"", "\"1/0\"");
    assert_eq!(holgen("hull", &broken, work.path(), &["--seed", "3"]).code, 2);
}

#[test]
fn table_objects_load_csv_samples() {
    let work = tempfile::tempdir().unwrap();
    std::fs::write(work.path().join("tri.csv"), "lambda,f\n-1,0\n0,1\n1,0\n").unwrap();
    // ∫(1 − |x|)e^{−x²} over [−1, 1] by composite Simpson
    let n = 20_000;
    let h = 2.0 / n as f64;
    let limit: f64 = (0..=n)
        .map(|i| {
            let x = -1.0 + h * i as f64;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            w * (1.0 - x.abs()) * (-x * x).exp()
        })
        .sum::<f64>()
        * h
        / 3.0;
    let cfg = format!(
        r#"{{"version": 1, "objects": {{"t": {{"kind": "table", "csv": "tri.csv"}}}},
      "params": {{"object": "t", "expect": "converged", "limit": {limit}}}}}"#
    );
    let run = holgen("associate", &cfg, work.path(), &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
}

#[test]
fn chain_and_sharp_commands_run() {
    let work = tempfile::tempdir().unwrap();
    let cfg = r#"{"version": 1, "seed": 4,
      "family": {"kind": "at_infinity", "side": "plus", "omega": {"type": "full", "dim": 1}},
      "grid": {"budget": 400, "floor": 1e-6},
      "objects": {"a": {"kind": "expr", "src": "zeta", "n": 1}, "b": {"kind": "expr", "src": "zeta^(-1)", "n": 1}},
      "params": {"base": {"n": 1}, "steps": 2, "corpus": ["a", "b"]}}"#;
    let run = holgen("chain", cfg, work.path(), &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(report(&run)["result"]["certificates"]["passed"], true);

    let cfg = r#"{"version": 1,
      "objects": {"d": {"kind": "classical", "object": {"kind": "delta"}}, "s": {"kind": "linear", "terms": [["1/100", "d"]]}},
      "params": {"object": "s", "k": {"lo": [-1.0], "hi": [1.0]}, "p": 0, "q": 1, "expect": "fail"}}"#;
    let run = holgen("sharp", cfg, work.path(), &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(report(&run)["result"]["verdict"]["verdict"], "fail");
}
