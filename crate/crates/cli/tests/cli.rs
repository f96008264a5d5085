//! End-to-end tests running the compiled binary. Each test drives one
//! contract promise: exit codes, schema versioning, determinism, and
//! agreement with the library on shared computations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TRIANGLE_CHAIN: &str = r#"{
  "states": ["a", "b", "c"],
  "kernel": [
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0]
  ]
}"#;

const PATH_CHAIN: &str = r#"{
  "kernel": [
    [0.5, 0.5, 0.0, 0.0],
    [0.5, 0.0, 0.5, 0.0],
    [0.0, 0.5, 0.0, 0.5],
    [0.0, 0.0, 0.5, 0.5]
  ]
}"#;

const RHO0: &str = "[1.8, 0.9, 0.3]";
const RHO1: &str = "[0.3, 0.9, 1.8]";

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entroflow"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout should be a JSON document")
}

#[test]
fn validate_reports_stationary_distribution() {
    let dir = tempfile::tempdir().unwrap();
    // Reversible birth-death kernel with pi = (0.6, 0.4).
    let chain = write(
        dir.path(),
        "chain.json",
        r#"{"kernel": [[0.6, 0.4], [0.6, 0.4]]}"#,
    );
    let out = run(&["validate", chain.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let doc = stdout_json(&out);
    assert_eq!(doc["schema"], "entroflow/validate@v1");
    assert_eq!(doc["config"]["command"], "validate");
    let pi = doc["result"]["pi"].as_array().unwrap();
    assert!((pi[0].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!((pi[1].as_f64().unwrap() - 0.4).abs() < 1e-12);
    assert!(doc["result"]["max_row_sum_residual"].as_f64().unwrap() < 1e-12);
    assert!(
        doc["result"]["max_detailed_balance_residual"]
            .as_f64()
            .unwrap()
            < 1e-12
    );
}

#[test]
fn validate_rejects_irreversible_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(
        dir.path(),
        "chain.json",
        r#"{"kernel": [
            [0.0, 0.9, 0.1],
            [0.1, 0.0, 0.9],
            [0.9, 0.1, 0.0]
        ]}"#,
    );
    let out = run(&["validate", chain.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let doc = stdout_json(&out);
    assert_eq!(doc["schema"], "entroflow/error@v1");
    assert_eq!(doc["error"]["kind"], "not-reversible");
    // The human-readable line goes to stderr, the document to stdout.
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn dist_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let rho0 = write(dir.path(), "rho0.json", RHO0);
    let rho1 = write(dir.path(), "rho1.json", RHO1);
    let args = [
        "dist",
        chain.to_str().unwrap(),
        rho0.to_str().unwrap(),
        rho1.to_str().unwrap(),
        "--N",
        "4",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success(), "{first:?}");
    assert_eq!(first.stdout, second.stdout, "same job, same bytes");

    let doc = stdout_json(&first);
    let result = &doc["result"];
    assert!(result["distance"].as_f64().unwrap() > 0.0);
    let trace = result["trace"].as_array().unwrap();
    let iterations = result["iterations"].as_u64().unwrap() as usize;
    assert_eq!(trace.len(), iterations + 1);
    assert_eq!(
        trace.last().unwrap().as_f64().unwrap(),
        result["action"].as_f64().unwrap()
    );
    // N intervals means N + 1 nodes, N interval potentials, N speeds.
    assert_eq!(result["path"]["nodes"].as_array().unwrap().len(), 5);
    assert_eq!(result["path"]["potentials"].as_array().unwrap().len(), 4);
    let speeds: Vec<f64> = result["speeds"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(speeds.len(), 4);
    let quad = speeds.iter().map(|s| s * s).sum::<f64>() / 4.0;
    let action = result["action"].as_f64().unwrap();
    assert!((quad - action).abs() < 1e-9 * action, "{quad} vs {action}");
}

#[test]
fn measure_input_matches_density_input() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let rho0 = write(dir.path(), "rho0.json", RHO0);
    let rho1 = write(dir.path(), "rho1.json", RHO1);
    // mu = rho * pi with pi uniform 1/3.
    let mu0 = write(dir.path(), "mu0.json", "[0.6, 0.3, 0.1]");
    let mu1 = write(dir.path(), "mu1.json", "[0.1, 0.3, 0.6]");

    let plain = run(&[
        "dist",
        chain.to_str().unwrap(),
        rho0.to_str().unwrap(),
        rho1.to_str().unwrap(),
        "--N",
        "4",
    ]);
    let measure = run(&[
        "dist",
        chain.to_str().unwrap(),
        mu0.to_str().unwrap(),
        mu1.to_str().unwrap(),
        "--N",
        "4",
        "--as-measure",
    ]);
    assert!(plain.status.success());
    assert!(measure.status.success());
    let d_plain = stdout_json(&plain)["result"]["distance"].as_f64().unwrap();
    let d_measure = stdout_json(&measure)["result"]["distance"]
        .as_f64()
        .unwrap();
    // The mu -> mu/pi conversion rounds, so agreement is to rounding, not bytes.
    assert!(
        (d_plain - d_measure).abs() < 1e-9 * d_plain,
        "{d_plain} vs {d_measure}"
    );
}

#[test]
fn rejects_nonpositive_numeric_options_as_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let rho0 = write(dir.path(), "rho0.json", RHO0);
    let rho1 = write(dir.path(), "rho1.json", RHO1);
    for (flag, value) in [("--N", "0"), ("--tol", "0"), ("--tol", "-1e-3")] {
        let out = run(&[
            "dist",
            chain.to_str().unwrap(),
            rho0.to_str().unwrap(),
            rho1.to_str().unwrap(),
            flag,
            value,
        ]);
        assert_eq!(out.status.code(), Some(64), "{flag} {value}");
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn missing_input_file_exits_with_io_code() {
    let out = run(&["validate", "/nonexistent/chain.json"]);
    assert_eq!(out.status.code(), Some(74));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/nonexistent/chain.json"), "{stderr}");
}

#[test]
fn disconnected_masses_are_reported_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", PATH_CHAIN);
    // Supports on opposite ends of the path; the power mean's divergent
    // normalisation integral makes crossing the gap cost infinite action.
    let rho0 = write(dir.path(), "rho0.json", "[2.0, 2.0, 0.0, 0.0]");
    let rho1 = write(dir.path(), "rho1.json", "[0.0, 0.0, 2.0, 2.0]");
    let out = run(&[
        "dist",
        chain.to_str().unwrap(),
        rho0.to_str().unwrap(),
        rho1.to_str().unwrap(),
        "--mean",
        "power:2.5",
        "--N",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let doc = stdout_json(&out);
    assert_eq!(doc["error"]["kind"], "infeasible-endpoints");
}

#[test]
fn two_point_distance_matches_the_library() {
    let out = run(&[
        "two-point",
        "--p",
        "0.4",
        "--q",
        "0.6",
        "--alpha",
        "-0.5",
        "--beta",
        "0.5",
        "--samples",
        "5",
    ]);
    assert!(out.status.success(), "{out:?}");
    let doc = stdout_json(&out);
    let cli_distance = doc["result"]["distance"].as_f64().unwrap();

    let tp = entroflow::TwoPointChain::new(0.4, 0.6).unwrap();
    let mean = entroflow::MeanFunction::logarithmic();
    let lib_distance = tp.distance(&mean, -0.5, 0.5).unwrap();
    // Same code path; JSON round-trips f64 exactly.
    assert_eq!(cli_distance, lib_distance);

    let geo = doc["result"]["geodesic"].as_array().unwrap();
    assert_eq!(geo.len(), 5);
    assert_eq!(geo[0]["beta"].as_f64().unwrap(), -0.5);
    assert_eq!(geo[4]["beta"].as_f64().unwrap(), 0.5);
    // The isometry coordinate is affine in t, so every sampled speed is the
    // distance itself.
    for sample in geo {
        let speed = sample["speed"].as_f64().unwrap();
        assert!(
            (speed - cli_distance).abs() < 1e-6 * cli_distance,
            "{speed} vs {cli_distance}"
        );
    }
    let kappa = doc["result"]["convexity_constant"]["kappa"]
        .as_f64()
        .unwrap();
    assert!(kappa > 0.0);
}

#[test]
fn theta_check_classifies_the_normalisation_integral() {
    let log = run(&["theta-check", "--mean", "log", "--samples", "256"]);
    assert!(log.status.success());
    let doc = stdout_json(&log);
    assert_eq!(doc["result"]["c_theta"]["finite"], true);
    assert!(doc["result"]["all_passed"].as_bool().unwrap());

    let power = run(&["theta-check", "--mean", "power:2.5", "--samples", "256"]);
    assert!(power.status.success(), "a divergent verdict is still exit 0");
    let doc = stdout_json(&power);
    assert_eq!(doc["result"]["c_theta"]["finite"], false);
    assert_eq!(doc["result"]["c_theta"]["value"], Value::Null);
}

#[test]
fn heat_csv_file_has_a_versioned_schema() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let rho0 = write(dir.path(), "rho0.json", RHO0);
    let csv_path = dir.path().join("heat.csv");
    let out = run(&[
        "heat",
        chain.to_str().unwrap(),
        rho0.to_str().unwrap(),
        "--t-grid",
        "0.1,1.0",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    // Stdout keeps the JSON document; the file carries the table.
    assert_eq!(stdout_json(&out)["schema"], "entroflow/heat@v1");

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# schema: entroflow/heat.csv@v1");
    assert!(lines[1].starts_with("# config: {"));
    assert_eq!(lines[2], "time,state,density");
    // 2 times x 3 states of data rows.
    assert_eq!(lines.len(), 3 + 6);
}

#[test]
fn gradflow_check_confirms_the_identification() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let rho0 = write(dir.path(), "rho0.json", RHO0);
    let out = run(&[
        "gradflow-check",
        chain.to_str().unwrap(),
        rho0.to_str().unwrap(),
        "--t-grid",
        "0.2,1.0",
    ]);
    assert!(out.status.success(), "{out:?}");
    let doc = stdout_json(&out);
    assert!(
        doc["result"]["max_edge_residual"].as_f64().unwrap() < 1e-10,
        "heat flow potentials should match the entropy gradient edgewise"
    );
    for sample in doc["result"]["samples"].as_array().unwrap() {
        if let Some(order) = sample["order"].as_f64() {
            assert!((order - 2.0).abs() < 0.3, "order {order}");
        }
    }
}

#[test]
fn geodesic_path_connects_the_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let rho0 = write(dir.path(), "rho0.json", RHO0);
    let rho1 = write(dir.path(), "rho1.json", RHO1);
    let out = run(&[
        "geodesic",
        chain.to_str().unwrap(),
        rho0.to_str().unwrap(),
        rho1.to_str().unwrap(),
        "--samples",
        "8",
    ]);
    assert!(out.status.success(), "{out:?}");
    let doc = stdout_json(&out);
    let nodes = doc["result"]["path"]["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 9);
    let expect0 = [1.8, 0.9, 0.3];
    let expect1 = [0.3, 0.9, 1.8];
    for x in 0..3 {
        assert!((nodes[0][x].as_f64().unwrap() - expect0[x]).abs() < 1e-6);
        assert!((nodes[8][x].as_f64().unwrap() - expect1[x]).abs() < 1e-6);
    }
    assert!(doc["result"]["residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn path_dump_is_wide_with_a_speed_column() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let rho0 = write(dir.path(), "rho0.json", RHO0);
    let rho1 = write(dir.path(), "rho1.json", RHO1);
    let out = run(&[
        "dist",
        chain.to_str().unwrap(),
        rho0.to_str().unwrap(),
        rho1.to_str().unwrap(),
        "--N",
        "4",
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[2], "time,rho:a,rho:b,rho:c,speed");
    // One row per node.
    assert_eq!(lines.len(), 3 + 5);
    let first: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "1.8");
}

#[test]
fn csv_stdout_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let rho0 = write(dir.path(), "rho0.json", RHO0);
    let args = [
        "heat",
        chain.to_str().unwrap(),
        rho0.to_str().unwrap(),
        "--format",
        "csv",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.starts_with("# schema: entroflow/heat.csv@v1\n"), "{text}");
}

#[test]
fn ricci_estimate_is_seeded_and_positive() {
    let dir = tempfile::tempdir().unwrap();
    let chain = write(dir.path(), "chain.json", TRIANGLE_CHAIN);
    let args = [
        "ricci",
        chain.to_str().unwrap(),
        "--pairs",
        "2",
        "--t-samples",
        "3",
        "--resolution",
        "8",
        "--seed",
        "7",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success(), "{first:?}");
    assert_eq!(first.stdout, second.stdout, "seeded sampling, same bytes");
    let doc = stdout_json(&first);
    // The complete graph has positive entropic curvature.
    assert!(doc["result"]["kappa"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["result"]["pairs"].as_array().unwrap().len(), 2);
    assert_eq!(doc["result"]["skipped"], 0);
}
