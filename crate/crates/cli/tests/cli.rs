use std::process::{Command, Output};

use serde_json::Value;

fn cip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cip"))
        .args(args)
        .output()
        .expect("spawn cip")
}

fn ok_json(args: &[&str]) -> Value {
    let out = cip(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const BUDGET: [&str; 6] = ["--epsilon", "1", "--r", "1", "--lambda", "2"];

fn with_budget<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(BUDGET).collect()
}

#[test]
fn calibrate_ten_point_trace() {
    let v = ok_json(&with_budget(&[
        "calibrate", "--d", "10", "--l-max", "1", "--partition", "every-other",
    ]));
    assert_eq!(v["schema_version"], 1);
    let s = v["sigma_z2"].as_f64().unwrap();
    assert!(s > 5.0, "sigma_z2 = {s}");
    let loss = v["achieved_loss"].as_f64().unwrap();
    assert!((1.0 - 1e-6..=1.0).contains(&loss));
}

#[test]
fn calibrate_audit_target_dominates_designated() {
    let designated = ok_json(&with_budget(&[
        "calibrate", "--d", "8", "--l-max", "2", "--partition", "every-other",
    ]));
    let audited = ok_json(&with_budget(&[
        "calibrate", "--d", "8", "--l-max", "2", "--target", "audit", "--point", "2",
    ]));
    assert_eq!(audited["audited_subsequences"], 128);
    assert!(audited["sigma_z2"].as_f64().unwrap() >= designated["sigma_z2"].as_f64().unwrap() * (1.0 - 1e-9));
}

#[test]
fn missing_epsilon_is_a_usage_error() {
    let out = cip(&[
        "calibrate", "--d", "10", "--l-max", "1", "--r", "1", "--lambda", "2", "--partition",
        "every-other",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--epsilon"));
}

#[test]
fn invalid_values_exit_two() {
    for args in [
        with_budget(&["calibrate", "--d", "10", "--l-max", "-1", "--partition", "every-other"]),
        with_budget(&["calibrate", "--d", "1", "--l-max", "1", "--partition", "0"]),
        with_budget(&["calibrate", "--d", "4", "--l-max", "1", "--partition", "0,9"]),
        vec!["calibrate", "--d", "4", "--l-max", "1", "--partition", "0", "--epsilon", "1", "--r", "1", "--lambda", "1"],
        vec!["frobnicate"],
    ] {
        let out = cip(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn loss_curve_columns_and_identities() {
    let out = cip(&[
        "loss-curve", "--d", "10", "--partition", "every-other", "--r", "1", "--lambda", "2",
        "--l-grid", "1e-6,0.5,1,2,4", "--sigma-z2-logspace", "0.1,10,7",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("l,sigma_z2,L_star,L_star_GI,ratio"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 35);
    for row in &rows {
        let (l, s, rbf, gi, ratio) = (row[0], row[1], row[2], row[3], row[4]);
        assert!(rbf >= gi * (1.0 - 1e-12));
        assert!((ratio - rbf / gi).abs() <= 1e-12 * ratio);
        if l == 1e-6 {
            assert!((ratio - 1.0).abs() <= 1e-6);
        }
        // L_star_GI = lambda |S| r^2 / (2 sigma_z2)
        assert!((gi - 5.0 / s).abs() <= 1e-12 * gi);
    }
}

#[test]
fn loss_curve_requires_a_noise_grid() {
    let out = cip(&[
        "loss-curve", "--d", "10", "--partition", "every-other", "--r", "1", "--lambda", "2",
        "--l-grid", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--sigma-z2-grid"));
}

#[test]
fn worst_pair_norm_and_eigenvector() {
    let v = ok_json(&with_budget(&[
        "worst-pair", "--d", "10", "--l-max", "2", "--partition", "every-other", "--sigma-z2", "1",
    ]));
    let ds: Vec<f64> = v["delta_s_star"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert_eq!(ds.len(), 5);
    let norm = ds.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 5f64.sqrt()).abs() <= 1e-12);
    assert_eq!(v["linf_feasible"], ds.iter().all(|x| x.abs() <= 1.0));
    assert_eq!(v["secret_indices"], serde_json::json!([0, 2, 4, 6, 8]));
}

#[test]
fn worst_pair_identity_limit_reports_degenerate_maximizer() {
    // a vanishing length scale decouples the points
    let v = ok_json(&with_budget(&[
        "worst-pair", "--d", "6", "--l-max", "1", "--l", "1e-6", "--partition", "every-other",
        "--sigma-z2", "1",
    ]));
    assert!(v["alpha_star"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(v["maximizer_degenerate"], true);
    assert!(!v["notes"].as_array().unwrap().is_empty());
}

#[test]
fn sanitize_is_deterministic_and_calibrates() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    std::fs::write(&trace, "t,x\n0,1.5\n1,2.0\n2,2.25\n3,1.0\n").unwrap();
    let trace = trace.to_str().unwrap();

    let a = cip(&["sanitize", "--trace", trace, "--sigma-z2", "2", "--seed", "7"]);
    let b = cip(&["sanitize", "--trace", trace, "--sigma-z2", "2", "--seed", "7"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);

    let out = cip(&["sanitize", "--trace", trace, "--sigma-z2", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--seed"));

    let cal = ok_json(&with_budget(&[
        "calibrate", "--trace", trace, "--l-max", "1", "--partition", "every-other",
    ]));
    let san = ok_json(&with_budget(&[
        "sanitize", "--trace", trace, "--l-max", "1", "--partition", "every-other", "--seed", "1",
    ]));
    assert_eq!(san["meta"]["sigma_z2"], cal["sigma_z2"]);
    assert_eq!(san["meta"]["epsilon"], 1.0);

    let csv_out = dir.path().join("out.csv");
    let out = cip(&[
        "sanitize", "--trace", trace, "--sigma-z2", "2", "--seed", "7", "-o",
        csv_out.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let body = std::fs::read_to_string(&csv_out).unwrap();
    assert!(body.starts_with("# schema_version=1"));
}

#[test]
fn sanitize_noise_variance() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let n = 20_000;
    let body: String = std::iter::once("t,x\n".to_string())
        .chain((0..n).map(|i| format!("{i},{}\n", (i % 7) as f64)))
        .collect();
    std::fs::write(&trace, body).unwrap();
    let v = ok_json(&["sanitize", "--trace", trace.to_str().unwrap(), "--sigma-z2", "4", "--seed", "3"]);
    let pts = v["points"].as_array().unwrap();
    let g: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| p["z"].as_f64().unwrap() - (i % 7) as f64)
        .collect();
    let mean = g.iter().sum::<f64>() / n as f64;
    let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() < 0.06, "mean {mean}");
    assert!((var - 4.0).abs() < 0.2, "var {var}");
}

#[test]
fn audit_counts_and_cap() {
    let v = ok_json(&with_budget(&[
        "audit", "--d", "10", "--point", "3", "--l-max", "1", "--sigma-z2", "5",
    ]));
    assert_eq!(v["evaluated"], 512);
    assert_eq!(v["schema_version"], 1);

    let out = cip(&with_budget(&[
        "audit", "--d", "20", "--point", "3", "--l-max", "1", "--sigma-z2", "5",
    ]));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--cap"));
}

#[test]
fn verify_default_release_divergence_passes() {
    let v = ok_json(&[
        "verify", "--d", "4", "--l-max", "1", "--partition", "0,2", "--sigma-z2", "2", "--lambda",
        "2", "--r", "0.5", "--seed", "11", "--n-samples", "200000",
    ]);
    assert_eq!(v["check"], "release-divergence");
    assert_eq!(v["pass"], true, "{v}");
}

#[test]
fn verify_modes_agree() {
    let base = [
        "verify", "--d", "4", "--l-max", "1", "--partition", "1,2", "--sigma-z2", "1", "--lambda",
        "2", "--s-i", "0.3,-0.2", "--s-j", "0,0", "--seed", "5", "--n-samples", "200000",
    ];
    let renyi = ok_json(&[&base[..], &["--mode", "renyi"]].concat());
    let release = ok_json(&base);
    let odds = ok_json(&[&base[..], &["--mode", "odds-gap"]].concat());
    assert_eq!(renyi["pass"], true, "{renyi}");
    let a = renyi["analytic"].as_f64().unwrap();
    assert!((a - release["analytic"].as_f64().unwrap()).abs() <= 1e-12 * a);
    assert_eq!(odds["pass"], true);
    assert_eq!(odds["reference_agrees"], true);
}

#[test]
fn verify_hypothesis_length_checked() {
    let out = cip(&[
        "verify", "--d", "4", "--l-max", "1", "--partition", "1,2", "--sigma-z2", "1", "--lambda",
        "2", "--s-i", "0.3", "--seed", "5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--s-i"));
}
