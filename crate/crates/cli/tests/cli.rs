use std::path::{Path, PathBuf};
use std::process::Command;

use eccgame::commands::{self, SUMMARY_JSON, TRAJECTORY_CSV};
use eccgame::output::trajectory_header;
use eccgame::{CliError, Overrides, Scenario, Scheme, SweepParameter};
use serde_json::Value;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scenario_json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(scenario_path(name)).unwrap()).unwrap()
}

fn load(name: &str, overrides: Overrides) -> Scenario {
    Scenario::load(&scenario_path(name), overrides).unwrap()
}

fn fixed(name: &str) -> Scenario {
    load(
        name,
        Overrides {
            scheme: Some(Scheme::FixedControls),
            ..Overrides::default()
        },
    )
}

fn rejected_field(doc: &Value) -> String {
    match Scenario::parse(&doc.to_string(), Overrides::default()) {
        Err(CliError::InvalidScenario { field, .. }) => field,
        other => panic!("expected InvalidScenario, got {other:?}"),
    }
}

fn with(mut doc: Value, key: &str, value: Value) -> Value {
    doc[key] = value;
    doc
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|c| c.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn trajectory_csv_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = fixed("scenario_a.json");
    let summary = commands::simulate(&scenario, dir.path()).unwrap();
    let (header, rows) = read_csv(&dir.path().join(TRAJECTORY_CSV));
    assert_eq!(header, trajectory_header(2));
    assert_eq!(rows.len(), 5001);

    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let last = rows.last().unwrap();
    assert!((last[col("t")] - 50.0).abs() < 1e-12);
    for (i, name) in ["x_1", "x_2", "x_c"].iter().enumerate() {
        assert!((last[col(name)] - summary.final_shares[i]).abs() < 1e-9);
    }
    for (i, name) in ["U_1", "U_2", "U_c"].iter().enumerate() {
        assert!((last[col(name)] - summary.integral_utilities[i]).abs() < 1e-9);
    }

    // Equilibrium recomputed from the last row's controls: shares
    // proportional to compute per access price.
    let (rc, pc) = (2.0, 0.2);
    let r = [last[col("r_1")], last[col("r_2")]];
    let cap = [
        (2.0 + r[0] * rc) / 0.3,
        (1.0 + r[1] * rc) / 0.2,
        rc * (1.0 - r[0] - r[1]) / pc,
    ];
    let total: f64 = cap.iter().sum();
    for (i, c) in cap.iter().enumerate() {
        assert!((c / total - summary.equilibrium_shares[i]).abs() < 1e-9);
    }

    // The JSON on disk is the same summary.
    let json: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_JSON)).unwrap()).unwrap();
    assert_eq!(json["scheme"], "fixed-controls");
    assert_eq!(json["verdict"], summary.verdict);
    assert_eq!(json["final_shares"][2].as_f64().unwrap(), summary.final_shares[2]);
}

#[test]
fn fixed_zero_requests_reach_proportional_shares() {
    let dir = tempfile::tempdir().unwrap();
    let summary = commands::simulate(&fixed("scenario_a.json"), dir.path()).unwrap();
    let expected = [4.0 / 13.0, 3.0 / 13.0, 6.0 / 13.0];
    for (i, want) in expected.iter().enumerate() {
        assert!((summary.equilibrium_shares[i] - want).abs() < 1e-12);
        assert!((summary.final_shares[i] - want).abs() < 1e-4);
    }
    assert_eq!(summary.verdict, "converged");
    assert!(summary.sweep_report.is_none());
}

#[test]
fn identical_providers_share_equally_under_fixed_controls() {
    let dir = tempfile::tempdir().unwrap();
    let s = commands::simulate(&fixed("scenario_n6.json"), dir.path()).unwrap();
    for pair in [(0, 1), (2, 3), (4, 5)] {
        assert!((s.equilibrium_shares[pair.0] - s.equilibrium_shares[pair.1]).abs() < 1e-6);
        assert!((s.final_shares[pair.0] - s.final_shares[pair.1]).abs() < 1e-6);
    }
}

#[test]
fn simulate_is_bit_identical_across_runs() {
    let scenario = load(
        "scenario_a.json",
        Overrides {
            horizon: Some(10.0),
            ..Overrides::default()
        },
    );
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    commands::simulate(&scenario, a.path()).unwrap();
    commands::simulate(&scenario, b.path()).unwrap();
    for f in [TRAJECTORY_CSV, SUMMARY_JSON] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn schema_violations_name_the_field() {
    let a = scenario_json("scenario_a.json");
    assert_eq!(
        rejected_field(&with(a.clone(), "x0", serde_json::json!([0.3, 0.3, 0.3]))),
        "x0"
    );
    assert_eq!(
        rejected_field(&with(a.clone(), "x0", serde_json::json!([0.5, 0.5]))),
        "x0"
    );
    assert_eq!(
        rejected_field(&with(a.clone(), "x0", serde_json::json!([0.0, 0.6, 0.4]))),
        "x0"
    );
    assert_eq!(
        rejected_field(&with(a.clone(), "r0", serde_json::json!([0.7, 0.7]))),
        "r0"
    );
    assert_eq!(rejected_field(&with(a.clone(), "r0", serde_json::json!([0.1]))), "r0");
    assert_eq!(rejected_field(&with(a.clone(), "dt", serde_json::json!(0.03))), "dt");
    assert_eq!(
        rejected_field(&with(a.clone(), "eps_convergence", serde_json::json!(0.0))),
        "eps_convergence"
    );
    assert_eq!(rejected_field(&with(a.clone(), "p0", serde_json::json!(-1.0))), "p0");
    assert_eq!(
        rejected_field(&with(a.clone(), "scheme", serde_json::json!("greedy"))),
        "scheme"
    );
    assert_eq!(rejected_field(&with(a.clone(), "bogus", serde_json::json!(1))), "bogus");
    assert_eq!(
        rejected_field(&with(
            a.clone(),
            "sweeps",
            serde_json::json!([{"parameter": "R_c", "values": []}])
        )),
        "sweeps"
    );
    assert_eq!(
        rejected_field(&with(
            a.clone(),
            "solver",
            serde_json::json!({"max_iter": 10, "tol": 1e-8, "relaxation": 1.5})
        )),
        "solver"
    );
    assert_eq!(
        rejected_field(&with(a.clone(), "learning_rate", serde_json::json!(-1.0))),
        "learning_rate"
    );
    assert_eq!(
        rejected_field(&with(a.clone(), "cloud_power", serde_json::json!(1.0))),
        "cloud_power"
    );

    assert_eq!(
        rejected_field(&with(a.clone(), "horizon", serde_json::json!("long"))),
        "horizon"
    );
    let mut weights = a.clone();
    weights["ecp_weights"]["payment"] = serde_json::json!("x");
    assert_eq!(rejected_field(&weights), "ecp_weights.payment");
    weights["ecp_weights"] = serde_json::json!({"revenue": 1.0, "payment": 1.0});
    assert_eq!(rejected_field(&weights), "ecp_weights.mismatch");

    let mut missing = a.clone();
    missing.as_object_mut().unwrap().remove("horizon");
    assert_eq!(rejected_field(&missing), "horizon");
}

#[test]
fn overrides_replace_file_values() {
    let s = load(
        "scenario_a.json",
        Overrides {
            dt: Some(0.05),
            horizon: Some(20.0),
            scheme: Some(Scheme::Ssec),
        },
    );
    assert_eq!((s.dt, s.config.horizon, s.scheme), (0.05, 20.0, Scheme::Ssec));
    // "balanced": Kφ = ΣR_n + R_c.
    assert!((s.config.nominal_rate * 100.0 - 5.0).abs() < 1e-12);
}

#[test]
fn ess_reports_rate_spectrum_and_delay_bound() {
    let r = commands::ess(&load("scenario_a.json", Overrides::default()));
    assert!((r.theta - (2.0 / 0.3 + 1.0 / 0.2 + 2.0 / 0.2) / 100.0).abs() < 1e-12);
    assert_eq!(r.eigenvalues.len(), 3);
    for [re, im] in &r.eigenvalues {
        assert!((re + r.theta).abs() < 1e-10 && im.abs() < 1e-10);
    }
    assert!((r.delay_bound - 7.249).abs() < 1e-3);

    let unit = serde_json::json!({
        "ecp_power": [1.0], "ecp_access_price": [1.0], "n_users": 1,
        "cloud_power": 1.0, "cloud_access_price": 1.0, "learning_rate": 1.0,
        "mapping_factor": 1.0, "discount_rate": 0.1,
        "ecp_weights": {"revenue": 1.0, "payment": 1.0, "mismatch": 1.0},
        "ccp_weights": {"revenue": 1.0, "sales": 1.0, "mismatch": 1.0},
        "nominal_rate": 1.0, "horizon": 1.0, "x0": [0.3, 0.7], "r0": [0.0],
        "dt": 0.1, "eps_convergence": 1e-3, "scheme": "ssec"
    });
    let r = commands::ess(&Scenario::parse(&unit.to_string(), Overrides::default()).unwrap());
    assert!((r.theta - 2.0).abs() < 1e-15);
    assert!((r.delay_bound - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    assert_eq!(r.shares, vec![0.5, 0.5]);
}

#[test]
fn compare_and_sweep_reject_empty_lists() {
    let s = load("scenario_a.json", Overrides::default());
    assert!(matches!(commands::compare(&s, &[]), Err(CliError::InvalidScenario { field, .. }) if field == "deltas"));
    assert!(
        matches!(commands::compare(&s, &[1.0, -0.5]), Err(CliError::InvalidScenario { field, .. }) if field == "deltas")
    );
    assert!(matches!(
        commands::sweep(&s, SweepParameter::CloudPower, &[]),
        Err(CliError::InvalidScenario { field, .. }) if field == "values"
    ));
    assert!(matches!(
        commands::sweep(&s, SweepParameter::CloudPower, &[5.0, 0.5]),
        Err(CliError::InvalidScenario { field, .. }) if field == "cloud_power"
    ));
}

#[test]
fn compare_rows_follow_the_delta_list() {
    let s = load(
        "scenario_a.json",
        Overrides {
            horizon: Some(10.0),
            ..Overrides::default()
        },
    );
    let rows = commands::compare(&s, &[2.0, 0.5]).unwrap();
    assert_eq!(rows.iter().map(|r| r.delta).collect::<Vec<_>>(), vec![2.0, 0.5]);
    assert!(rows
        .iter()
        .all(|r| r.olsec_sweep_converged && r.olsec_ccp_utility.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("compare.csv");
    commands::write_compare(&path, &rows).unwrap();
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(&reader.headers().unwrap()[0], "delta");
    assert_eq!(reader.records().count(), 2);
}

#[test]
fn sweep_rows_keep_value_order() {
    let s = fixed("scenario_delay.json");
    let values = s.sweep_values(SweepParameter::Delay).unwrap().to_vec();
    let rows = commands::sweep(&s, SweepParameter::Delay, &values).unwrap();
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), values);
    // Both shipped delays sit well under the stability bound of about 7.25.
    assert!(rows.iter().all(|r| r.verdict == "converged"));

    let mut out = Vec::new();
    commands::write_sweep(&mut out, &rows).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("parameter,value,x_1,x_2,x_c,p,r_c,"));
    assert_eq!(text.lines().count(), 3);
}

fn eccgame(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_eccgame")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, doc: &Value| {
        let p = dir.path().join(name);
        std::fs::write(&p, doc.to_string()).unwrap();
        p.to_str().unwrap().to_string()
    };
    let a = scenario_json("scenario_a.json");

    let ok = eccgame(&["ess", scenario_path("scenario_a.json").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    let json: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!((json["theta"].as_f64().unwrap() - 0.216_666_666_666_666_7).abs() < 1e-12);

    let bad = write("bad.json", &with(a.clone(), "x0", serde_json::json!([0.3, 0.3, 0.3])));
    let out = eccgame(&["ess", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x0"));

    let sweep_empty = eccgame(&[
        "sweep",
        scenario_path("scenario_n6.json").to_str().unwrap(),
        "--param",
        "R_c",
    ]);
    assert_eq!(sweep_empty.status.code(), Some(2));
    let bad_param = eccgame(&[
        "sweep",
        scenario_path("scenario_a.json").to_str().unwrap(),
        "--param",
        "K",
    ]);
    assert_eq!(bad_param.status.code(), Some(2));

    let mut wild = with(a, "learning_rate", serde_json::json!(1e9));
    wild["scheme"] = serde_json::json!("fixed-controls");
    let wild = write("wild.json", &wild);
    let out_dir = dir.path().join("out");
    let out = eccgame(&["simulate", &wild, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let sim = eccgame(&[
        "simulate",
        scenario_path("scenario_a.json").to_str().unwrap(),
        "--scheme",
        "fixed-controls",
        "--horizon",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(sim.status.code(), Some(0));
    assert!(out_dir.join(TRAJECTORY_CSV).exists() && out_dir.join(SUMMARY_JSON).exists());
}
