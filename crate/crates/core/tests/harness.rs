use hermflow::harness::*;
use hermflow::Error;

fn small(scenario: &str, checks: &[&str]) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(scenario, 7).unwrap();
    cfg.checks = checks.iter().map(|c| c.to_string()).collect();
    cfg.grid.dt = 0.01;
    cfg.grid.t_end = 0.2;
    cfg.budget.paths = 10;
    cfg.budget.mc_paths = 400;
    cfg.budget.inner_paths = 16;
    cfg.budget.trials = 10;
    cfg.norms.n_max = 400;
    cfg
}

#[test]
fn toml_with_sections_parses() {
    let cfg = ScenarioConfig::parse(
        r#"
scenario = "ou"
seed = 42
checks = ["strong", "monotonicity"]

[model]
lambda = 2.0
s = 0.5

[psi]
kind = "bump"
amplitude = 1.0
center = [0.1]
scale = 0.7

[test_function]
kind = "coordinate"
axis = 0

[grid]
dt = 0.002
t_end = 0.4
"#,
    )
    .unwrap();
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.model.lambda, 2.0);
    assert_eq!(cfg.selected_checks(), vec!["strong", "monotonicity"]);
    assert_eq!(cfg.ou_model().lambda, 2.0);
    assert!((cfg.initial_condition().unwrap().support_radius() - 0.8).abs() < 1e-15);
}

#[test]
fn json_documents_are_accepted() {
    let cfg = ScenarioConfig::parse(r#"{"scenario": "trig", "seed": 3, "grid": {"truncation": 30}}"#).unwrap();
    assert_eq!(cfg.scenario, "trig");
    assert_eq!(cfg.grid.truncation, 30);
}

#[test]
fn missing_seed_is_reported_by_name() {
    let err = ScenarioConfig::parse("scenario = \"gaussian\"").unwrap_err();
    assert!(matches!(&err, Error::Parse(m) if m.contains("seed")), "{err}");
}

#[test]
fn overrides_can_supply_the_seed_and_grid() {
    let overrides = Overrides {
        seed: Some(9),
        dt: Some(0.005),
        steps: Some(40),
        paths: Some(3),
        truncation: Some(25),
        ..Overrides::default()
    };
    let cfg = ScenarioConfig::from_overrides("gaussian", &overrides).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.grid.dt, 0.005);
    assert!((cfg.grid.t_end - 0.2).abs() < 1e-15);
    assert_eq!(cfg.budget.paths, 3);
    assert_eq!(cfg.grid.truncation, 25);
}

#[test]
fn invalid_values_name_their_field() {
    let cases = [
        ("scenario = \"heat\"\nseed = 1", "scenario"),
        ("scenario = \"ou\"\nseed = 1\n[grid]\ndt = -1.0", "grid.dt"),
        ("scenario = \"ou\"\nseed = 1\nchecks = [\"bogus\"]", "checks"),
        ("scenario = \"ou\"\nseed = 1\n[budget]\npaths = 0", "budget.paths"),
        ("scenario = \"ou\"\nseed = 1\nunknown = 3", "unknown"),
    ];
    for (text, field) in cases {
        let err = ScenarioConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains(field), "{field}: {err}");
    }
}

#[test]
fn configs_round_trip_through_toml() {
    let cfg = small("trig", &["strong"]);
    let back = ScenarioConfig::parse(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn empty_check_list_selects_everything() {
    let cfg = ScenarioConfig::new("gaussian", 1).unwrap();
    assert_eq!(cfg.selected_checks(), CHECKS.to_vec());
}

#[test]
fn gaussian_support_check_passes() {
    let cfg = small("gaussian", &["support"]);
    let reports = run_check(&cfg, "support").unwrap();
    assert!(
        reports.iter().all(|r| r.pass),
        "{:?}",
        reports.iter().map(|r| r.headline()).collect::<Vec<_>>()
    );
}

#[test]
fn ou_monotonicity_reports_lambda() {
    let cfg = small("ou", &["monotonicity"]);
    let reports = run_check(&cfg, "monotonicity").unwrap();
    let report = &reports[0];
    assert!(report.pass, "{}", report.headline());
    for key in ["max_ratio", "min_ratio"] {
        let ratio = report.params[key].as_f64().unwrap();
        assert!((ratio - cfg.model.lambda).abs() < 1e-4, "{key} = {ratio}");
    }
}

#[test]
fn scenario_run_writes_reports_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("trig", &["strong", "generator", "tv"]);
    cfg.norms.tv_levels = 2;
    cfg.out = Some(dir.path().join("a"));
    let first = run_scenario(&cfg).unwrap();
    assert_eq!(
        first.exit_code(),
        0,
        "{:?}",
        first.reports.iter().map(|r| r.headline()).collect::<Vec<_>>()
    );
    assert!(first.files.iter().all(|f| f.exists()));
    assert!(first.files.iter().any(|f| f.extension().is_some_and(|e| e == "csv")));
    cfg.out = Some(dir.path().join("b"));
    let second = run_scenario(&cfg).unwrap();
    for (a, b) in first.reports.iter().zip(&second.reports) {
        assert_eq!(a.payload_json(), b.payload_json());
    }
}

#[test]
fn failed_checks_give_exit_code_one() {
    let cfg = small("ou", &["strong"]);
    let reports = run_check(&cfg, "strong").unwrap();
    let passing = ScenarioOutcome {
        reports: reports.clone(),
        files: vec![],
    };
    assert_eq!(passing.exit_code(), 0);
    let mut failing = reports;
    failing[0].pass = false;
    let outcome = ScenarioOutcome {
        reports: failing,
        files: vec![],
    };
    assert!(!outcome.all_pass());
    assert_eq!(outcome.exit_code(), 1);
}

#[test]
fn unsupported_combinations_become_skip_entries() {
    let mut cfg = small("trig", &["strong"]);
    cfg.psi = ScenarioConfig::parse(
        "scenario = \"trig\"\nseed = 1\n[psi]\nkind = \"derivative-delta\"\npoint = [0.0]\naxis = 0",
    )
    .unwrap()
    .psi;
    let reports = run_check(&cfg, "strong").unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].params["skipped"], serde_json::Value::Bool(true));
    assert!(reports[0].pass);
    assert!(!reports[0].notes.is_empty());
}

#[test]
fn norm_table_rows_follow_the_threshold() {
    let cfg = ScenarioConfig::new("gaussian", 1).unwrap();
    let mut buf = Vec::new();
    let rows = emit_norm_table(&cfg, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "p,n,partial_sum,slope");
    let last = |p: f64| rows.iter().rfind(|r| r.p == p).unwrap().clone();
    assert!(last(0.5).slope.unwrap() < -1.0);
    assert!((last(0.25).slope.unwrap() + 1.0).abs() < 0.1);
    // p = 2: partial sums settle within 20 terms to 6 digits.
    let p2: Vec<_> = rows.iter().filter(|r| r.p == 2.0).collect();
    let total = p2.last().unwrap().partial_sum;
    assert!(((p2[19].partial_sum - total) / total).abs() < 1e-6);
}

#[test]
fn dyadic_step_divides_the_horizon() {
    for (t, dt, levels) in [(0.5, 1e-3, 4), (0.5, 0.01, 4), (1.0, 0.03, 2), (0.5, 0.5 / 512.0, 4)] {
        let h = dyadic_step(t, dt, levels);
        assert!(h <= dt * (1.0 + 1e-12));
        let steps = t / h;
        assert!((steps - steps.round()).abs() < 1e-9);
        assert_eq!(steps.round() as usize % (1 << levels), 0);
    }
    assert_eq!(dyadic_step(0.5, 0.5 / 512.0, 4), 0.5 / 512.0);
}

#[test]
fn convergence_study_needs_three_levels() {
    let cfg = small("trig", &[]);
    assert!(convergence_study(&cfg, &[0.02, 0.01]).is_err());
    assert!(convergence_study(&cfg, &[0.02, 0.01, 0.004]).is_err());
}

#[test]
fn trig_convergence_study_meets_the_multiplicative_order() {
    let mut cfg = small("trig", &[]);
    cfg.grid.t_end = 0.5;
    cfg.budget.paths = 200;
    let study = convergence_study(&cfg, &[4e-3, 2e-3, 1e-3]).unwrap();
    assert_eq!(study.expected_order, 0.4);
    assert!(study.pass, "{}", study.to_json());
    let mut buf = Vec::new();
    study.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
}
