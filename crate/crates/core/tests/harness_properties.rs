use mudp_core::diagnostics::DiagnosticsRecord;
use mudp_core::harness::config::{parse_config, PRESET_NAMES};
use mudp_core::harness::output::format_csv;
use mudp_core::harness::run::run;
use mudp_core::integrator::OutcomeKind;
use proptest::prelude::*;

fn preset_config() -> impl Strategy<Value = String> {
    (0..PRESET_NAMES.len(), 0.01..1.0f64, 0.0..5.0f64, 0u64..1000, prop_oneof![Just(64usize), Just(128)])
        .prop_map(|(k, a, lambda, seed, n)| {
            let name = PRESET_NAMES[k];
            let lambda = if name == "mudp_reduction" { 0.0 } else { lambda };
            format!("preset = \"{name}\"\namplitude = {a}\nlambda = {lambda}\nn_points = {n}\nseed = {seed}\n")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resolved_config_round_trips(text in preset_config()) {
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_toml(), cfg.to_toml());
    }

    #[test]
    fn csv_cells_round_trip(t in any::<f64>().prop_filter("finite", |v| v.is_finite()), s in -1e300..1e300f64) {
        let r = DiagnosticsRecord {
            t,
            mean_u: s,
            mean_residual: 0.0,
            min_slope: -s,
            argmin_x: 0.5,
            max_abs_slope: s.abs(),
            sup_abs_u: 1.0,
            y_l1: 0.0,
            y_min: 0.0,
            y_max: 0.0,
            h1_y_sq: 0.0,
            h1_rhs: 0.0,
            h1_rhs_scale: 0.0,
            h1_balance_residual: None,
            transport_drift: Some(s),
        };
        let fields: Vec<String> = ["t", "mean_u", "min_slope", "h1_balance_residual", "transport_drift"]
            .iter()
            .map(|f| f.to_string())
            .collect();
        let text = format_csv(&[r.clone()], &fields).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        prop_assert_eq!(row.len(), 5);
        prop_assert_eq!(row[0].parse::<f64>().unwrap().to_bits(), t.to_bits());
        prop_assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), s.to_bits());
        prop_assert_eq!(row[2].parse::<f64>().unwrap().to_bits(), (-s).to_bits());
        prop_assert_eq!(row[3], "");
        prop_assert_eq!(row[4].parse::<f64>().unwrap().to_bits(), s.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reports_are_consistent_and_deterministic(text in preset_config()) {
        let text = format!("{text}solver = \"both\"\nm_particles = 64\n[integrator]\nt_end = 0.05\nsample_interval = 0.01\n");
        let cfg = parse_config(&text).unwrap();
        let a = run(&cfg, None).unwrap();
        let b = run(&cfg, None).unwrap();
        prop_assert_eq!(a.solvers.len(), 2);
        for (x, y) in a.solvers.iter().zip(&b.solvers) {
            prop_assert_eq!(&x.records, &y.records);
            prop_assert_eq!(x.t_detect.is_some(), x.outcome.kind != OutcomeKind::Completed);
            prop_assert!(x.records.iter().all(|r| r.t.is_finite() && r.min_slope.is_finite()));
        }
        prop_assert_eq!(a.t_detect.is_some(), a.outcome.kind == OutcomeKind::Blowup || a.outcome.kind == OutcomeKind::DtUnderflow);
        prop_assert_eq!(a.provenance.config_hash, b.provenance.config_hash);
    }
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = parse_config("preset = \"zero_mean_sine\"\namplitude = 1.0\nlambda = 3.14159\nn_points = 256\n").unwrap();
    assert_eq!(cfg.n_points, 256);
    assert_eq!(cfg.lambda, 3.14159);
    let text = cfg.to_toml();
    for key in ["m_particles", "slope_floor", "[integrator]", "t_end", "[sweep]"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
}

#[test]
fn unknown_keys_are_rejected_with_a_line() {
    let err = parse_config("preset = \"zero_mean_sine\"\nlambda = 1.0\nbogus = 3\n").unwrap_err().to_string();
    assert!(err.contains("bogus"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}
