use std::io::Write;

use semopt_core::config::{load_config, parse_config, ConfigError, SweepParameter, DEFAULT_CONFIG};
use semopt_core::orchestrator::Scheme;
use semopt_core::{dbm_to_watts, watts_to_dbm};

fn default_with(edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(DEFAULT_CONFIG).unwrap();
    edit(&mut v);
    v.to_string()
}

#[test]
fn shipped_default_is_the_table_scenario() {
    let exp = parse_config(DEFAULT_CONFIG, &[]).unwrap();
    let s = exp.scenario(7).unwrap();
    assert_eq!(s.num_users, 4);
    assert_eq!(s.num_antennas, 8);
    assert_eq!(s.bandwidth_hz, 10e6);
    assert_eq!(s.comp_power_coeff, 1.0);
    assert_eq!(s.max_power_w, 1.0);
    assert!((s.noise_power_w - 1e-9).abs() < 1e-24);
    assert_eq!(s.min_semantic_rate_bps, vec![0.0; 4]);
    assert_eq!(s.min_ratio, vec![0.25; 4]);
    assert_eq!(exp.schemes, Scheme::ALL.to_vec());
    assert_eq!(exp.seeds, vec![7]);
    assert!(exp.sweep.is_none());
}

#[test]
fn shipped_file_matches_embedded_copy() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default.json");
    let from_file = load_config(&path, &[]).unwrap();
    assert_eq!(from_file, parse_config(DEFAULT_CONFIG, &[]).unwrap());
}

#[test]
fn shipped_sweeps_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/sweeps");
    let mut params = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let exp = load_config(&entry.unwrap().path(), &[]).unwrap();
        let sweep = exp.sweep.unwrap();
        assert!(sweep.values.len() >= 4);
        assert!(exp.seeds.len() >= 10);
        params.push(sweep.parameter);
    }
    for p in SweepParameter::ALL {
        assert!(params.contains(&p), "no sweep over {p}");
    }
}

#[test]
fn omitted_optionals_take_defaults() {
    let text = default_with(|v| {
        let sc = v["scenario"].as_object_mut().unwrap();
        sc.remove("min_semantic_rate_bps");
        sc.remove("min_ratio");
        sc.remove("noise_power_dbm");
        v.as_object_mut().unwrap().remove("experiment");
    });
    let exp = parse_config(&text, &[]).unwrap();
    let s = exp.scenario(1).unwrap();
    assert_eq!(s.min_semantic_rate_bps, vec![0.0; 4]);
    assert_eq!(s.min_ratio, vec![0.25; 4]);
    assert_eq!(watts_to_dbm(s.noise_power_w).round(), -60.0);
    assert_eq!(exp.seeds, vec![7]);
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let text = default_with(|v| {
        let sc = v["scenario"].as_object_mut().unwrap();
        let b = sc.remove("bandwidth_hz").unwrap();
        sc.insert("bandwdith_hz".into(), b);
    });
    let err = parse_config(&text, &[]).unwrap_err().to_string();
    assert!(err.contains("bandwdith_hz"), "{err}");
    let text = default_with(|v| {
        v["experiment"]["colour"] = "blue".into();
    });
    let err = parse_config(&text, &[]).unwrap_err().to_string();
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn syntax_errors_carry_position() {
    let err = parse_config("{\n  \"scenario\": {\n    \"num_users\": 4,,\n", &[]).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
    let text = default_with(|v| v["scenario"]["num_users"] = "four".into());
    let err = parse_config(&text, &[]).unwrap_err().to_string();
    assert!(err.contains("scenario.num_users"), "{err}");
}

#[test]
fn validation_errors_name_fields() {
    let text = default_with(|v| v["scenario"]["min_ratio"] = 0.0.into());
    match parse_config(&text, &[]).unwrap_err() {
        ConfigError::Scenario(e) => assert!(e.names("min_ratio")),
        other => panic!("{other}"),
    }
    let text = default_with(|v| v["comp_load"]["boundaries"] = serde_json::json!([0.5, 0.5, 0.25]));
    assert!(matches!(parse_config(&text, &[]), Err(ConfigError::CompLoad(_))));
    let text = default_with(|v| {
        v["experiment"]["sweep"] = serde_json::json!({"parameter": "bandwidth_hz", "values": [2e6, 1e6]})
    });
    assert!(matches!(parse_config(&text, &[]), Err(ConfigError::Experiment(_))));
    let text = default_with(|v| v["experiment"]["schemes"] = serde_json::json!([]));
    assert!(matches!(parse_config(&text, &[]), Err(ConfigError::Experiment(_))));
}

#[test]
fn overrides_apply_and_stay_strict() {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let exp = parse_config(
        DEFAULT_CONFIG,
        &set(&["scenario.max_power_dbm=20", "experiment.schemes=[\"psc_sdma\"]", "scenario.min_ratio=[0.3,0.4,0.5,0.6]"]),
    )
    .unwrap();
    let s = exp.scenario(1).unwrap();
    assert!((s.max_power_w - 0.1).abs() < 1e-15);
    assert_eq!(s.min_ratio, vec![0.3, 0.4, 0.5, 0.6]);
    assert_eq!(exp.schemes, vec![Scheme::PscSdma]);

    let exp = parse_config(DEFAULT_CONFIG, &set(&["experiment.solver.max_outer=3"])).unwrap();
    assert_eq!(exp.options.max_outer, 3);

    let err = parse_config(DEFAULT_CONFIG, &set(&["scenario.bandwdith_hz=1"])).unwrap_err();
    assert!(err.to_string().contains("bandwdith_hz"));
    assert!(matches!(
        parse_config(DEFAULT_CONFIG, &set(&["scenario"])),
        Err(ConfigError::Override(_))
    ));
}

#[test]
fn sweep_parameters_apply_in_their_units() {
    let exp = parse_config(DEFAULT_CONFIG, &[]).unwrap();
    for (p, v) in [
        (SweepParameter::CompPowerCoeff, 2.0),
        (SweepParameter::MaxPowerDbm, 40.0),
        (SweepParameter::BandwidthHz, 2e6),
        (SweepParameter::NoisePowerDbm, -50.0),
    ] {
        let s = exp.scenario_at(3, p, v).unwrap();
        assert!((p.read(&s) - v).abs() <= 1e-9 * v.abs(), "{p}");
        assert_eq!(p.as_str().parse::<SweepParameter>().unwrap(), p);
    }
    assert_eq!(exp.scenario_at(3, SweepParameter::MaxPowerDbm, 40.0).unwrap().max_power_w, dbm_to_watts(40.0));
}

#[test]
fn per_user_path_loss() {
    let text = default_with(|v| v["scenario"]["path_loss_db"] = serde_json::json!([0.0, 10.0, 0.0, 0.0]));
    let exp = parse_config(&text, &[]).unwrap();
    let plain = parse_config(DEFAULT_CONFIG, &[]).unwrap().scenario(5).unwrap();
    let lossy = exp.scenario(5).unwrap();
    let ratio = lossy.channel_norm(1).powi(2) / plain.channel_norm(1).powi(2);
    assert!((ratio - 0.1).abs() < 1e-12);
    assert_eq!(lossy.channels[0], plain.channels[0]);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_config(&dir.path().join("nope.json"), &[]).unwrap_err();
    assert!(matches!(err, ConfigError::Io { .. }));
    let path = dir.path().join("c.json");
    std::fs::File::create(&path).unwrap().write_all(DEFAULT_CONFIG.as_bytes()).unwrap();
    assert!(load_config(&path, &[]).is_ok());
}

#[test]
fn dbm_conversion_is_exact_at_30() {
    assert_eq!(dbm_to_watts(30.0), 1.0);
    assert_eq!(watts_to_dbm(1.0), 30.0);
}
