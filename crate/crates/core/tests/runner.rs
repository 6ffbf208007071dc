//! Config handling and experiment dispatch as used by the command line.

use lorentz_core::config::{Experiment, RunConfig};
use lorentz_core::runner::{exit_code, run, EXIT_RUNTIME, EXIT_VALIDATION};
use lorentz_core::Error;

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = RunConfig {
        experiment: Experiment::Events,
        eps: 0.07,
        beta: Some(0.3),
        velocities: None,
        ..RunConfig::default()
    };
    cfg.replicas = 17;
    let text = cfg.to_toml_string().unwrap();
    let back = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn hash_ignores_threads_and_output_dir() {
    let a = RunConfig::default();
    let b = RunConfig {
        threads: Some(7),
        out: "elsewhere".into(),
        ..RunConfig::default()
    };
    assert_eq!(a.hash(), b.hash());
    let c = RunConfig {
        seed: 2,
        ..RunConfig::default()
    };
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn unknown_keys_are_rejected() {
    let err = RunConfig::from_toml_str("epsilon = 0.1\n").unwrap_err();
    assert_eq!(exit_code(&err), EXIT_VALIDATION);
}

#[test]
fn every_experiment_writes_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    for exp in Experiment::ALL {
        let cfg = RunConfig {
            experiment: exp,
            eps: 0.1,
            horizon: 5.0,
            replicas: 20,
            n_min: 8,
            n_max: 10,
            flight_replicas: 100,
            wiener_paths: 500,
            wiener_steps: 100,
            out: tmp.path().join(exp.name()),
            ..RunConfig::default()
        };
        let outcome = run(&cfg).unwrap();
        assert!(!outcome.files.is_empty(), "{}", exp.name());
        let m: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&outcome.manifest).unwrap()).unwrap();
        assert_eq!(m["experiment"], exp.name());
        assert_eq!(m["status"], "ok");
        assert_eq!(m["files"].as_array().unwrap().len(), outcome.files.len());
    }
}

#[test]
fn failed_validation_is_an_exit_2_error() {
    let cfg = RunConfig {
        experiment: Experiment::Mismatch,
        eps: 0.5,
        horizon: 10.0,
        ..RunConfig::default()
    };
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, Error::Inadmissible(_)));
    assert_eq!(exit_code(&err), EXIT_VALIDATION);
    assert_ne!(EXIT_VALIDATION, EXIT_RUNTIME);
}
