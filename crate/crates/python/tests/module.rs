use lorentz_gas::lorentz_gas as module;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyModule>)>(f: F) {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(module);
        Python::initialize();
    });
    Python::attach(|py| {
        let m = py.import("lorentz_gas").unwrap();
        f(py, &m);
    });
}

#[test]
fn radius_and_rate() {
    with_module(|_, m| {
        let r: f64 = m
            .call_method1("radius_of", (0.01,))
            .unwrap()
            .extract()
            .unwrap();
        assert!((r - 1e-3).abs() < 1e-15);
        let lam: f64 = m
            .call_method1("collision_rate", (1.0 / std::f64::consts::PI,))
            .unwrap()
            .extract()
            .unwrap();
        assert!((lam - 1.0).abs() < 1e-15);
    });
}

#[test]
fn environment_trajectory_is_reproducible() {
    with_module(|_, m| {
        let env = m
            .getattr("Environment")
            .unwrap()
            .call1((7u64, 0.1, 5.0))
            .unwrap();
        let a: Vec<[f64; 4]> = env
            .call_method1("trajectory", ([0.0, 0.0, 1.0], 5.0))
            .unwrap()
            .extract()
            .unwrap();
        let b: Vec<[f64; 4]> = env
            .call_method1("trajectory", ([0.0, 0.0, 1.0], 5.0))
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], [0.0; 4]);
        assert_eq!(a.last().unwrap()[0], 5.0);
    });
}

#[test]
fn reports_are_dicts() {
    with_module(|py, m| {
        let kw = PyDict::new(py);
        kw.set_item("replicas", 50).unwrap();
        let rep = m
            .getattr("estimate_mismatch_probability")
            .unwrap()
            .call((0.05, 10.0), Some(&kw))
            .unwrap();
        let rep = rep.cast::<PyDict>().unwrap();
        let failures: u64 = rep
            .get_item("identity_failures")
            .unwrap()
            .unwrap()
            .extract()
            .unwrap();
        assert_eq!(failures, 0);
    });
}

#[test]
fn validation_errors_raise_value_error() {
    with_module(|py, m| {
        let err = m
            .call_method1("gamma_ball_integral", (1.0, 2.0))
            .unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let err = m.call_method1("radius_of", (-1.0,)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}
