//! Python bindings. Reports are returned as plain dicts and lists built from
//! the same JSON the command-line tool writes.

use std::sync::Arc;

use lorentz_core::config::RunConfig;
use lorentz_core::dynamics::{simulate_lorentz, Path};
use lorentz_core::environment::{collision_rate, BasePointProcess, EnvironmentView, Scatterers};
use lorentz_core::rng::{stream, Domain};
use lorentz_core::schedule::{self, Mode};
use lorentz_core::statistics::mismatch::EnvironmentMode;
use lorentz_core::statistics::{
    self as stats, DonskerParams, EnvironmentSpec, EventParams, GreenParams, MarginalParams,
    MismatchParams, QuenchedParams, VelocitySpec,
};
use lorentz_core::{Error, Vec3};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match lorentz_core::runner::exit_code(&e) {
        lorentz_core::runner::EXIT_VALIDATION => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Converts a serialisable value to Python objects through `json.loads`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

fn velocity_spec(n: usize, beta: Option<f64>, velocities: Option<Vec<[f64; 3]>>) -> VelocitySpec {
    match (velocities, beta) {
        (Some(v), _) => {
            let v: Vec<Vec3> = v.into_iter().map(|x| Vec3::from(x).normalize()).collect();
            VelocitySpec::explicit(&v)
        }
        (None, Some(beta)) => VelocitySpec::cap(n, beta),
        (None, None) => VelocitySpec::Uniform { n },
    }
}

fn path_points(path: &Path) -> Vec<[f64; 4]> {
    let mut out = vec![[0.0; 4]];
    out.extend(
        path.events
            .iter()
            .map(|e| [e.time, e.position.x, e.position.y, e.position.z]),
    );
    let end = path.endpoint();
    out.push([path.horizon, end.x, end.y, end.z]);
    out
}

/// A rescaled Poisson scatterer field at scale `eps`.
#[pyclass(name = "Environment", module = "lorentz_gas", frozen)]
struct PyEnvironment {
    view: EnvironmentView,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    #[pyo3(signature = (seed, eps, horizon, rho = 1.0 / std::f64::consts::PI, cell_side = 1.0))]
    fn new(seed: u64, eps: f64, horizon: f64, rho: f64, cell_side: f64) -> PyResult<Self> {
        let base = BasePointProcess::new(
            seed,
            rho,
            cell_side,
            BasePointProcess::world_radius_for(horizon, eps),
        )
        .map_err(py_err)?;
        let view = EnvironmentView::new(Arc::new(base), eps).map_err(py_err)?;
        Ok(Self { view })
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.view.radius()
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.view.rate()
    }

    /// Scatterer centres inside the axis-aligned box `[lo, hi]`.
    fn centres_in_box(&self, lo: [f64; 3], hi: [f64; 3]) -> PyResult<Vec<[f64; 3]>> {
        let c = self
            .view
            .centres_in_box(Vec3::from(lo), Vec3::from(hi))
            .map_err(py_err)?;
        Ok(c.iter().map(|v| [v.x, v.y, v.z]).collect())
    }

    /// Lorentz trajectory from the origin as rows `[t, x, y, z]`, from
    /// `t = 0` through every collision to `t = horizon`.
    fn trajectory(&self, v0: [f64; 3], horizon: f64) -> PyResult<Vec<[f64; 4]>> {
        let v = Vec3::from(v0).normalize();
        let path = simulate_lorentz(&self.view, &v, horizon).map_err(py_err)?;
        Ok(path_points(&path))
    }
}

/// Random flight from the origin as rows `[t, x, y, z]`.
#[pyfunction]
#[pyo3(signature = (v0, horizon, seed, rate = 1.0, replica = 0))]
fn sample_flight(
    v0: [f64; 3],
    horizon: f64,
    seed: u64,
    rate: f64,
    replica: u64,
) -> PyResult<Vec<[f64; 4]>> {
    let mut rng = stream(seed, Domain::Flight, &[replica]);
    let v = Vec3::from(v0).normalize();
    let path =
        lorentz_core::flight::sample_flight(&mut rng, rate, &v, horizon, 0.0).map_err(py_err)?;
    Ok(path_points(&path))
}

/// Scatterer radius `ε^{3/2}`.
#[pyfunction]
fn radius_of(eps: f64) -> PyResult<f64> {
    schedule::radius_of(eps, lorentz_core::DIM).map_err(py_err)
}

/// Minimum pairwise angle of a set of directions.
#[pyfunction]
fn min_angle(velocities: Vec<[f64; 3]>) -> PyResult<f64> {
    let v: Vec<Vec3> = velocities.into_iter().map(Vec3::from).collect();
    schedule::min_angle(&v).map_err(py_err)
}

/// Exact per-coordinate variance of a flight endpoint at time `horizon`.
#[pyfunction]
#[pyo3(signature = (horizon, rate = 1.0))]
fn flight_covariance(horizon: f64, rate: f64) -> f64 {
    lorentz_core::flight::flight_covariance(rate, horizon)
}

/// `∫ (|x|⁻² + |x|⁻¹) dx` over the ball of radius `radius` at `distance`.
#[pyfunction]
fn gamma_ball_integral(distance: f64, radius: f64) -> PyResult<f64> {
    stats::gamma_ball_integral(distance, radius).map_err(py_err)
}

/// Admissibility report for the geometric schedule rows `n_min..=n_max`.
#[pyfunction]
#[pyo3(signature = (n_min, n_max, mode = "quenched", budget = schedule::DEFAULT_BUDGET))]
fn check_geometric_schedule<'py>(
    py: Python<'py>,
    n_min: u32,
    n_max: u32,
    mode: &str,
    budget: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: Mode = parse(mode)?;
    let rows = schedule::geometric_family(n_min, n_max).map_err(py_err)?;
    let rep = schedule::check_schedule(&rows, mode, budget).map_err(py_err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (eps, horizon, n = 2, replicas = 1000, seed = 1, beta = None, velocities = None, mode = "annealed", force = false))]
#[allow(clippy::too_many_arguments)]
fn estimate_mismatch_probability<'py>(
    py: Python<'py>,
    eps: f64,
    horizon: f64,
    n: usize,
    replicas: usize,
    seed: u64,
    beta: Option<f64>,
    velocities: Option<Vec<[f64; 3]>>,
    mode: &str,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let p = MismatchParams {
        eps,
        horizon,
        velocities: velocity_spec(n, beta, velocities),
        replicas,
        seed,
        mode: parse::<EnvironmentMode>(mode)?,
        environment: EnvironmentSpec::default(),
        force,
    };
    let rep = py
        .detach(|| stats::estimate_mismatch_probability(&p))
        .map_err(py_err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (r, horizon, n = 2, replicas = 1000, seed = 1, beta = None, velocities = None, rate = 1.0))]
#[allow(clippy::too_many_arguments)]
fn estimate_event_probabilities<'py>(
    py: Python<'py>,
    r: f64,
    horizon: f64,
    n: usize,
    replicas: usize,
    seed: u64,
    beta: Option<f64>,
    velocities: Option<Vec<[f64; 3]>>,
    rate: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let p = EventParams {
        r,
        rate,
        horizon,
        velocities: velocity_spec(n, beta, velocities),
        replicas,
        seed,
    };
    let rep = py
        .detach(|| stats::estimate_event_probabilities(&p))
        .map_err(py_err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (centre, radius, r, replicas = 1000, seed = 1, rate = 1.0, escape_factor = stats::green::ESCAPE_FACTOR))]
#[allow(clippy::too_many_arguments)]
fn green_occupation<'py>(
    py: Python<'py>,
    centre: [f64; 3],
    radius: f64,
    r: f64,
    replicas: usize,
    seed: u64,
    rate: f64,
    escape_factor: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let p = GreenParams {
        centre,
        radius,
        r,
        rate,
        replicas,
        seed,
        escape_factor,
    };
    let rep = py.detach(|| stats::green_occupation(&p)).map_err(py_err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (horizon, replicas = 10_000, seed = 1, rate = 1.0, wiener_paths = 100_000, wiener_steps = 1_000))]
fn donsker_test<'py>(
    py: Python<'py>,
    horizon: f64,
    replicas: usize,
    seed: u64,
    rate: f64,
    wiener_paths: usize,
    wiener_steps: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let p = DonskerParams {
        rate,
        horizon,
        replicas,
        seed,
        wiener_paths,
        wiener_steps,
    };
    let rep = py.detach(|| stats::donsker_test(&p)).map_err(py_err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (eps, horizon, n = 2, events_per_flight = 5, replicas = 1000, seed = 1))]
fn coupling_marginals<'py>(
    py: Python<'py>,
    eps: f64,
    horizon: f64,
    n: usize,
    events_per_flight: usize,
    replicas: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let p = MarginalParams {
        eps,
        horizon,
        n_traj: n,
        events_per_flight,
        replicas,
        seed,
        environment: EnvironmentSpec::default(),
    };
    let rep = py
        .detach(|| stats::coupling_marginals(&p))
        .map_err(py_err)?;
    to_py(py, &rep)
}

/// Quenched averages on the geometric schedule rows `n_min..=n_max`.
#[pyfunction]
#[pyo3(signature = (n_min, n_max, seed = 1, flight_replicas = 10_000, wiener_paths = 100_000, wiener_steps = 1_000, force = false))]
#[allow(clippy::too_many_arguments)]
fn quenched_average_experiment<'py>(
    py: Python<'py>,
    n_min: u32,
    n_max: u32,
    seed: u64,
    flight_replicas: usize,
    wiener_paths: usize,
    wiener_steps: usize,
    force: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let rows = schedule::geometric_family(n_min, n_max).map_err(py_err)?;
    let p = QuenchedParams {
        flight_replicas,
        wiener_paths,
        wiener_steps,
        force,
        ..QuenchedParams::new(seed, rows, stats::dictionary())
    };
    let rep = py
        .detach(|| stats::quenched_average_experiment(&p))
        .map_err(py_err)?;
    to_py(py, &rep)
}

/// Runs a flat TOML config as the command-line tool would and returns the
/// one-line summary.
#[pyfunction]
fn run_config(py: Python<'_>, toml: &str) -> PyResult<String> {
    let cfg = RunConfig::from_toml_str(toml).map_err(py_err)?;
    let out = py
        .detach(|| lorentz_core::runner::run(&cfg))
        .map_err(py_err)?;
    Ok(out.summary)
}

/// Collision rate `λ = ρπ` for base intensity `rho`.
#[pyfunction]
#[pyo3(name = "collision_rate")]
fn py_collision_rate(rho: f64) -> f64 {
    collision_rate(rho)
}

#[pymodule]
pub fn lorentz_gas(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnvironment>()?;
    m.add_function(wrap_pyfunction!(sample_flight, m)?)?;
    m.add_function(wrap_pyfunction!(radius_of, m)?)?;
    m.add_function(wrap_pyfunction!(min_angle, m)?)?;
    m.add_function(wrap_pyfunction!(flight_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_ball_integral, m)?)?;
    m.add_function(wrap_pyfunction!(check_geometric_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_mismatch_probability, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_event_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(green_occupation, m)?)?;
    m.add_function(wrap_pyfunction!(donsker_test, m)?)?;
    m.add_function(wrap_pyfunction!(coupling_marginals, m)?)?;
    m.add_function(wrap_pyfunction!(quenched_average_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(py_collision_rate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
