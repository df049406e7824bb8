//! Python bindings: fields as lists of floats on the uniform grid,
//! reports as plain dictionaries.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mudp_core::diagnostics::{self, logistic_predict};
use mudp_core::eulerian::evolve as evolve_eulerian;
use mudp_core::harness::config::{load_config, parse_config, SimConfig};
use mudp_core::harness::run::run;
use mudp_core::harness::studies::{exact_zero_mean, lambda_sweep, perturbation_probe};
use mudp_core::harness::validate::operator_suite;
use mudp_core::integrator::IntegratorConfig;
use mudp_core::lagrangian::{self, ParticleEnsemble};
use mudp_core::spectral::{self, GridSpec, Quadrature, RealField};
use mudp_core::MudpError;

fn err(e: MudpError) -> PyErr {
    match e {
        MudpError::Io(_) | MudpError::Json(_) | MudpError::Overflow { .. } | MudpError::Invariant(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn field(values: Vec<f64>) -> PyResult<RealField> {
    let grid = GridSpec::new(values.len()).map_err(err)?;
    RealField::new(grid, values).map_err(err)
}

/// Serializes through JSON into Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rule(name: &str) -> PyResult<Quadrature> {
    match name {
        "kink_corrected" => Ok(Quadrature::KinkCorrected),
        "trapezoid" => Ok(Quadrature::Trapezoid),
        _ => Err(PyValueError::new_err(format!("unknown quadrature `{name}`"))),
    }
}

#[pyfunction]
fn mean(values: Vec<f64>) -> PyResult<f64> {
    Ok(spectral::mean(&field(values)?))
}

#[pyfunction]
fn derivative(values: Vec<f64>, order: u32) -> PyResult<Vec<f64>> {
    Ok(spectral::derivative(&field(values)?, order).map_err(err)?.into_values())
}

/// `Λ_μ² f = μ(f) − f_xx`.
#[pyfunction]
fn apply_lambda_mu2(values: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(spectral::apply_lambda_mu2(&field(values)?).into_values())
}

/// `Λ_μ^{−2} f` by route `spectral`, `green` or `closed_form`.
#[pyfunction]
#[pyo3(signature = (values, route = "spectral", quadrature = "kink_corrected"))]
fn apply_lambda_mu2_inv(values: Vec<f64>, route: &str, quadrature: &str) -> PyResult<Vec<f64>> {
    let f = field(values)?;
    let q = rule(quadrature)?;
    let out = match route {
        "spectral" => spectral::apply_lambda_mu2_inv_spectral(&f),
        "green" => spectral::apply_lambda_mu2_inv_green_with(&f, q),
        "closed_form" => spectral::apply_lambda_mu2_inv_closedform_with(&f, q),
        _ => return Err(PyValueError::new_err(format!("unknown route `{route}`"))),
    };
    Ok(out.into_values())
}

#[pyfunction]
fn predict_blowup<'py>(py: Python<'py>, values: Vec<f64>, lam: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &logistic_predict(&field(values)?, lam).map_err(err)?)
}

/// Exact zero-mean solution on the grid of `values` at time `t`.
#[pyfunction]
fn exact_solution(values: Vec<f64>, lam: f64, t: f64) -> PyResult<Vec<f64>> {
    let u0 = field(values)?;
    Ok(exact_zero_mean(&u0, lam, t, u0.grid()).into_values())
}

/// Eulerian run; returns `(times, fields, outcome)`.
#[pyfunction]
#[pyo3(signature = (values, lam, t_end, sample_interval = 0.01, dt = 1e-3))]
fn evolve<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    lam: f64,
    t_end: f64,
    sample_interval: f64,
    dt: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Bound<'py, PyAny>)> {
    let cfg = IntegratorConfig {
        t_end,
        sample_interval,
        dt_init: dt,
        ..IntegratorConfig::default()
    };
    let r = evolve_eulerian(&field(values)?, lam, &cfg).map_err(err)?;
    let times = r.samples.iter().map(|s| s.t).collect();
    let fields = r.samples.iter().map(|s| s.u.values().to_vec()).collect();
    Ok((times, fields, to_py(py, &r.outcome)?))
}

#[pyfunction]
#[pyo3(signature = (seed = 2024))]
fn validate_ops<'py>(py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &operator_suite(seed))
}

/// Particle discretization of the flow map.
#[pyclass(name = "Particles", module = "mudp", skip_from_py_object)]
#[derive(Clone)]
struct PyParticles {
    inner: ParticleEnsemble,
}

#[pymethods]
impl PyParticles {
    #[new]
    #[pyo3(signature = (values, m_particles, lam = 0.0))]
    fn new(values: Vec<f64>, m_particles: usize, lam: f64) -> PyResult<Self> {
        let inner = lagrangian::init_particles_with_lambda(&field(values)?, m_particles, lam).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.inner.positions.clone()
    }

    #[getter]
    fn stretches(&self) -> Vec<f64> {
        self.inner.stretches.clone()
    }

    #[getter]
    fn initial_momenta(&self) -> Vec<f64> {
        self.inner.initial_momenta.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn velocity_at(&self, z: f64) -> f64 {
        lagrangian::velocity_at(&self.inner, z)
    }

    fn slope_at(&self, z: f64) -> f64 {
        lagrangian::slope_at(&self.inner, z)
    }

    fn transport_drift(&self) -> f64 {
        diagnostics::transport_drift(&self.inner)
    }

    /// Velocity on an `n_points` grid from the particle momentum.
    fn velocity_on_grid(&self, n_points: usize) -> PyResult<Vec<f64>> {
        let grid = GridSpec::new(n_points).map_err(err)?;
        Ok(lagrangian::spectral_velocity(&self.inner, grid).into_values())
    }

    /// Runs to `t_end`; returns the sampled ensembles and the outcome.
    #[pyo3(signature = (t_end, sample_interval = 0.01, dt = 1e-3))]
    fn evolve<'py>(
        &self,
        py: Python<'py>,
        t_end: f64,
        sample_interval: f64,
        dt: f64,
    ) -> PyResult<(Vec<PyParticles>, Bound<'py, PyAny>)> {
        let cfg = IntegratorConfig {
            t_end,
            sample_interval,
            dt_init: dt,
            ..IntegratorConfig::default()
        };
        let r = lagrangian::evolve_particles(&self.inner, &cfg).map_err(err)?;
        let samples = r.samples.into_iter().map(|inner| PyParticles { inner }).collect();
        Ok((samples, to_py(py, &r.outcome)?))
    }
}

/// Validated experiment configuration.
#[pyclass(name = "Config", module = "mudp", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_config(path).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points
    }

    #[getter]
    fn m_particles(&self) -> usize {
        self.inner.m_particles
    }

    fn initial_field(&self) -> Vec<f64> {
        self.inner.initial_field().into_values()
    }

    /// Runs the configured solvers; writes outputs when `out_dir` is given.
    #[pyo3(signature = (out_dir = None))]
    fn run<'py>(&self, py: Python<'py>, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.inner.clone();
        let report = py.detach(|| run(&cfg, out_dir.as_deref())).map_err(err)?;
        let out = to_py(py, &report)?;
        let records = PyDict::new(py);
        for s in &report.solvers {
            records.set_item(format!("{:?}", s.solver).to_lowercase(), to_py(py, &s.records)?)?;
        }
        out.set_item("records", records)?;
        Ok(out)
    }

    fn sweep<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.inner.clone();
        let rows = py.detach(|| lambda_sweep(&cfg)).map_err(err)?;
        to_py(py, &rows)
    }

    fn perturb<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.inner.clone();
        let report = py.detach(|| perturbation_probe(&cfg)).map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Config(n_points={}, lambda={})", self.inner.n_points, self.inner.lambda)
    }
}

#[pymodule]
fn mudp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mean, m)?)?;
    m.add_function(wrap_pyfunction!(derivative, m)?)?;
    m.add_function(wrap_pyfunction!(apply_lambda_mu2, m)?)?;
    m.add_function(wrap_pyfunction!(apply_lambda_mu2_inv, m)?)?;
    m.add_function(wrap_pyfunction!(predict_blowup, m)?)?;
    m.add_function(wrap_pyfunction!(exact_solution, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(validate_ops, m)?)?;
    m.add_class::<PyParticles>()?;
    m.add_class::<PyConfig>()?;
    Ok(())
}
