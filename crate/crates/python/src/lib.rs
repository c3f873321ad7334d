//! Python module `pyweakkam`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use weakkam::barrier::{build_kernel, critical_value, default_v_max, peierls_barrier, projected_aubry, StateGrid};
use weakkam::commands::{self, Command};
use weakkam::config::ExperimentConfig;
use weakkam::error::Error;
use weakkam::flow::{find_periodic, integrate_variational, FlowConfig, NewtonConfig, PeriodGauge};
use weakkam::green::{classify_periodic, green_bundles, matrix_rows};
use weakkam::model::{CohomologyClass, CotangentState, LagrangianModel, TangentState};
use weakkam::occupation::{alpha_grid, GridParams};
use weakkam::selftest;

fn py_err(e: Error) -> PyErr {
    match commands::exit_code(&e) {
        commands::EXIT_VALIDATION => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn check_dim(model: &LagrangianModel, name: &str, v: &[f64]) -> PyResult<()> {
    if v.len() == model.dim() {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!(
            "{name} has {} entries, model dimension is {}",
            v.len(),
            model.dim()
        )))
    }
}

/// A Lagrangian `½vAv + b(x)·v − V(x) − ψ(x)` on the torus.
#[pyclass(name = "Model", module = "pyweakkam")]
struct PyModel {
    inner: LagrangianModel,
}

#[pymethods]
impl PyModel {
    /// `flat`, `flat1`, `pendulum` or `pendulum-product`.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        LagrangianModel::builtin(name).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        LagrangianModel::from_json(text).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_spec()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn lagrangian(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        check_dim(&self.inner, "x", &x)?;
        check_dim(&self.inner, "v", &v)?;
        Ok(self.inner.lagrangian(&x, &v))
    }

    fn hamiltonian(&self, x: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
        check_dim(&self.inner, "x", &x)?;
        check_dim(&self.inner, "p", &p)?;
        Ok(self.inner.hamiltonian(&x, &p))
    }

    /// Momentum `∂L/∂v` at `(x, v)`.
    fn legendre(&self, x: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        check_dim(&self.inner, "x", &x)?;
        check_dim(&self.inner, "v", &v)?;
        Ok(self.inner.legendre(&TangentState::new(x, v)).p)
    }

    fn __repr__(&self) -> String {
        format!("Model(dim={})", self.inner.dim())
    }
}

/// Experiment configuration; accepts the same JSON as `weakkam --config`.
#[pyclass(name = "Config", module = "pyweakkam")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => ExperimentConfig::from_json(text).map_err(py_err)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// Raises `ValueError` naming the offending field.
    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map(|_| ()).map_err(py_err)
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }
}

/// Runs a subcommand; returns `{"code", "artifacts", "lines"}`.
#[pyfunction]
fn run<'py>(py: Python<'py>, command: &str, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let command = Command::parse(command).map_err(py_err)?;
    let cfg = config.inner.clone();
    let out = py.detach(move || commands::run(command, &cfg));
    let d = PyDict::new(py);
    d.set_item("code", out.code)?;
    d.set_item("artifacts", out.artifacts.map(|p| p.display().to_string()))?;
    d.set_item("lines", out.lines)?;
    Ok(d)
}

/// `[(w, α(w))]` over the `res^n` lattice of `[−w_box, w_box]^n`.
#[pyfunction]
#[pyo3(signature = (model, w_box = 1.0, res = 5, grid = 32, step = 0.1))]
fn alpha_table(
    py: Python<'_>,
    model: &PyModel,
    w_box: f64,
    res: usize,
    grid: usize,
    step: f64,
) -> PyResult<Vec<(Vec<f64>, f64)>> {
    let m = model.inner.clone();
    let samples = py.detach(move || alpha_grid(&m, w_box, res, &GridParams::new(grid, step)));
    Ok(samples.map_err(py_err)?.iter().map(|s| s.point()).collect())
}

/// Critical value, Peierls barrier rows and projected Aubry points for one class.
#[pyfunction]
#[pyo3(signature = (model, w = None, grid = 32, step = 0.1, aubry_tol = 1e-3))]
fn barrier<'py>(
    py: Python<'py>,
    model: &PyModel,
    w: Option<Vec<f64>>,
    grid: usize,
    step: f64,
    aubry_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let m = model.inner.clone();
    let w = CohomologyClass::new(w.unwrap_or_else(|| vec![0.0; m.dim()]));
    check_dim(&m, "w", &w.w)?;
    let computed = py.detach(move || -> weakkam::error::Result<_> {
        let g = StateGrid::new(m.dim(), grid)?;
        let kernel = build_kernel(&m, &g, step, &w, default_v_max(&w))?;
        let c = critical_value(&kernel)?.c;
        let table = peierls_barrier(&kernel, c, 4.0, 64.0, 1e-3)?;
        let aubry: Vec<Vec<f64>> = projected_aubry(&table, aubry_tol).iter().map(|p| p.coords().to_vec()).collect();
        let n = table.h.size();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| table.get(i, j)).collect()).collect();
        Ok((c, rows, aubry, table.meta.residual))
    });
    let (c, rows, aubry, residual) = computed.map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("alpha", c)?;
    d.set_item("h", rows)?;
    d.set_item("aubry", aubry)?;
    d.set_item("residual", residual)?;
    Ok(d)
}

/// `(end_x, end_p, symplectic_error)` after flowing `(x, p)` for time `t`.
#[pyfunction]
#[pyo3(signature = (model, x, p, t, step = 1e-3))]
fn flow(model: &PyModel, x: Vec<f64>, p: Vec<f64>, t: f64, step: f64) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    check_dim(&model.inner, "x", &x)?;
    check_dim(&model.inner, "p", &p)?;
    let (traj, frame) =
        integrate_variational(&model.inner, &CotangentState::new(x, p), t, &FlowConfig::with_step(step))
            .map_err(py_err)?;
    let end = traj.end();
    Ok((end.base.coords().to_vec(), end.p.clone(), frame.symplectic_error()))
}

/// Slopes `(S₊, S₋)` of the Green bundles at `(x, p)`.
#[pyfunction]
#[pyo3(signature = (model, x, p, t_cap = 50.0, tol = 1e-6))]
fn green(
    model: &PyModel,
    x: Vec<f64>,
    p: Vec<f64>,
    t_cap: f64,
    tol: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_dim(&model.inner, "x", &x)?;
    check_dim(&model.inner, "p", &p)?;
    let g = green_bundles(&model.inner, &CotangentState::new(x, p), t_cap, tol, &FlowConfig::default())
        .map_err(py_err)?;
    Ok((matrix_rows(&g.plus.s), matrix_rows(&g.minus.s)))
}

/// Periodic orbit of fixed period through a guess, with its classification.
#[pyfunction]
#[pyo3(signature = (model, x, p, period = 1.0, t_cap = 200.0, tol = 1e-2))]
fn periodic_orbit<'py>(
    py: Python<'py>,
    model: &PyModel,
    x: Vec<f64>,
    p: Vec<f64>,
    period: f64,
    t_cap: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    check_dim(&model.inner, "x", &x)?;
    check_dim(&model.inner, "p", &p)?;
    let m = model.inner.clone();
    let computed = py.detach(move || -> weakkam::error::Result<_> {
        let cfg = FlowConfig::default();
        let guess = CotangentState::new(x, p);
        let orbit = find_periodic(&m, &guess, period, PeriodGauge::FixPeriod, &cfg, &NewtonConfig::default())?;
        let class = classify_periodic(&m, &orbit, t_cap, tol, &cfg)?;
        Ok((orbit, class))
    });
    let (orbit, class) = computed.map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("x", orbit.anchor.base.coords().to_vec())?;
    d.set_item("p", orbit.anchor.p.clone())?;
    d.set_item("period", orbit.period)?;
    d.set_item("residual", orbit.residual)?;
    d.set_item("floquet", orbit.floquet.iter().map(|c| (c.re, c.im)).collect::<Vec<_>>())?;
    d.set_item("kind", format!("{:?}", class.kind))?;
    d.set_item("rank", class.rank)?;
    d.set_item("consistent", class.consistent)?;
    Ok(d)
}

/// Acceptance rows `{"id", "name", "passed", "value", "threshold", "detail"}`.
#[pyfunction]
#[pyo3(signature = (ids = None, seed = 0))]
fn run_selftest<'py>(py: Python<'py>, ids: Option<Vec<u8>>, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let ids = ids.unwrap_or_else(|| selftest::CRITERIA.to_vec());
    if let Some(bad) = ids.iter().find(|i| !selftest::CRITERIA.contains(i)) {
        return Err(PyValueError::new_err(format!("no criterion {bad}")));
    }
    let rows: Vec<_> = py.detach(move || ids.iter().map(|&id| selftest::run_criterion(id, seed).row).collect());
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("id", r.id)?;
            d.set_item("name", r.name)?;
            d.set_item("passed", r.passed)?;
            d.set_item("value", r.value)?;
            d.set_item("threshold", r.threshold)?;
            d.set_item("detail", r.detail)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pyweakkam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_table, m)?)?;
    m.add_function(wrap_pyfunction!(barrier, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(green, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    m.add("EXIT_ACCEPTANCE", commands::EXIT_ACCEPTANCE)?;
    Ok(())
}
