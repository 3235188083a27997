use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hts_routing::arrivals;
use hts_routing::controllers::{self, PolicyKind, SolveMode};
use hts_routing::harness;
use hts_routing::io::{emit_outputs, parse_config};
use hts_routing::{plant, ScenarioConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn mode(full_lp: bool) -> SolveMode {
    if full_lp {
        SolveMode::Full
    } else {
        SolveMode::Symmetric
    }
}

fn policy(name: &str) -> PyResult<PolicyKind> {
    name.parse().map_err(value_err)
}

type Matrix = Vec<Vec<f64>>;

fn rows(a: &ndarray::Array2<f64>) -> Matrix {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Scenario parameters. Built from a YAML or JSON mapping; missing keys take
/// the defaults.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: parse_config(text).map_err(value_err)?,
        })
    }

    /// Returns a validated copy with the given keys replaced.
    fn with_overrides(&self, overrides: &Bound<'_, PyDict>) -> PyResult<Self> {
        let mut doc = serde_json::to_value(&self.inner).map_err(runtime_err)?;
        let py = overrides.py();
        let json = py.import("json")?;
        let text: String = json.call_method1("dumps", (overrides,))?.extract()?;
        let patch: serde_json::Value = serde_json::from_str(&text).map_err(value_err)?;
        if let (Some(base), Some(patch)) = (doc.as_object_mut(), patch.as_object()) {
            for (k, v) in patch {
                base.insert(k.clone(), v.clone());
            }
        }
        PyConfig::new(&doc.to_string())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(runtime_err)
    }

    #[getter]
    fn num_modules(&self) -> usize {
        self.inner.num_modules
    }

    #[getter]
    fn num_priorities(&self) -> usize {
        self.inner.num_priorities
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }

    #[getter]
    fn num_runs(&self) -> usize {
        self.inner.num_runs
    }

    #[getter]
    fn base_seed(&self) -> u64 {
        self.inner.base_seed
    }

    #[getter]
    fn loss_costs(&self) -> Vec<f64> {
        self.inner.loss_costs.clone()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Config(M={}, P={}, T={}, W={}, runs={}, seed={})",
            c.num_modules, c.num_priorities, c.horizon, c.window, c.num_runs, c.base_seed
        )
    }
}

/// Arrival rate for 1-based step `t` and priority `p`.
#[pyfunction]
fn lambda_schedule(config: &PyConfig, t: usize, p: usize) -> PyResult<f64> {
    hts_routing::lambda_schedule(&config.inner, t, p).map_err(value_err)
}

/// Realized and expected demand of one run, each as `T` rows of `P` values.
#[pyfunction]
fn generate_demands(config: &PyConfig, run: u64) -> PyResult<(Matrix, Matrix)> {
    let d = arrivals::generate_demands(&config.inner, run).map_err(value_err)?;
    Ok((rows(&d.realized), rows(&d.expected)))
}

/// Solves an offline policy on the given `T x P` flows. Returns the objective
/// and the per-step weights of module 0.
#[pyfunction]
#[pyo3(signature = (config, method, flows, full_lp = false))]
fn solve_offline(
    config: &PyConfig,
    method: &str,
    flows: Matrix,
    full_lp: bool,
) -> PyResult<(f64, Matrix)> {
    let c = &config.inner;
    if flows.len() != c.horizon || flows.iter().any(|r| r.len() != c.num_priorities) {
        return Err(PyValueError::new_err("flows must be horizon x num_priorities"));
    }
    let flat: Vec<f64> = flows.into_iter().flatten().collect();
    let a = ndarray::Array2::from_shape_vec((c.horizon, c.num_priorities), flat).map_err(value_err)?;
    let traj = controllers::decide_offline(policy(method)?, c, a.view(), mode(full_lp)).map_err(runtime_err)?;
    let weights = traj.decisions.iter().map(|d| d.weights.row(0).to_vec()).collect();
    Ok((traj.objective, weights))
}

/// Plays one method against the demand of run `run`.
#[pyfunction]
#[pyo3(signature = (config, method, run = 0, full_lp = false))]
fn rollout<'py>(
    py: Python<'py>,
    config: &PyConfig,
    method: &str,
    run: u64,
    full_lp: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let c = &config.inner;
    let demands = arrivals::generate_demands(c, run).map_err(value_err)?;
    let r = plant::rollout(c, policy(method)?, &demands, run, mode(full_lp)).map_err(runtime_err)?;
    let out = PyDict::new(py);
    out.set_item("method", &r.method)?;
    out.set_item("cumulative_cost", r.cumulative_cost)?;
    out.set_item("lp_objective", r.lp_objective)?;
    out.set_item("flush_cost", r.flush_cost)?;
    out.set_item("loss", rows(&r.loss_series()))?;
    out.set_item("outflow", rows(&r.outflow_series()))?;
    out.set_item("queue", rows(&r.queue_series()))?;
    Ok(out)
}

/// Paired Monte-Carlo comparison. Returns `{method: {mean_cost, std_cost,
/// run_costs, gap_percent}}`.
#[pyfunction]
#[pyo3(signature = (config, methods = None, full_lp = false))]
fn run_monte_carlo<'py>(
    py: Python<'py>,
    config: &PyConfig,
    methods: Option<Vec<String>>,
    full_lp: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let c = &config.inner;
    let kinds = match methods {
        Some(names) => names.iter().map(|n| policy(n)).collect::<PyResult<Vec<_>>>()?,
        None => PolicyKind::standard_set(c.window),
    };
    let m = py
        .detach(|| harness::run_monte_carlo_with(c, &kinds, mode(full_lp)))
        .map_err(runtime_err)?;
    let out = PyDict::new(py);
    for mm in &m.methods {
        let d = PyDict::new(py);
        d.set_item("mean_cost", mm.mean_cost)?;
        d.set_item("std_cost", mm.std_cost)?;
        d.set_item("run_costs", mm.run_costs.clone())?;
        d.set_item("gap_percent", m.gaps.as_ref().and_then(|g| g.percent(&mm.method)))?;
        out.set_item(&mm.method, d)?;
    }
    Ok(out)
}

/// Mean MPC cost per window on shared demand.
#[pyfunction]
#[pyo3(signature = (config, windows, full_lp = false))]
fn sweep_window(py: Python<'_>, config: &PyConfig, windows: Vec<usize>, full_lp: bool) -> PyResult<Vec<(usize, f64)>> {
    let c = &config.inner;
    let s = py
        .detach(|| harness::sweep_window_with(c, &windows, mode(full_lp)))
        .map_err(runtime_err)?;
    Ok(s.rows.iter().map(|r| (r.window, r.mean_cost)).collect())
}

/// Runs the standard comparison and writes summary, series and charts to `out_dir`.
/// Returns the written paths.
#[pyfunction]
fn compare(py: Python<'_>, config: &PyConfig, out_dir: &str) -> PyResult<Vec<String>> {
    let c = &config.inner;
    let m = py
        .detach(|| harness::run_monte_carlo(c, &PolicyKind::standard_set(c.window)))
        .map_err(runtime_err)?;
    let b = emit_outputs(&m, None, std::path::Path::new(out_dir)).map_err(runtime_err)?;
    let mut paths = vec![b.summary, b.timeseries];
    paths.extend(b.charts);
    Ok(paths.into_iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn hts_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(lambda_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(generate_demands, m)?)?;
    m.add_function(wrap_pyfunction!(solve_offline, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(run_monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_window, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
