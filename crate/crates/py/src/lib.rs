//! Python bindings. Configs and reports cross the boundary as JSON-shaped
//! Python objects; vectors as lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chebhopgd::config::RunConfig;
use chebhopgd::estimate::{add_noise, refine_estimate};
use chebhopgd::hopgd::{hopgd_decompose, SeparatedModel, SnapshotTensor};
use chebhopgd::problems::{ProblemSpec, SplitProblem};
use chebhopgd::rom::{self, error_grid, interpolate_model, InterpolatedModel};
use chebhopgd::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::SingularMatrix { .. }
        | Error::SingularShift { .. }
        | Error::ChebNoConvergence { .. }
        | Error::Breakdown { .. }
        | Error::SweepNoConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn config_from(config: Option<&str>) -> PyResult<RunConfig> {
    match config {
        None => Ok(RunConfig::default()),
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("config: {e}"))),
    }
}

/// Default run configuration as a JSON string.
#[pyfunction]
fn default_config() -> PyResult<String> {
    RunConfig::default().to_json().map_err(to_py_err)
}

#[pyclass(name = "Problem", module = "chebhopgd_py")]
struct PyProblem {
    inner: SplitProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (name, grid_n, dt = None))]
    fn new(name: String, grid_n: usize, dt: Option<f64>) -> PyResult<Self> {
        let inner = ProblemSpec { name, grid_n, dt }.build().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// `(mu1_lo, mu1_hi, mu2_lo, mu2_hi)`
    #[getter]
    fn r#box(&self) -> (f64, f64, f64, f64) {
        let b = self.inner.param_box;
        (b.mu1.lo, b.mu1.hi, b.mu2.lo, b.mu2.hi)
    }

    fn solve(&self, py: Python<'_>, mu1: f64, mu2: f64) -> PyResult<Vec<f64>> {
        py.allow_threads(|| self.inner.direct_reference_solve(mu1, mu2)).map_err(to_py_err)
    }
}

#[pyclass(name = "Model", module = "chebhopgd_py")]
struct PyModel {
    model: SeparatedModel,
    online: InterpolatedModel,
    config: RunConfig,
}

impl PyModel {
    fn wrap(model: SeparatedModel, config: RunConfig) -> PyResult<Self> {
        let online = interpolate_model(&model).map_err(to_py_err)?;
        Ok(Self { model, online, config })
    }
}

#[pymethods]
impl PyModel {
    /// Sweep the configured node plan and decompose.
    #[staticmethod]
    #[pyo3(signature = (config = None))]
    fn build(py: Python<'_>, config: Option<&str>) -> PyResult<Self> {
        let cfg = config_from(config)?;
        let model = py
            .allow_threads(|| {
                let p = cfg.build_problem()?;
                let nodes = cfg.nodes.build(&cfg.resolve_box(&p)?)?;
                let (t, _) = SnapshotTensor::sweep(&p, nodes, &cfg.sweep_settings())?;
                hopgd_decompose(&t, &cfg.hopgd_settings())
            })
            .map_err(to_py_err)?;
        Self::wrap(model, cfg)
    }

    #[staticmethod]
    #[pyo3(signature = (path, config = None))]
    fn load(path: PathBuf, config: Option<&str>) -> PyResult<Self> {
        let model = SeparatedModel::read_dir(&path).map_err(to_py_err)?;
        let cfg = match config {
            Some(_) => config_from(config)?,
            None if path.join("config.json").exists() => RunConfig::read(&path.join("config.json")).map_err(to_py_err)?,
            None => RunConfig::default(),
        };
        Self::wrap(model, cfg)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.model.write_dir(&path).map_err(to_py_err)?;
        self.config.write(&path.join("config.json")).map_err(to_py_err)
    }

    #[getter]
    fn rank(&self) -> usize {
        self.model.rank()
    }

    #[getter]
    fn n(&self) -> usize {
        self.model.n
    }

    #[getter]
    fn converged(&self) -> bool {
        self.model.converged
    }

    #[getter]
    fn max_node_error(&self) -> f64 {
        self.model.max_node_error()
    }

    #[getter]
    fn node_errors(&self) -> Vec<f64> {
        self.model.node_errors.clone()
    }

    /// `(mu1, mu2)` of every sampled node.
    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        let ns = &self.model.nodes;
        ns.members.iter().map(|&m| ns.values(m)).collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.model.warnings.clone()
    }

    fn eval(&self, mu1: f64, mu2: f64) -> PyResult<Vec<f64>> {
        rom::rom_eval(&self.online, mu1, mu2).map_err(to_py_err)
    }

    /// `[(mu1, mu2, rel_err or None)]` against direct solves, `mu1` fastest.
    #[pyo3(signature = (g1 = 20, g2 = 20))]
    fn errmap(&self, py: Python<'_>, g1: usize, g2: usize) -> PyResult<Vec<(f64, f64, Option<f64>)>> {
        let p = self.config.build_problem().map_err(to_py_err)?;
        let cells = py.allow_threads(|| error_grid(&self.online, &p, g1, g2));
        Ok(cells.into_iter().map(|c| (c.mu1, c.mu2, c.rel_err)).collect())
    }
}

/// Successive zoomed estimates. Returns the list of runs as dicts.
#[pyfunction]
#[pyo3(signature = (config = None, observation = None, truth = None, noise = 0.0))]
fn estimate(
    py: Python<'_>,
    config: Option<&str>,
    observation: Option<Vec<f64>>,
    truth: Option<(f64, f64)>,
    noise: f64,
) -> PyResult<PyObject> {
    let cfg = config_from(config)?;
    let runs = py
        .allow_threads(|| {
            let p = cfg.build_problem()?;
            let x = match (observation, truth) {
                (Some(x), _) => x,
                (None, Some((a, b))) => p.direct_reference_solve(a, b)?,
                (None, None) => return Err(Error::InvalidInput("need an observation or a truth".into())),
            };
            let x = if noise > 0.0 { add_noise(&x, noise, cfg.seed) } else { x };
            refine_estimate(&p, &x, &cfg.resolve_box(&p)?, &cfg.refine_settings(), truth)
        })
        .map_err(to_py_err)?;
    let value = serde_json::to_value(&runs).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

#[pyfunction]
fn relative_error(x: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    rom::relative_error(&x, &reference).map_err(to_py_err)
}

/// `"accurate"`, `"reliable"` or `"poor"`.
#[pyfunction]
fn classify(err: f64) -> String {
    rom::classify(err).to_string()
}

#[pymodule]
pub fn chebhopgd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    Ok(())
}
