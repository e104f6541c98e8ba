use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> PyResult<()>) {
    Python::with_gil(|py| {
        let m = PyModule::new(py, "chebhopgd_py").unwrap();
        chebhopgd_py::chebhopgd_py(&m).unwrap();
        if let Err(e) = f(py, &m) {
            e.print(py);
            panic!("python error");
        }
    });
}

#[test]
fn problem_and_helpers() {
    with_module(|_py, m| {
        let p = m.getattr("Problem")?.call1(("advdiff", 49))?;
        assert_eq!(p.getattr("n")?.extract::<usize>()?, 49);
        let x: Vec<f64> = p.call_method1("solve", (0.1, 0.2))?.extract()?;
        let e: f64 = m.getattr("relative_error")?.call1((x.clone(), x))?.extract()?;
        assert_eq!(e, 0.0);
        let c: String = m.getattr("classify")?.call1((0.03,))?.extract()?;
        assert_eq!(c, "reliable");
        Ok(())
    });
}

#[test]
fn model_build_eval_and_errors() {
    with_module(|py, m| {
        let cfg = r#"{"problem": {"name": "advdiff", "grid_n": 99}, "nodes": {"kind": "sparse_cross", "n1": 5, "n2": 5},
            "hopgd": {"eps2": 1e-3}}"#;
        let model = m.getattr("Model")?.call_method1("build", (cfg,))?;
        assert!(model.getattr("converged")?.extract::<bool>()?);
        let x: Vec<f64> = model.call_method1("eval", (0.25, 0.25))?.extract()?;
        assert_eq!(x.len(), 99);
        let err = model.call_method1("eval", (2.0, 0.25)).unwrap_err();
        assert!(err.is_instance_of::<PyValueError>(py));

        let kwargs = PyDict::new(py);
        kwargs.set_item("observation", x)?;
        let runs = m.getattr("estimate")?.call((cfg,), Some(&kwargs))?;
        assert!(runs.len()? >= 1);
        Ok(())
    });
}

#[test]
fn bad_config_is_value_error() {
    with_module(|py, m| {
        let err = m.getattr("Model")?.call_method1("build", ("{not json",)).unwrap_err();
        assert!(err.is_instance_of::<PyValueError>(py));
        Ok(())
    });
}
