//! Python module `dynpanel`.
//!
//! Results come back as plain dicts and lists (the same JSON the CLI emits).

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dynpanel_core::diagnostics;
use dynpanel_core::instruments::InstrumentSpec;
use dynpanel_core::panel_data::{describe, ingest_long_csv, ingest_wide_csv, ParseOptions};
use dynpanel_core::pipeline::{estimate as run_estimate, EstimationConfig};
use dynpanel_core::ratings::{self, GRADE_SCALE};
use dynpanel_core::report;
use dynpanel_core::simulate::{run_experiment, DgpSpec, EstimatorConfig};
use dynpanel_core::{Error, LaggedVar, ModelSpec, PanelDataset, SpecKind, Weighting};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Csv(_)
        | Error::Format(_)
        | Error::DuplicateRow { .. }
        | Error::ParseValue { .. }
        | Error::UnknownVariable(_)
        | Error::UnknownGrade { .. }
        | Error::OutOfRange { .. }
        | Error::Parameter(_)
        | Error::Specification(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Unbalanced entity x period panel.
#[pyclass(name = "Panel", module = "dynpanel", skip_from_py_object)]
#[derive(Clone)]
struct Panel {
    inner: PanelDataset,
}

#[pymethods]
impl Panel {
    /// Reads `entity,period,<var>,...`.
    #[staticmethod]
    fn read_long(path: &str) -> PyResult<Self> {
        let inner = ingest_long_csv(path, &ParseOptions::default()).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Reads a `name,<year>,...` table holding one variable.
    #[staticmethod]
    fn read_wide(path: &str, variable: &str) -> PyResult<Self> {
        let inner = ingest_wide_csv(path, variable, &ParseOptions::default()).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Builds a panel from `{variable: [[value or None per period] per entity]}`.
    #[staticmethod]
    fn from_series(
        entities: Vec<String>,
        first_period: i64,
        series: std::collections::BTreeMap<String, Vec<Vec<Option<f64>>>>,
    ) -> PyResult<Self> {
        let t = series.values().next().and_then(|v| v.first()).map_or(0, Vec::len);
        if t == 0 {
            return Err(PyValueError::new_err("series must hold at least one period"));
        }
        let mut inner =
            PanelDataset::new(entities, first_period, first_period + t as i64 - 1).map_err(to_py)?;
        for (name, rows) in series {
            if rows.iter().any(|r| r.len() != t) {
                return Err(PyValueError::new_err(format!("'{name}': ragged period lists")));
            }
            inner
                .insert_series(&name, rows.into_iter().flatten().collect())
                .map_err(to_py)?;
        }
        Ok(Self { inner })
    }

    fn merge(&self, other: &Panel) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.merge(&other.inner).map_err(to_py)?,
        })
    }

    fn select_entities(&self, labels: Vec<String>) -> PyResult<Self> {
        let l: Vec<&str> = labels.iter().map(String::as_str).collect();
        Ok(Self {
            inner: self.inner.select_entities(&l).map_err(to_py)?,
        })
    }

    #[getter]
    fn entities(&self) -> Vec<String> {
        self.inner.entities().to_vec()
    }

    #[getter]
    fn periods(&self) -> Vec<i64> {
        self.inner.periods()
    }

    #[getter]
    fn variables(&self) -> Vec<String> {
        self.inner.variables().map(str::to_string).collect()
    }

    /// Values of `variable` for one entity, `None` where absent.
    fn series(&self, variable: &str, entity: &str) -> PyResult<Vec<Option<f64>>> {
        let e = self
            .inner
            .entity_index(entity)
            .ok_or_else(|| PyValueError::new_err(format!("unknown entity '{entity}'")))?;
        Ok(self.inner.entity_series(variable, e).map_err(to_py)?.to_vec())
    }

    fn column_sums(&self, variable: &str) -> PyResult<Vec<f64>> {
        self.inner.column_sums(variable).map_err(to_py)
    }

    fn describe<'py>(&self, py: Python<'py>, variable: &str) -> PyResult<Bound<'py, PyAny>> {
        let d = describe(&self.inner, variable).map_err(to_py)?;
        let text = serde_json::to_string(&d).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }

    fn __repr__(&self) -> String {
        format!(
            "Panel({} entities, periods {}..={}, variables {:?})",
            self.inner.n_entities(),
            self.inner.first_period(),
            self.inner.last_period(),
            self.variables()
        )
    }
}

#[pyfunction]
fn grade_to_numeric(grade: &str) -> PyResult<f64> {
    ratings::grade_to_numeric(grade).map_err(to_py)
}

#[pyfunction]
fn numeric_to_grade(value: f64) -> PyResult<&'static str> {
    ratings::numeric_to_grade(value).map_err(to_py)
}

/// `[(grade, description, value)]`, best grade first.
#[pyfunction]
fn rating_scale() -> Vec<(&'static str, &'static str, f64)> {
    GRADE_SCALE.iter().map(|g| (g.label, g.description, g.value)).collect()
}

#[pyfunction]
fn chi_square_sf(x: f64, df: usize) -> f64 {
    diagnostics::chi_square_sf(x, df)
}

/// Fits one specification and returns the result dict.
#[pyfunction]
#[pyo3(signature = (data, dep, spec="pooled", ar=1, x=Vec::new(), instruments=None, weighting="n_step", windmeijer=false, intercept=None))]
#[allow(clippy::too_many_arguments)]
fn estimate<'py>(
    py: Python<'py>,
    data: &Panel,
    dep: &str,
    spec: &str,
    ar: usize,
    x: Vec<String>,
    instruments: Option<&str>,
    weighting: &str,
    windmeijer: bool,
    intercept: Option<bool>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: SpecKind = spec.parse().map_err(to_py)?;
    let exog = x
        .iter()
        .map(|s| s.parse::<LaggedVar>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let mut m = ModelSpec::new(dep, ar, exog, kind);
    if let Some(i) = intercept {
        m.intercept = i;
    }
    let mut config = EstimationConfig::new(m).with_weighting(weighting.parse().map_err(to_py)?);
    config.gmm.windmeijer = windmeijer;
    if let Some(s) = instruments {
        config.instruments = Some(s.parse::<InstrumentSpec>().map_err(to_py)?);
    }
    let fit = py.detach(|| run_estimate(&data.inner, &config)).map_err(to_py)?;
    let text = report::to_json(std::slice::from_ref(&fit)).map_err(to_py)?;
    json_to_py(py, &text)
}

/// Monte Carlo experiment; `estimators` are spec kinds (pooled, fe, re, fd, od).
#[pyfunction]
#[pyo3(signature = (reps=100, seed=0, entities=100, periods=10, rho=0.5, betas=vec![1.0], sigma_effect=1.0, sigma_noise=1.0, missingness=0.0, estimators=vec!["fe".to_string(), "od".to_string()]))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    reps: usize,
    seed: u64,
    entities: usize,
    periods: usize,
    rho: f64,
    betas: Vec<f64>,
    sigma_effect: f64,
    sigma_noise: f64,
    missingness: f64,
    estimators: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let dgp = DgpSpec {
        n_entities: entities,
        n_periods: periods,
        rho,
        exogenous_betas: betas,
        sigma_effect,
        sigma_noise,
        missingness,
        seed,
        ..DgpSpec::default()
    };
    let mut configs = Vec::new();
    for label in &estimators {
        let kind: SpecKind = label.parse().map_err(to_py)?;
        configs.push(if kind.is_differenced() {
            EstimatorConfig::arellano_bond(label, kind, Weighting::TwoStep)
        } else {
            EstimatorConfig::ols(label, kind)
        });
    }
    let mc = py.detach(|| run_experiment(&dgp, &configs, reps)).map_err(to_py)?;
    let text = mc.to_json().map_err(to_py)?;
    json_to_py(py, &text)
}

#[pymodule]
fn dynpanel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Panel>()?;
    m.add_function(wrap_pyfunction!(grade_to_numeric, m)?)?;
    m.add_function(wrap_pyfunction!(numeric_to_grade, m)?)?;
    m.add_function(wrap_pyfunction!(rating_scale, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square_sf, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
