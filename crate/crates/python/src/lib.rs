//! Python bindings: geometry, channels, link metrics, power splitting, the
//! alternating optimizer, the baselines and the experiment runners.
//!
//! Parameter objects take keyword arguments named like the TOML config keys;
//! anything left out keeps its default.

use num_complex::Complex64;
use oamswipt_core::baselines::BaselineKind;
use oamswipt_core::experiments::{self, BudgetConfig, ExperimentConfig, ExperimentOutput};
use oamswipt_core::linalg::CMatrix;
use oamswipt_core::split::SplitProblem;
use oamswipt_core::{
    alternating, build_channels, compose, element_layout, evaluate_baseline, metrics, oam_channel, ChannelSet,
    Error, LogBase, OptimizationOptions, OptimizationReport, PowerSplit, PropagationParams, ReflectionState,
    SystemGeometry, TransformPair,
};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString, PyTuple};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

create_exception!(oamswipt, OamSwiptError, PyValueError);

fn py_err(e: Error) -> PyErr {
    OamSwiptError::new_err(e.to_string())
}

fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        return Ok(Value::Null);
    }
    if obj.is_instance_of::<PyBool>() {
        return Ok(Value::Bool(obj.extract()?));
    }
    if obj.is_instance_of::<PyInt>() {
        if let Ok(v) = obj.extract::<i64>() {
            return Ok(Value::from(v));
        }
        return Ok(Value::from(obj.extract::<u64>()?));
    }
    if obj.is_instance_of::<PyFloat>() {
        let v: f64 = obj.extract()?;
        return serde_json::Number::from_f64(v)
            .map(Value::Number)
            .ok_or_else(|| OamSwiptError::new_err(format!("non-finite value {v}")));
    }
    if obj.is_instance_of::<PyString>() {
        return Ok(Value::String(obj.extract()?));
    }
    if obj.is_instance_of::<PyList>() || obj.is_instance_of::<PyTuple>() {
        return obj.try_iter()?.map(|item| to_json(&item?)).collect::<PyResult<Vec<_>>>().map(Value::Array);
    }
    if let Ok(dict) = obj.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in dict.iter() {
            map.insert(k.extract::<String>()?, to_json(&v)?);
        }
        return Ok(Value::Object(map));
    }
    Err(OamSwiptError::new_err(format!(
        "unsupported value of type {}",
        obj.get_type().name()?
    )))
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn with_kwargs<T: Serialize + DeserializeOwned>(base: &T, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<T> {
    let mut value = serde_json::to_value(base).map_err(|e| OamSwiptError::new_err(e.to_string()))?;
    if let (Some(kwargs), Some(map)) = (kwargs, value.as_object_mut()) {
        for (k, v) in kwargs.iter() {
            map.insert(k.extract::<String>()?, to_json(&v)?);
        }
    }
    serde_json::from_value(value).map_err(|e| OamSwiptError::new_err(e.to_string()))
}

fn dict_of<'py, T: Serialize>(py: Python<'py>, inner: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(inner).map_err(|e| OamSwiptError::new_err(e.to_string()))?;
    to_py(py, &value)
}

macro_rules! settings_class {
    ($name:ident, $inner:ty, $pyname:literal, $check:expr $(, { $($extra:tt)* })?) => {
        #[pyclass(name = $pyname, module = "oamswipt", from_py_object)]
        #[derive(Clone)]
        pub struct $name {
            inner: $inner,
        }

        #[pymethods]
        impl $name {
            #[new]
            #[pyo3(signature = (**kwargs))]
            fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
                let inner: $inner = with_kwargs(&<$inner>::default(), kwargs)?;
                let check: fn(&$inner) -> Result<(), Error> = $check;
                check(&inner).map_err(py_err)?;
                Ok(Self { inner })
            }

            /// Copy with the given fields replaced.
            #[pyo3(signature = (**kwargs))]
            fn replace(&self, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
                let inner: $inner = with_kwargs(&self.inner, kwargs)?;
                let check: fn(&$inner) -> Result<(), Error> = $check;
                check(&inner).map_err(py_err)?;
                Ok(Self { inner })
            }

            fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
                dict_of(py, &self.inner)
            }

            fn __repr__(&self) -> String {
                format!("{}({:?})", $pyname, self.inner)
            }

            fn __eq__(&self, other: &Self) -> bool {
                self.inner == other.inner
            }

            $($($extra)*)?
        }
    };
}

settings_class!(Geometry, SystemGeometry, "Geometry", |g| g.validate(), {
    #[getter]
    fn tx_elements(&self) -> usize {
        self.inner.tx_elements
    }

    #[getter]
    fn rx_elements(&self) -> usize {
        self.inner.rx_elements
    }

    #[getter]
    fn ris_elements(&self) -> usize {
        self.inner.ris_elements()
    }

    /// Element coordinates as `{"tx": [...], "rx": [...], "ris": [...]}`.
    fn layout<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let layout = element_layout(&self.inner).map_err(py_err)?;
        let dict = PyDict::new(py);
        for (key, points) in [("tx", &layout.tx), ("rx", &layout.rx), ("ris", &layout.ris)] {
            let coords: Vec<(f64, f64, f64)> = points.iter().map(|p| (p.x, p.y, p.z)).collect();
            dict.set_item(key, coords)?;
        }
        Ok(dict)
    }
});

settings_class!(Propagation, PropagationParams, "Propagation", |p| p.validate());
settings_class!(Budget, BudgetConfig, "Budget", |b| b.to_budget().validate());
settings_class!(Options, OptimizationOptions, "Options", |o| o.validate());

type Rows = Vec<Vec<Complex64>>;

fn rows_of(m: &CMatrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(rows: &Rows) -> PyResult<CMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(OamSwiptError::new_err("matrix rows differ in length"));
    }
    Ok(CMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn reflection_of(phases: Option<Vec<f64>>, n: usize) -> PyResult<ReflectionState> {
    match phases {
        None => Ok(ReflectionState::ones(n)),
        Some(p) if p.len() == n => Ok(ReflectionState::from_phases(&p)),
        Some(p) => Err(OamSwiptError::new_err(format!("expected {n} phases, got {}", p.len()))),
    }
}

/// Incident, reflected and direct channel matrices for one layout.
#[pyclass(name = "Channels", module = "oamswipt")]
pub struct Channels {
    inner: ChannelSet,
}

#[pymethods]
impl Channels {
    #[new]
    #[pyo3(signature = (geometry=None, propagation=None))]
    fn new(geometry: Option<Geometry>, propagation: Option<Propagation>) -> PyResult<Self> {
        let geometry = geometry.map(|g| g.inner).unwrap_or_default();
        let params = propagation.map(|p| p.inner).unwrap_or_default();
        let layout = element_layout(&geometry).map_err(py_err)?;
        Ok(Self {
            inner: build_channels(&layout, &params).map_err(py_err)?,
        })
    }

    #[getter]
    fn incident(&self) -> Rows {
        rows_of(&self.inner.incident)
    }

    #[getter]
    fn reflected(&self) -> Rows {
        rows_of(&self.inner.reflected)
    }

    #[getter]
    fn los(&self) -> Rows {
        rows_of(&self.inner.los)
    }

    /// Spatial channel for the given RIS phases (all zero by default).
    #[pyo3(signature = (phases=None))]
    fn compose(&self, phases: Option<Vec<f64>>) -> PyResult<Rows> {
        let refl = reflection_of(phases, self.inner.ris_len())?;
        Ok(rows_of(&compose(&self.inner, &refl).map_err(py_err)?))
    }

    /// Mode-domain channel `W' H W` for the given RIS phases.
    #[pyo3(signature = (phases=None))]
    fn oam(&self, phases: Option<Vec<f64>>) -> PyResult<Rows> {
        let refl = reflection_of(phases, self.inner.ris_len())?;
        let h = compose(&self.inner, &refl).map_err(py_err)?;
        let transforms = TransformPair::oam(self.inner.tx_len(), self.inner.rx_len());
        Ok(rows_of(&oam_channel(&h, &transforms)))
    }
}

fn log_base(name: &str) -> PyResult<LogBase> {
    match name {
        "2" => Ok(LogBase::Two),
        "e" => Ok(LogBase::E),
        other => Err(OamSwiptError::new_err(format!("log base must be \"2\" or \"e\", got {other:?}"))),
    }
}

/// SINR per mode, sum capacity and harvested power (watts) for a mode-domain
/// channel and power split, with the transmit power spread evenly.
#[pyfunction]
#[pyo3(signature = (h_oam, rho, budget=None, base="2"))]
fn evaluate<'py>(
    py: Python<'py>,
    h_oam: Rows,
    rho: Vec<f64>,
    budget: Option<Budget>,
    base: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let budget = budget.map(|b| b.inner).unwrap_or_default().to_budget();
    let split = PowerSplit::new(rho).map_err(py_err)?;
    let m = metrics::evaluate(&matrix_of(&h_oam)?, &split, &budget, log_base(base)?).map_err(py_err)?;
    dict_of(py, &m)
}

/// Optimal power-splitting ratios for a fixed mode-domain channel.
#[pyfunction]
#[pyo3(signature = (h_oam, budget=None))]
fn solve_split(h_oam: Rows, budget: Option<Budget>) -> PyResult<Vec<f64>> {
    let budget = budget.map(|b| b.inner).unwrap_or_default().to_budget();
    let problem = SplitProblem::from_channel(&matrix_of(&h_oam)?, &budget).map_err(py_err)?;
    Ok(problem.solve().map_err(py_err)?.as_slice().to_vec())
}

/// Outcome of an optimization or baseline run.
#[pyclass(name = "Report", module = "oamswipt")]
pub struct Report {
    inner: OptimizationReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn capacity(&self) -> f64 {
        self.inner.capacity()
    }

    /// Harvested power in watts.
    #[getter]
    fn harvested(&self) -> f64 {
        self.inner.harvested()
    }

    #[getter]
    fn sinr(&self) -> Vec<f64> {
        self.inner.metrics.sinr.clone()
    }

    #[getter]
    fn phases(&self) -> Vec<f64> {
        self.inner.reflection.phases()
    }

    #[getter]
    fn reflection(&self) -> Vec<Complex64> {
        self.inner.reflection.as_vector().iter().copied().collect()
    }

    #[getter]
    fn rho(&self) -> Vec<f64> {
        self.inner.split.as_slice().to_vec()
    }

    #[getter]
    fn termination(&self) -> &'static str {
        self.inner.termination.as_str()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations.len()
    }

    fn capacity_trace(&self) -> Vec<f64> {
        self.inner.capacity_trace()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        dict_of(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(capacity={:.6}, harvested={:.3e}, termination={:?}, iterations={})",
            self.inner.capacity(),
            self.inner.harvested(),
            self.inner.termination.as_str(),
            self.inner.iterations.len()
        )
    }
}

struct Inputs {
    geometry: SystemGeometry,
    params: PropagationParams,
    budget: BudgetConfig,
    options: OptimizationOptions,
}

impl Inputs {
    fn new(
        geometry: Option<Geometry>,
        propagation: Option<Propagation>,
        budget: Option<Budget>,
        options: Option<Options>,
    ) -> Self {
        Self {
            geometry: geometry.map(|g| g.inner).unwrap_or_default(),
            params: propagation.map(|p| p.inner).unwrap_or_default(),
            budget: budget.map(|b| b.inner).unwrap_or_default(),
            options: options.map(|o| o.inner).unwrap_or_default(),
        }
    }
}

/// Alternating optimization of the RIS phases and the power split.
#[pyfunction]
#[pyo3(signature = (geometry=None, propagation=None, budget=None, options=None))]
fn optimize(
    py: Python<'_>,
    geometry: Option<Geometry>,
    propagation: Option<Propagation>,
    budget: Option<Budget>,
    options: Option<Options>,
) -> PyResult<Report> {
    let i = Inputs::new(geometry, propagation, budget, options);
    let report = py
        .detach(|| alternating::optimize(&i.geometry, &i.params, &i.budget.to_budget(), &i.options))
        .map_err(py_err)?;
    Ok(Report { inner: report })
}

/// One of the reference schemes: `"los-oam"`, `"nlos-oam"`, `"random-ris"`
/// or `"mimo"`.
#[pyfunction]
#[pyo3(signature = (kind, geometry=None, propagation=None, budget=None, options=None, attenuation=None))]
fn baseline(
    py: Python<'_>,
    kind: &str,
    geometry: Option<Geometry>,
    propagation: Option<Propagation>,
    budget: Option<Budget>,
    options: Option<Options>,
    attenuation: Option<f64>,
) -> PyResult<Report> {
    let kind = match kind {
        "los-oam" => BaselineKind::LosOamNoRis,
        "nlos-oam" => attenuation.map_or_else(BaselineKind::nlos, |a| BaselineKind::NlosOamNoRis { attenuation: a }),
        "random-ris" => BaselineKind::RandomPhaseRis,
        "mimo" => BaselineKind::MimoSwipt,
        other => return Err(OamSwiptError::new_err(format!("unknown baseline {other:?}"))),
    };
    let i = Inputs::new(geometry, propagation, budget, options);
    let report = py
        .detach(|| evaluate_baseline(kind, &i.geometry, &i.params, &i.budget.to_budget(), &i.options))
        .map_err(py_err)?;
    Ok(Report { inner: report })
}

/// Default experiment configuration as TOML.
#[pyfunction]
fn default_config() -> String {
    ExperimentConfig::default().to_toml()
}

/// Runs `"convergence"`, `"power-sweep"` or `"distance-sweep"` and returns
/// `(results_csv, trace_csv)`.
#[pyfunction]
#[pyo3(signature = (name, config="", overrides=Vec::new()))]
fn run_experiment(py: Python<'_>, name: &str, config: &str, overrides: Vec<String>) -> PyResult<(String, String)> {
    let config = ExperimentConfig::parse(config, &overrides).map_err(py_err)?;
    let runner: fn(&ExperimentConfig) -> Result<ExperimentOutput, Error> = match name {
        "convergence" => experiments::run_convergence,
        "power-sweep" => experiments::run_power_sweep,
        "distance-sweep" => experiments::run_distance_sweep,
        other => return Err(OamSwiptError::new_err(format!("unknown experiment {other:?}"))),
    };
    let out = py.detach(|| runner(&config)).map_err(py_err)?;
    Ok((out.table.to_csv(), out.trace.to_csv()))
}

#[pymodule]
fn oamswipt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("OamSwiptError", m.py().get_type::<OamSwiptError>())?;
    m.add_class::<Geometry>()?;
    m.add_class::<Propagation>()?;
    m.add_class::<Budget>()?;
    m.add_class::<Options>()?;
    m.add_class::<Channels>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_split, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
