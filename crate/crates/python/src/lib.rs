//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use flexmarket::dp::{build_value_tables, load_tables, save_tables, Backend, SolveOptions, SupplyVector, ValueTables};
use flexmarket::example::worked_example_from;
use flexmarket::market::{build_example_config, validate_config, MarketConfig};
use flexmarket::mechanism::{Mechanism, ReportSet};
use flexmarket::oracle::{run_verification, VerifyOptions};
use flexmarket::simulator::{AuditProbe, Simulator};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(flexmarket_py, FlexmarketError, PyException);

fn py_err(e: flexmarket::Error) -> PyErr {
    FlexmarketError::new_err(e.to_string())
}

/// Parses a backend name as accepted by `Tables.solve`.
pub fn parse_backend(name: &str, samples: u64, seed: u64) -> flexmarket::Result<Backend> {
    match name {
        "exact" => Ok(Backend::Exact),
        "mc" | "monte_carlo" => Ok(Backend::MonteCarlo { samples, seed }),
        other => Err(flexmarket::Error::InvalidArgument(format!("unknown backend {other:?}"))),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| FlexmarketError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Market", module = "flexmarket_py", frozen)]
pub struct PyMarket {
    inner: MarketConfig,
}

#[pymethods]
impl PyMarket {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        MarketConfig::from_json_str(text).map(|inner| Self { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        MarketConfig::from_path(path).map(|inner| Self { inner }).map_err(py_err)
    }

    /// Bernoulli(`p`) arrivals, truncated exponential valuations with rates
    /// `alpha`, one good per variety in the first period.
    #[staticmethod]
    #[pyo3(signature = (alpha, p, horizon, grid_points))]
    fn example(alpha: Vec<f64>, p: f64, horizon: usize, grid_points: usize) -> PyResult<Self> {
        build_example_config(&alpha, p, horizon, grid_points).map(|inner| Self { inner }).map_err(py_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn varieties(&self) -> usize {
        self.inner.varieties()
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid().points().to_vec()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint().to_string()
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = validate_config(&self.inner);
        #[derive(Serialize)]
        struct Out<'a> {
            passed: bool,
            violations: &'a [flexmarket::market::RegularityViolation],
        }
        to_py(py, &Out { passed: report.passed, violations: &report.violations })
    }

    fn virtual_valuation(&self, t: usize, x: f64, level: usize) -> PyResult<f64> {
        self.inner.virtual_valuation(t, x, level).map_err(py_err)
    }

    fn reserve_price(&self, t: usize, level: usize) -> PyResult<f64> {
        self.inner.reserve_price(t, level).map_err(py_err)
    }
}

#[pyclass(name = "Tables", module = "flexmarket_py", frozen)]
pub struct PyTables {
    inner: ValueTables,
}

#[pymethods]
impl PyTables {
    #[staticmethod]
    #[pyo3(signature = (market, backend = "exact", samples = 10_000, seed = 0, budget = flexmarket::dp::DEFAULT_ENUMERATION_BUDGET))]
    fn solve(py: Python<'_>, market: &PyMarket, backend: &str, samples: u64, seed: u64, budget: u64) -> PyResult<Self> {
        let backend = parse_backend(backend, samples, seed).map_err(py_err)?;
        let cfg = &market.inner;
        py.detach(|| build_value_tables(cfg, &SolveOptions { backend, budget }))
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf, market: &PyMarket) -> PyResult<Self> {
        load_tables(path, &market.inner).map(|inner| Self { inner }).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_tables(&self.inner, path).map_err(py_err)
    }

    /// `C_t(y)`; zero past the horizon.
    fn value(&self, t: usize, y: Vec<u32>) -> PyResult<f64> {
        if t <= self.inner.horizon() && !self.inner.contains(t, &y) {
            return Err(FlexmarketError::new_err(format!("supply {y:?} not tabulated for period {t}")));
        }
        Ok(self.inner.value(t, &y))
    }

    fn continuation_gap(&self, t: usize, y: Vec<u32>, level: usize) -> PyResult<f64> {
        self.inner.continuation_gap(t, &SupplyVector(y), level).map_err(py_err)
    }

    fn expected_total(&self, market: &PyMarket) -> PyResult<f64> {
        self.inner.check_matches(&market.inner).map_err(py_err)?;
        Ok(self.inner.expected_total(&market.inner))
    }

    #[getter]
    fn entry_count(&self) -> usize {
        self.inner.entry_count()
    }
}

/// Runs one period on `reports`, a list of `(valuation, level)` pairs in
/// arrival order. Returns the outcome as a dict.
#[pyfunction]
fn run_period<'py>(
    py: Python<'py>,
    market: &PyMarket,
    tables: &PyTables,
    t: usize,
    reports: Vec<(f64, usize)>,
    supply: Vec<u32>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = &market.inner;
    let mech = Mechanism::new(cfg, &tables.inner).map_err(py_err)?;
    let reports = ReportSet::from_pairs(cfg, &reports).map_err(py_err)?;
    let outcome = mech.run_period(t, &reports, &SupplyVector(supply)).map_err(py_err)?;
    to_py(py, &outcome)
}

#[pyfunction]
#[pyo3(signature = (market, tables, replications, seed = 0))]
fn estimate_revenue<'py>(
    py: Python<'py>,
    market: &PyMarket,
    tables: &PyTables,
    replications: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (cfg, tables) = (&market.inner, &tables.inner);
    let est = py
        .detach(|| Simulator::new(cfg, tables)?.estimate_revenue(replications, seed))
        .map_err(py_err)?;
    to_py(py, &est)
}

/// Incentive and participation audit over `points` evenly spaced valuations
/// in every period.
#[pyfunction]
#[pyo3(signature = (market, tables, replications, points = 21, seed = 0))]
fn audit<'py>(
    py: Python<'py>,
    market: &PyMarket,
    tables: &PyTables,
    replications: u64,
    points: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (cfg, tables) = (&market.inner, &tables.inner);
    let report = py
        .detach(|| Simulator::new(cfg, tables)?.audit(&AuditProbe::uniform(cfg, points), replications, seed))
        .map_err(py_err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (instances = 200, seed = 0, budget = 1_000_000))]
fn verify<'py>(py: Python<'py>, instances: usize, seed: u64, budget: u64) -> PyResult<Bound<'py, PyAny>> {
    let options = VerifyOptions { instances, seed, budget, ..Default::default() };
    let report = py.detach(|| run_verification(&options)).map_err(py_err)?;
    #[derive(Serialize)]
    struct Out<'a> {
        passed: bool,
        summary: &'a [flexmarket::oracle::CheckSummary],
        first_failure: &'a Option<flexmarket::oracle::CheckResult>,
    }
    to_py(py, &Out { passed: report.passed, summary: &report.summary, first_failure: &report.first_failure })
}

/// Quantities of the two-variety worked instance on an exact solve.
#[pyfunction]
fn worked_example<'py>(py: Python<'py>, market: &PyMarket, tables: &PyTables) -> PyResult<Bound<'py, PyAny>> {
    let ex = worked_example_from(&market.inner, &tables.inner).map_err(py_err)?;
    to_py(py, &ex)
}

#[pymodule]
fn flexmarket_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlexmarketError", m.py().get_type::<FlexmarketError>())?;
    m.add_class::<PyMarket>()?;
    m.add_class::<PyTables>()?;
    m.add_function(wrap_pyfunction!(run_period, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_revenue, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(worked_example, m)?)?;
    Ok(())
}
