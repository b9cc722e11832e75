//! Python bindings: parameters, the value surface with its free boundaries,
//! the closed forms, path simulation, game evaluation and the check suite.
//! Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use dynkin_core::cli_io::{self, suite, RunConfig, Subcommand};
use dynkin_core::closed_form;
use dynkin_core::game_eval::{evaluate_pair, theorem_scope, StrategySpec};
use dynkin_core::model::{validate_params, ModelParams, StatePoint};
use dynkin_core::path_engine::{simulate_filtered, Scheme, SimConfig};
use dynkin_core::vi_solver::{extract_boundaries, solve, value_at, FreeBoundaries, GridSpec, ValueSurface};
use dynkin_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::NonPositiveParameter { .. }
        | Error::DegenerateK { .. }
        | Error::SingularTransform { .. }
        | Error::OutOfDomain { .. }
        | Error::InvalidGrid(_)
        | Error::InvalidSimConfig(_)
        | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scheme(name: &str) -> PyResult<Scheme> {
    match name {
        "milstein" => Ok(Scheme::MilsteinYExactZ),
        "euler" => Ok(Scheme::EulerYExactZ),
        _ => Err(PyValueError::new_err(format!("unknown scheme {name:?}, expected \"milstein\" or \"euler\""))),
    }
}

fn strategy(name: &str, shift: f64) -> PyResult<StrategySpec> {
    match name {
        "boundary" if shift == 0.0 => Ok(StrategySpec::boundary()),
        "boundary" => Ok(StrategySpec::shifted(shift)),
        "immediate" => Ok(StrategySpec::immediate()),
        "never" => Ok(StrategySpec::never()),
        _ => Err(PyValueError::new_err(format!(
            "unknown strategy {name:?}, expected \"boundary\", \"immediate\" or \"never\""
        ))),
    }
}

/// Validated model parameters; drift and ratio are derived.
#[pyclass(name = "Params", frozen)]
struct PyParams {
    inner: ModelParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (r, delta0, sigma, strike=1.0, penalty=0.1))]
    fn new(r: f64, delta0: f64, sigma: f64, strike: f64, penalty: f64) -> PyResult<Self> {
        let inner = validate_params(r, delta0, sigma, strike, penalty).map_err(err)?;
        Ok(PyParams { inner })
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r()
    }

    #[getter]
    fn delta0(&self) -> f64 {
        self.inner.delta0()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn strike(&self) -> f64 {
        self.inner.strike()
    }

    #[getter]
    fn penalty(&self) -> f64 {
        self.inner.penalty()
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k()
    }

    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio()
    }

    /// True when the equilibrium statements are proved for this set.
    fn in_theorem_scope(&self) -> bool {
        theorem_scope(&self.inner)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "Params(r={}, delta0={}, sigma={}, strike={}, penalty={})",
            p.r(),
            p.delta0(),
            p.sigma(),
            p.strike(),
            p.penalty()
        )
    }
}

/// Solved value surface together with its free boundaries.
#[pyclass(name = "Surface", frozen)]
struct PySurface {
    surface: ValueSurface,
    fb: FreeBoundaries,
}

#[pymethods]
impl PySurface {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.surface.grid.n_z, self.surface.grid.n_y)
    }

    /// Interpolated game value at price `x` and posterior `y`.
    fn value_at(&self, x: f64, y: f64) -> PyResult<f64> {
        value_at(&self.surface, x, y).map_err(err)
    }

    /// Boundaries in `z` as a dict of lists `z`, `c1`, `c2`, `yK`.
    fn boundaries_z<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &serde_json::json!({ "z": self.fb.zs, "c1": self.fb.c1, "c2": self.fb.c2, "yK": self.fb.yk }),
        )
    }

    /// Boundaries in price as a dict of lists `y`, `b1`, `b2`.
    fn boundaries_y<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &serde_json::json!({ "y": self.fb.ys, "b1": self.fb.b1, "b2": self.fb.b2 }))
    }

    /// Whether the seller's stopping set is empty.
    fn seller_region_empty(&self) -> bool {
        self.fb.s2_empty()
    }

    /// `(z, y)` where the seller's boundary meets the strike curve, if any.
    fn exceptional_point(&self) -> Option<(f64, f64)> {
        self.fb.exceptional_point()
    }

    /// Solver statistics.
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.surface.stats)
    }

    /// Runs one named check group on this surface; see `CHECKS`.
    #[pyo3(signature = (name, tolerance=None))]
    fn check<'py>(&self, py: Python<'py>, name: &str, tolerance: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        let d = cli_io::ChecksSection::default();
        let group = match name {
            "complete_info" => suite::complete_info(&self.fb, tolerance.unwrap_or(d.top_row_rel)),
            "edge_values" => suite::edge_values(&self.surface, tolerance.unwrap_or(d.edge_sup)),
            "roots" => Ok(suite::roots(&self.surface.params, tolerance.unwrap_or(d.root_rel))),
            "geometry" => Ok(suite::geometry(&self.surface, &self.fb)),
            "ladder" => suite::ladder(&self.surface, &d.ladder_caps, tolerance.unwrap_or(d.ladder_gap)),
            _ => return Err(PyValueError::new_err(format!("unknown or surface-free check {name:?}"))),
        }
        .map_err(err)?;
        let out = to_py(py, &group)?;
        out.set_item("verdict", group.verdict().label())?;
        Ok(out)
    }
}

/// Solves the game on the default grid window with `n_z` by `n_y` nodes.
#[pyfunction]
#[pyo3(signature = (params, n_z=400, n_y=200))]
fn solve_game(py: Python<'_>, params: &PyParams, n_z: usize, n_y: usize) -> PyResult<PySurface> {
    let p = params.inner;
    py.detach(|| {
        let surface = solve(&p, &GridSpec::desk(&p, n_z, n_y))?;
        let fb = extract_boundaries(&surface)?;
        Ok(PySurface { surface, fb })
    })
    .map_err(err)
}

/// Complete-information case and its thresholds.
#[pyfunction]
fn classify_case<'py>(py: Python<'py>, params: &PyParams) -> PyResult<Bound<'py, PyAny>> {
    let sol = closed_form::classify_case(&params.inner).map_err(err)?;
    let out = to_py(py, &sol)?;
    out.set_item("buyer_boundary_y1", sol.buyer_boundary_y1())?;
    Ok(out)
}

/// Perpetual call value with dividends always paid.
#[pyfunction]
fn perpetual_call_value(params: &PyParams, x: f64) -> f64 {
    closed_form::perpetual_call(&params.inner).value(x)
}

/// Filtered paths from `(x, y)`: a dict with `t` and per-path lists `y`, `x`.
#[pyfunction]
#[pyo3(signature = (params, x, y, n_paths=10, horizon=1.0, dt=1e-3, seed=1, scheme_name="milstein"))]
#[allow(clippy::too_many_arguments)]
fn simulate_paths<'py>(
    py: Python<'py>,
    params: &PyParams,
    x: f64,
    y: f64,
    n_paths: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
    scheme_name: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SimConfig {
        scheme: scheme(scheme_name)?,
        ..SimConfig::new(dt, horizon, n_paths, seed)
    };
    let p = params.inner;
    let batch = py
        .detach(|| simulate_filtered(&p, StatePoint { x, y }, &cfg))
        .map_err(err)?;
    to_py(
        py,
        &serde_json::json!({ "t": batch.times, "y": batch.y_paths, "x": batch.x_paths }),
    )
}

/// Monte Carlo value of a strategy pair started at `(x, y)`.
///
/// Strategies are "boundary", "immediate" or "never"; a nonzero shift moves
/// the boundary of that player's set in `y`.
#[pyfunction]
#[pyo3(signature = (
    surface, x, y, buyer="boundary", seller="boundary", buyer_shift=0.0, seller_shift=0.0,
    n_paths=10_000, horizon=20.0, dt=5e-3, seed=1
))]
#[allow(clippy::too_many_arguments)]
fn evaluate_game<'py>(
    py: Python<'py>,
    surface: &PySurface,
    x: f64,
    y: f64,
    buyer: &str,
    seller: &str,
    buyer_shift: f64,
    seller_shift: f64,
    n_paths: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let tau = strategy(buyer, buyer_shift)?;
    let gamma = strategy(seller, seller_shift)?;
    let cfg = SimConfig::new(dt, horizon, n_paths, seed);
    let p = surface.surface.params;
    let est = py
        .detach(|| evaluate_pair(&p, StatePoint { x, y }, tau, gamma, Some(&surface.fb), &cfg))
        .map_err(err)?;
    to_py(py, &est)
}

/// Runs a CLI subcommand from config text, writing artifacts to `out_dir`.
/// Returns the list of check groups and the exit code the CLI would use.
#[pyfunction]
#[pyo3(signature = (command, config_text, out_dir))]
fn run_config<'py>(
    py: Python<'py>,
    command: &str,
    config_text: &str,
    out_dir: PathBuf,
) -> PyResult<(Bound<'py, PyAny>, i32)> {
    let cmd = match command {
        "solve" => Subcommand::Solve,
        "benchmark" => Subcommand::Benchmark,
        "simulate" => Subcommand::Simulate,
        "check" => Subcommand::Check,
        "all" => Subcommand::All,
        _ => return Err(PyValueError::new_err(format!("unknown command {command:?}"))),
    };
    let mut cfg = RunConfig::parse(config_text).map_err(err)?;
    cfg.apply(Some(&out_dir), None, None).map_err(err)?;
    let hash = cli_io::sha256_hex(config_text.as_bytes());
    let summary = py.detach(|| cli_io::run(cmd, &cfg, &hash)).map_err(err)?;
    Ok((to_py(py, &summary.groups)?, summary.exit_code()))
}

#[pymodule]
fn dynkin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PySurface>()?;
    m.add_function(wrap_pyfunction!(solve_game, m)?)?;
    m.add_function(wrap_pyfunction!(classify_case, m)?)?;
    m.add_function(wrap_pyfunction!(perpetual_call_value, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_paths, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_game, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add(
        "CHECKS",
        vec!["complete_info", "edge_values", "roots", "geometry", "ladder"],
    )?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
