//! Python bindings. Matrices cross the boundary as lists of row lists.

use eiv_tls::harness::{self, Experiment, ExperimentConfig};
use eiv_tls::metrics;
use eiv_tls::model::{self, LatentLayout, NoiseKind, ProblemInstance};
use eiv_tls::solvers::{self, CtlsProblem, RankMode, SolutionSet};
use eiv_tls::{Error, Matrix};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(eiv_tls_py, EivTlsError, PyValueError, "Raised when an estimator or generator fails.");

fn to_py_err(e: Error) -> PyErr {
    EivTlsError::new_err(format!("{}: {e}", e.name()))
}

fn to_matrix(rows: Vec<Vec<f64>>, name: &str) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{name}: rows have different lengths")));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    eiv_tls::numerics::from_rows(flat.len() / cols.max(1), cols, &flat).map_err(to_py_err)
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_rank(rank: Option<&Bound<'_, PyAny>>) -> PyResult<Option<RankMode>> {
    let Some(rank) = rank else { return Ok(None) };
    if rank.is_none() {
        return Ok(None);
    }
    if let Ok(r) = rank.extract::<usize>() {
        return Ok(Some(RankMode::Explicit(r)));
    }
    let text: String = rank.extract()?;
    text.parse().map(Some).map_err(PyValueError::new_err)
}

/// Model specification; see `eiv_tls::model::ModelSpec`.
#[pyclass(name = "ModelSpec", from_py_object)]
#[derive(Clone)]
struct PyModelSpec {
    inner: model::ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    #[new]
    #[pyo3(signature = (n, ell, k, r, sigma, r_inf=None, noise="gaussian", seed=0, layout="full"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        ell: usize,
        k: usize,
        r: usize,
        sigma: f64,
        r_inf: Option<usize>,
        noise: &str,
        seed: u64,
        layout: &str,
    ) -> PyResult<Self> {
        let noise = match noise {
            "gaussian" => NoiseKind::Gaussian,
            "uniform" => NoiseKind::Uniform,
            other => return Err(PyValueError::new_err(format!("unknown noise {other:?}"))),
        };
        let layout = match layout {
            "full" => LatentLayout::Full,
            "exact_rows_excluded" => LatentLayout::ExactRowsExcluded,
            other => return Err(PyValueError::new_err(format!("unknown layout {other:?}"))),
        };
        let inner = model::ModelSpec::new(n, ell, k, r, sigma)
            .with_r_inf(r_inf.unwrap_or(r))
            .with_noise(noise)
            .with_seed(seed)
            .with_layout(layout);
        inner.validate().map_err(to_py_err)?;
        Ok(PyModelSpec { inner })
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "ModelSpec(n={}, ell={}, k={}, r={}, r_inf={}, sigma={}, seed={})",
            s.n, s.ell, s.k, s.r, s.r_inf, s.sigma, s.seed
        )
    }
}

/// Synthesizes a noisy instance with its ground truth.
///
/// Returns a dict with `a`, `b`, `k`, `x_min`, `w`, `y_bar`, `a_bar`, `b_bar`.
#[pyfunction]
#[pyo3(signature = (spec, m, replicate=0))]
fn generate<'py>(py: Python<'py>, spec: &PyModelSpec, m: usize, replicate: u64) -> PyResult<Bound<'py, PyDict>> {
    let gt = model::synthesize_replicate(&spec.inner, m, replicate).map_err(to_py_err)?;
    let seed = eiv_tls::rng::cell_noise_seed(spec.inner.seed, m as u64, replicate);
    let inst = model::add_noise(&gt, seed).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("a", to_rows(&inst.a))?;
    out.set_item("b", to_rows(&inst.b))?;
    out.set_item("k", inst.k)?;
    out.set_item("a_bar", to_rows(&gt.a_bar))?;
    out.set_item("b_bar", to_rows(&gt.b_bar))?;
    out.set_item("x_min", to_rows(&gt.x_min))?;
    out.set_item("w", to_rows(&gt.w))?;
    out.set_item("y_bar", to_rows(&gt.y_bar))?;
    Ok(out)
}

fn solution_dict<'py>(py: Python<'py>, sol: &SolutionSet) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("x_star", to_rows(&sol.x_star))?;
    out.set_item("w_hat", to_rows(&sol.w_hat))?;
    out.set_item("z", to_rows(&sol.basis.z))?;
    out.set_item("eigenvalues", sol.basis.eigvals_g.clone())?;
    out.set_item("spectral_gap", sol.basis.spectral_gap)?;
    out.set_item("gap_degenerate", sol.basis.gap_degenerate)?;
    out.set_item("rank", sol.rank_decision.rank)?;
    Ok(out)
}

/// Row- and rank-constrained TLS. `rank` is an int, `"auto"` or `None` (= n).
#[pyfunction]
#[pyo3(signature = (a, b, k=0, rank=None))]
fn solve_ctls<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    k: usize,
    rank: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = ProblemInstance::new(to_matrix(a, "a")?, to_matrix(b, "b")?, k).map_err(to_py_err)?;
    let rank = parse_rank(rank)?.unwrap_or(RankMode::Explicit(inst.n()));
    let sol = py
        .detach(|| solvers::solve_ctls(&CtlsProblem::new(inst, rank)))
        .map_err(to_py_err)?;
    solution_dict(py, &sol)
}

/// Truncated TLS (no exact rows).
#[pyfunction]
fn solve_ttls<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    rank: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyDict>> {
    let rank = parse_rank(Some(rank))?.ok_or_else(|| PyValueError::new_err("rank is required"))?;
    let (a, b) = (to_matrix(a, "a")?, to_matrix(b, "b")?);
    let sol = solvers::solve_ttls(&a, &b, rank).map_err(to_py_err)?;
    solution_dict(py, &sol)
}

/// Standard TLS estimate `X`.
#[pyfunction]
fn solve_tls(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let x = solvers::solve_tls(&to_matrix(a, "a")?, &to_matrix(b, "b")?).map_err(to_py_err)?;
    Ok(to_rows(&x))
}

/// Principal angles between the column spans of two bases.
#[pyfunction]
fn principal_angles<'py>(py: Python<'py>, u1: Vec<Vec<f64>>, u2: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let rep = metrics::principal_angles(&to_matrix(u1, "u1")?, &to_matrix(u2, "u2")?).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("angles", rep.angles)?;
    out.set_item("sin_max", rep.sin_max)?;
    out.set_item("dims", rep.dims)?;
    Ok(out)
}

/// Rank chosen from ascending eigenvalues of the projected Gram matrix.
#[pyfunction]
fn estimate_rank(eigenvalues: Vec<f64>, ell: usize, k: usize, m: usize) -> PyResult<usize> {
    solvers::estimate_rank(&eigenvalues, ell, k, m)
        .map(|d| d.rank)
        .map_err(to_py_err)
}

/// Runs an experiment from a JSON config and returns the summary as JSON.
#[pyfunction]
#[pyo3(signature = (config_json, experiment="consistency"))]
fn run_experiment(py: Python<'_>, config_json: &str, experiment: &str) -> PyResult<String> {
    let config = ExperimentConfig::from_json_str(config_json).map_err(to_py_err)?;
    let experiment: Experiment = experiment.parse().map_err(PyValueError::new_err)?;
    let report = py
        .detach(|| harness::run_experiment(&config, experiment))
        .map_err(to_py_err)?;
    Ok(report.summary.to_json())
}

#[pymodule]
fn eiv_tls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add("EivTlsError", m.py().get_type::<EivTlsError>())?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ctls, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ttls, m)?)?;
    m.add_function(wrap_pyfunction!(solve_tls, m)?)?;
    m.add_function(wrap_pyfunction!(principal_angles, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rank, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
