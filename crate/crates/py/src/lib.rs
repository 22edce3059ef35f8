//! Python bindings for the momsens toolkit.
//!
//! The module exposes the reaction network type plus the four main
//! operations: moment-closure simulation, the truncated master-equation
//! oracle, local finite-difference sensitivities and global Sobol'
//! indices. Results come back as plain dicts of lists so they drop
//! straight into numpy or pandas without a wrapper layer.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use momsens::{
    build_moment_system, cme, evaluate_design, jansen_indices, local_sensitivity,
    martinez_indices, oracle_moments, parse_model, sample_design, simulate as simulate_rs,
    uniform_grid, MomentSystem, MomentTrajectory, ParameterBox, ParameterPoint, ReactionNetwork,
};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed and validated mass-action reaction network.
#[pyclass(frozen, module = "momsens_py")]
pub struct Network {
    inner: ReactionNetwork,
}

#[pymethods]
impl Network {
    /// Parses a network from a model file on disk.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let inner = parse_model(&text).map_err(|e| value_err(format!("{path}: {e}")))?;
        Ok(Network { inner })
    }

    /// Parses a network from model text.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let inner = parse_model(text).map_err(value_err)?;
        Ok(Network { inner })
    }

    /// Species names in declaration order.
    #[getter]
    fn species(&self) -> Vec<String> {
        self.inner.species().iter().map(|s| s.name.clone()).collect()
    }

    /// Parameter names in declaration order.
    #[getter]
    fn parameters(&self) -> Vec<String> {
        self.inner.parameters().iter().map(|p| p.name.clone()).collect()
    }

    /// Nominal parameter values, aligned with `parameters`.
    #[getter]
    fn nominal(&self) -> Vec<f64> {
        self.inner.nominal_point().values().to_vec()
    }

    /// Initial copy numbers, aligned with `species`.
    #[getter]
    fn initial_counts(&self) -> Vec<u64> {
        self.inner.initial_counts()
    }

    /// Sampling bounds per parameter, `None` where the model file gave none.
    #[getter]
    fn bounds(&self) -> Vec<Option<(f64, f64)>> {
        self.inner.parameters().iter().map(|p| p.bounds).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(species={}, reactions={}, parameters={})",
            self.inner.num_species(),
            self.inner.num_reactions(),
            self.inner.num_parameters()
        )
    }
}

fn make_grid(t_end: f64, points: usize) -> PyResult<Vec<f64>> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(PyValueError::new_err(format!(
            "t_end must be positive and finite, got {t_end}"
        )));
    }
    if points < 2 {
        return Err(PyValueError::new_err(format!(
            "points must be at least 2, got {points}"
        )));
    }
    Ok(uniform_grid(0.0, t_end, points))
}

fn make_point(network: &ReactionNetwork, params: Option<Vec<f64>>) -> PyResult<ParameterPoint> {
    match params {
        None => Ok(network.nominal_point()),
        Some(values) => {
            let point = ParameterPoint::new(values).map_err(value_err)?;
            network.check_point(&point).map_err(value_err)?;
            Ok(point)
        }
    }
}

fn species_target(network: &ReactionNetwork, species: Option<&str>) -> PyResult<usize> {
    match species {
        None => Ok(0),
        Some(name) => network
            .species_index(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown species: {name}"))),
    }
}

/// Packs one trajectory as {"label": [values per time]} using the packed
/// component labels (mu_X, sigma_X_Y, ...).
fn outputs_dict<'py>(
    py: Python<'py>,
    system: &MomentSystem,
    traj: &MomentTrajectory,
) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (i, label) in system.output_labels().iter().enumerate() {
        d.set_item(label, traj.component(system, i))?;
    }
    Ok(d)
}

/// Integrates the closed moment equations and returns the trajectory.
///
/// Returns a dict with `times`, an `outputs` dict keyed by component
/// label, a `negative_variance` flag and the solver work counters.
#[pyfunction]
#[pyo3(signature = (network, t_end=10.0, points=101, rel_tol=1e-8, abs_tol=1e-10,
                    diagonal_covariance=false, params=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    network: &Network,
    t_end: f64,
    points: usize,
    rel_tol: f64,
    abs_tol: f64,
    diagonal_covariance: bool,
    params: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = make_grid(t_end, points)?;
    let point = make_point(&network.inner, params)?;
    let traj = simulate_rs(
        &network.inner,
        &point,
        &grid,
        rel_tol,
        abs_tol,
        diagonal_covariance,
    )
    .map_err(value_err)?;
    let system = build_moment_system(&network.inner, diagonal_covariance);
    let d = PyDict::new(py);
    d.set_item("times", &traj.times)?;
    d.set_item("outputs", outputs_dict(py, &system, &traj)?)?;
    d.set_item("negative_variance", traj.negative_variance)?;
    d.set_item("steps_accepted", traj.stats.steps_accepted)?;
    d.set_item("steps_rejected", traj.stats.steps_rejected)?;
    d.set_item("rhs_evaluations", traj.stats.rhs_evaluations)?;
    Ok(d)
}

/// Solves the truncated master equation by uniformization and returns the
/// exact moments on the grid.
///
/// `bound` caps each species count; the default is eight times the total
/// initial copy number. The result dict mirrors `simulate` plus the state
/// count and the probability mass lost to truncation.
#[pyfunction]
#[pyo3(signature = (network, t_end=10.0, points=101, bound=None, params=None))]
fn oracle<'py>(
    py: Python<'py>,
    network: &Network,
    t_end: f64,
    points: usize,
    bound: Option<u64>,
    params: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = make_grid(t_end, points)?;
    let point = make_point(&network.inner, params)?;
    let bound_vec = match bound {
        Some(b) => vec![b; network.inner.num_species()],
        None => cme::default_bound(&network.inner),
    };
    let result = oracle_moments(&network.inner, &point, &grid, &bound_vec).map_err(value_err)?;
    // The oracle yields the same packed components as the closure, so the
    // closure system supplies the labels and packing.
    let system = build_moment_system(&network.inner, false);
    let n = network.inner.num_species();
    let outputs = PyDict::new(py);
    for (i, label) in system.output_labels().iter().enumerate() {
        let series: Vec<f64> = result
            .states
            .iter()
            .map(|s| if i < n { s.mu[i] } else { s.sigma.packed()[i - n] })
            .collect();
        outputs.set_item(label, series)?;
    }
    let d = PyDict::new(py);
    d.set_item("times", &result.times)?;
    d.set_item("outputs", outputs)?;
    d.set_item("states", result.num_states)?;
    d.set_item("residual_mass", result.residual_mass)?;
    Ok(d)
}

/// Finite-difference local sensitivities of every moment component with
/// respect to every rate parameter, raw and normalized.
///
/// Returns `times`, `params`, `outputs`, and nested dicts
/// `raw[param][output]` / `normalized[param][output]` of per-time values.
#[pyfunction]
#[pyo3(signature = (network, t_end=10.0, points=101, fd_step=1e-8,
                    diagonal_covariance=false, params=None))]
fn local<'py>(
    py: Python<'py>,
    network: &Network,
    t_end: f64,
    points: usize,
    fd_step: f64,
    diagonal_covariance: bool,
    params: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = make_grid(t_end, points)?;
    let point = make_point(&network.inner, params)?;
    let report = local_sensitivity(
        &network.inner,
        &point,
        fd_step,
        &grid,
        diagonal_covariance,
        None,
        None,
    )
    .map_err(value_err)?;
    let pack = |values: &[Vec<Vec<f64>>]| -> PyResult<Bound<'py, PyDict>> {
        let by_param = PyDict::new(py);
        for (pi, pname) in report.params.iter().enumerate() {
            let by_output = PyDict::new(py);
            for (oi, oname) in report.outputs.iter().enumerate() {
                by_output.set_item(oname, &values[pi][oi])?;
            }
            by_param.set_item(pname, by_output)?;
        }
        Ok(by_param)
    };
    let d = PyDict::new(py);
    d.set_item("times", &report.times)?;
    d.set_item("params", &report.params)?;
    d.set_item("outputs", &report.outputs)?;
    d.set_item("raw", pack(&report.raw)?)?;
    d.set_item("normalized", pack(&report.normalized)?)?;
    Ok(d)
}

/// Pick-and-freeze Sobol' indices for one species' mean and variance.
///
/// Samples `n` base pairs from the parameter box declared in the model
/// file and estimates first-order and total indices per output, parameter
/// and grid time. Missing estimates (degenerate variance) come back as
/// `None`. Returns `times`, `params`, `outputs`, `failed_rows`, and
/// nested dicts `first[output][param]` / `total[output][param]`.
#[pyfunction]
#[pyo3(signature = (network, t_end=10.0, points=101, n=15000, seed=1,
                    estimator="martinez", species=None, rel_tol=1e-8, abs_tol=1e-10,
                    diagonal_covariance=false))]
#[allow(clippy::too_many_arguments)]
fn sobol<'py>(
    py: Python<'py>,
    network: &Network,
    t_end: f64,
    points: usize,
    n: usize,
    seed: u64,
    estimator: &str,
    species: Option<&str>,
    rel_tol: f64,
    abs_tol: f64,
    diagonal_covariance: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = make_grid(t_end, points)?;
    let target = species_target(&network.inner, species)?;
    let pbox = ParameterBox::from_network(&network.inner).map_err(value_err)?;
    let design = sample_design(&pbox, n, seed).map_err(value_err)?;
    let system = build_moment_system(&network.inner, diagonal_covariance);
    let selection = [system.mean_index(target), system.cov_index(target, target)];
    let opts = momsens::EvalOptions {
        grid: &grid,
        rel_tol,
        abs_tol,
        diagonal_covariance,
        selection: Some(&selection),
    };
    let eval = evaluate_design(&design, &network.inner, &opts).map_err(value_err)?;
    let report = match estimator {
        "martinez" => martinez_indices(&eval),
        "jansen" => jansen_indices(&eval),
        other => {
            return Err(PyValueError::new_err(format!(
                "estimator must be 'martinez' or 'jansen', got '{other}'"
            )))
        }
    };
    let pack = |values: &[Vec<Vec<Option<f64>>>]| -> PyResult<Bound<'py, PyDict>> {
        let by_output = PyDict::new(py);
        for (oi, oname) in report.outputs.iter().enumerate() {
            let by_param = PyDict::new(py);
            for (pi, pname) in report.params.iter().enumerate() {
                by_param.set_item(pname, &values[oi][pi])?;
            }
            by_output.set_item(oname, by_param)?;
        }
        Ok(by_output)
    };
    let d = PyDict::new(py);
    d.set_item("times", &report.times)?;
    d.set_item("params", &report.params)?;
    d.set_item("outputs", &report.outputs)?;
    d.set_item("estimator", report.estimator)?;
    d.set_item("n", report.n)?;
    d.set_item("seed", report.seed)?;
    d.set_item("failed_rows", report.failed_rows)?;
    d.set_item("first", pack(&report.first)?)?;
    d.set_item("total", pack(&report.total)?)?;
    Ok(d)
}

#[pymodule]
fn momsens_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(local, m)?)?;
    m.add_function(wrap_pyfunction!(sobol, m)?)?;
    Ok(())
}
