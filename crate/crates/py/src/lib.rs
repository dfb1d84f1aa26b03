//! Python bindings for `effbound-core`.
//!
//! Reports come back as plain Python objects with read-only attributes; `to_json()` gives the
//! same serialization the command-line tool writes.

use std::sync::Arc;

use effbound_core as core;
use effbound_core::models::{self, Bump, ModelFamily};
use effbound_core::ratelab::{self, Estimator, ExperimentKind, RateExperiment, Sampler};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("reports serialize")
}

#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(Arc<core::GridMeasure>);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(points: Vec<f64>, weights: Vec<f64>) -> PyResult<Self> {
        Ok(Self(Arc::new(
            core::GridMeasure::new(points, weights).map_err(err)?,
        )))
    }

    /// `m` right endpoints of `[a, b]` with equal weights `(b - a) / m`.
    #[staticmethod]
    fn uniform(a: f64, b: f64, m: usize) -> PyResult<Self> {
        Ok(Self(Arc::new(
            core::GridMeasure::uniform(a, b, m).map_err(err)?,
        )))
    }

    #[staticmethod]
    fn counting(points: Vec<f64>) -> PyResult<Self> {
        Ok(Self(Arc::new(
            core::GridMeasure::counting(points).map_err(err)?,
        )))
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.0.points().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Density", frozen, from_py_object)]
#[derive(Clone)]
struct PyDensity(core::Density);

#[pymethods]
impl PyDensity {
    #[new]
    #[pyo3(signature = (values, grid, normalize = false))]
    fn new(values: Vec<f64>, grid: &PyGrid, normalize: bool) -> PyResult<Self> {
        let d = if normalize {
            core::Density::normalized(values, grid.0.clone())
        } else {
            core::Density::new(values, grid.0.clone())
        };
        Ok(Self(d.map_err(err)?))
    }

    #[staticmethod]
    fn uniform(grid: &PyGrid) -> PyResult<Self> {
        Ok(Self(core::Density::uniform(grid.0.clone()).map_err(err)?))
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    /// Pairing weights `p_i * mu_i`.
    #[getter]
    fn mass(&self) -> Vec<f64> {
        self.0.mass().to_vec()
    }

    fn expect(&self, f: Vec<f64>) -> PyResult<f64> {
        self.0.expect(&f).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn norm_spec(exponent: f64, weighted: bool) -> PyResult<core::NormSpec> {
    let weighting = if weighted {
        core::Weighting::P0
    } else {
        core::Weighting::Unweighted
    };
    core::NormSpec::new(exponent, weighting).map_err(err)
}

#[pyclass(name = "ScoreOperator", frozen, from_py_object)]
#[derive(Clone)]
struct PyScoreOperator(core::ScoreOperator);

#[pymethods]
impl PyScoreOperator {
    /// Dense operator from a list of rows. The domain norm is `L_q` with counting weights
    /// unless `weighted` is set, in which case `L_q(P0)`.
    #[staticmethod]
    #[pyo3(signature = (rows, density, exponent = 2.0, weighted = false))]
    fn dense(
        rows: Vec<Vec<f64>>,
        density: &PyDensity,
        exponent: f64,
        weighted: bool,
    ) -> PyResult<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(PyValueError::new_err("rows have different lengths"));
        }
        let a = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
        let op = core::ScoreOperator::dense(a, density.0.clone(), norm_spec(exponent, weighted)?);
        Ok(Self(op.map_err(err)?))
    }

    #[staticmethod]
    #[pyo3(signature = (diag, density, exponent = 2.0, weighted = false))]
    fn diagonal(
        diag: Vec<f64>,
        density: &PyDensity,
        exponent: f64,
        weighted: bool,
    ) -> PyResult<Self> {
        let op =
            core::ScoreOperator::diagonal(diag, density.0.clone(), norm_spec(exponent, weighted)?);
        Ok(Self(op.map_err(err)?))
    }

    fn with_zero_columns(&self, cols: Vec<usize>) -> PyResult<Self> {
        Ok(Self(self.0.clone().with_zero_columns(&cols).map_err(err)?))
    }

    fn apply(&self, alpha: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.apply(&alpha).map_err(err)
    }

    fn adjoint_apply(&self, delta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.adjoint_apply(&delta).map_err(err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.nrows(), self.0.ncols())
    }
}

#[pyclass(name = "InfoProblem", frozen, from_py_object)]
#[derive(Clone)]
struct PyInfoProblem(core::InfoProblem);

#[pymethods]
impl PyInfoProblem {
    /// `gradient` holds pairing coefficients `d`: `psi'(alpha) = sum_i alpha_i d_i p_i mu_i`.
    #[new]
    #[pyo3(signature = (operator, gradient, centered = false))]
    fn new(operator: &PyScoreOperator, gradient: Vec<f64>, centered: bool) -> PyResult<Self> {
        let g = core::GradientFunctional::new(gradient, "gradient").map_err(err)?;
        Ok(Self(
            core::InfoProblem::new(operator.0.clone(), g, centered).map_err(err)?,
        ))
    }

    #[pyo3(signature = (rank_tol = None, residual_tol = None, info_zero_tol = None))]
    fn with_tolerances(
        &self,
        rank_tol: Option<f64>,
        residual_tol: Option<f64>,
        info_zero_tol: Option<f64>,
    ) -> PyResult<Self> {
        let mut t = self.0.tolerances();
        t.rank_tol = rank_tol.unwrap_or(t.rank_tol);
        t.residual_tol = residual_tol.unwrap_or(t.residual_tol);
        t.info_zero_tol = info_zero_tol.unwrap_or(t.info_zero_tol);
        Ok(Self(self.0.clone().with_tolerances(t).map_err(err)?))
    }

    fn information(&self) -> PyResult<PyInfoReport> {
        Ok(PyInfoReport(
            core::compute_information(&self.0).map_err(err)?,
        ))
    }

    fn directional_information(&self, alpha: Vec<f64>) -> PyResult<f64> {
        core::directional_information(&self.0, &alpha).map_err(err)
    }

    /// Both sides of the positive-information / adjoint-range equivalence, as a JSON string.
    fn verify(&self) -> PyResult<String> {
        let report = core::compute_information(&self.0).map_err(err)?;
        Ok(json(&core::verdict_from_report(
            &report,
            self.0.tolerances(),
        )))
    }

    fn quotient_check(&self) -> PyResult<String> {
        Ok(json(&core::quotient_information(&self.0).map_err(err)?))
    }

    #[getter]
    fn estimand(&self) -> Option<f64> {
        self.0.estimand()
    }
}

#[pyclass(name = "InfoReport", frozen)]
struct PyInfoReport(core::InfoReport);

#[pymethods]
impl PyInfoReport {
    #[getter]
    fn info(&self) -> f64 {
        self.0.info
    }

    #[getter]
    fn identifiable(&self) -> bool {
        self.0.identifiable
    }

    #[getter]
    fn locally_constant(&self) -> bool {
        self.0.locally_constant
    }

    #[getter]
    fn minimizer(&self) -> Option<Vec<f64>> {
        self.0.minimizer.clone()
    }

    #[getter]
    fn representer(&self) -> Vec<f64> {
        self.0.representer.clone()
    }

    #[getter]
    fn representer_norm(&self) -> f64 {
        self.0.representer_norm
    }

    #[getter]
    fn relative_residual(&self) -> f64 {
        self.0.relative_residual
    }

    #[getter]
    fn certificate(&self) -> Option<Vec<f64>> {
        self.0.certificate.clone()
    }

    fn to_json(&self) -> String {
        json(&self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "InfoReport(info={}, identifiable={}, relative_residual={:e})",
            self.0.info, self.0.identifiable, self.0.relative_residual
        )
    }
}

/// Mean of `g(X)` with the identity score operator and an `L_q(P0)` domain norm.
#[pyfunction]
#[pyo3(signature = (density, g, q = 2.0, centered = false))]
fn mean_model(density: &PyDensity, g: Vec<f64>, q: f64, centered: bool) -> PyResult<PyInfoProblem> {
    let spec = models::MeanModelSpec::new(density.0.clone(), g, q, centered).map_err(err)?;
    Ok(PyInfoProblem(models::build_mean_model(&spec).map_err(err)?))
}

/// Density at grid index `x_index`, with a flat or ramp bump.
#[pyfunction]
#[pyo3(signature = (density, x_index, bump = "ramp"))]
fn density_model(density: &PyDensity, x_index: usize, bump: &str) -> PyResult<PyInfoProblem> {
    let spec = match bump {
        "flat" => models::DensityModelSpec::flat(density.0.clone(), x_index),
        "ramp" => models::DensityModelSpec::ramp(density.0.clone(), x_index),
        other => return Err(PyValueError::new_err(format!("unknown bump {other:?}"))),
    }
    .map_err(err)?;
    Ok(PyInfoProblem(
        models::build_density_model(&spec).map_err(err)?,
    ))
}

/// Information along a sequence of grid sizes; returns the report as a JSON string.
///
/// `family` is `"mean_power"` (uses `gamma`, `q`, `centered`) or `"density_at_point"` (uses
/// `x`, `bump`).
#[pyfunction]
#[pyo3(signature = (family, m_values, gamma = 0.0, q = 2.0, centered = false, x = 0.5, bump = "ramp"))]
#[allow(clippy::too_many_arguments)]
fn refinement_study(
    family: &str,
    m_values: Vec<usize>,
    gamma: f64,
    q: f64,
    centered: bool,
    x: f64,
    bump: &str,
) -> PyResult<String> {
    let family = match family {
        "mean_power" => ModelFamily::MeanPower { gamma, q, centered },
        "density_at_point" => {
            let bump = match bump {
                "flat" => Bump::Flat,
                "ramp" => Bump::Ramp,
                other => return Err(PyValueError::new_err(format!("unknown bump {other:?}"))),
            };
            ModelFamily::DensityAtPoint { x, bump }
        }
        other => return Err(PyValueError::new_err(format!("unknown family {other:?}"))),
    };
    Ok(json(
        &models::refinement_study(&family, &m_values).map_err(err)?,
    ))
}

/// Seeded Monte Carlo RMSE experiment; returns the report as a JSON string.
///
/// `sampler` is one of `"uniform"` (on [0, 1]), `"pareto"` (shape `a`, scale 1) or `"beta"`
/// (`a`, `b`). With `x` set the target is the density at `x`, estimated by a kernel estimator;
/// otherwise the mean, estimated by the sample mean.
#[pyfunction]
#[pyo3(signature = (sampler, n_values, replications, seed = 0, a = 1.5, b = 2.0, x = None))]
fn rate_experiment(
    sampler: &str,
    n_values: Vec<usize>,
    replications: usize,
    seed: u64,
    a: f64,
    b: f64,
    x: Option<f64>,
) -> PyResult<String> {
    let sampler = match sampler {
        "uniform" => Sampler::Uniform {
            low: 0.0,
            high: 1.0,
        },
        "pareto" => Sampler::Pareto { a, x_min: 1.0 },
        "beta" => Sampler::Beta { a, b },
        other => return Err(PyValueError::new_err(format!("unknown sampler {other:?}"))),
    };
    let (kind, estimator) = match x {
        Some(x) => (
            ExperimentKind::DensityAtPoint { x },
            Estimator::KernelDensity {
                bandwidth_constant: 1.0,
            },
        ),
        None => (ExperimentKind::MeanEstimation, Estimator::SampleMean),
    };
    let e =
        RateExperiment::new(kind, sampler, estimator, n_values, replications, seed).map_err(err)?;
    Ok(json(&ratelab::run_experiment(&e).map_err(err)?))
}

#[pymodule]
fn effbound(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyDensity>()?;
    m.add_class::<PyScoreOperator>()?;
    m.add_class::<PyInfoProblem>()?;
    m.add_class::<PyInfoReport>()?;
    m.add_function(wrap_pyfunction!(mean_model, m)?)?;
    m.add_function(wrap_pyfunction!(density_model, m)?)?;
    m.add_function(wrap_pyfunction!(refinement_study, m)?)?;
    m.add_function(wrap_pyfunction!(rate_experiment, m)?)?;
    Ok(())
}
