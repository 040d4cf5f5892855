//! Python bindings: torus algebra elements, spectra, Dixmier estimates and
//! verification campaigns. Structured results are returned as Python
//! dictionaries decoded from the same JSON the command-line driver emits.

use std::collections::HashMap;

use ncg_core::campaign::{run_campaign as run, CampaignConfig, CheckKind, CheckSpec};
use ncg_core::coverings::{embed, CoveringParams};
use ncg_core::dixmier::{self, dirac_inverse_power_stream, FitModel, SingularValueStream};
use ncg_core::error::NcgError;
use ncg_core::spectral::{self, DiracParams};
use ncg_core::torus::{adjoint, normal_order_product, AlgebraElement, DeformationAngle, Monomial};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: NcgError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Finitely supported element `Σ a_{rs} u^r v^s` of the torus algebra.
#[pyclass(name = "Element", module = "ncg")]
#[derive(Clone)]
struct PyElement {
    inner: AlgebraElement,
}

#[pymethods]
impl PyElement {
    /// `terms` maps `(r, s)` to the coefficient of `u^r v^s`.
    #[new]
    #[pyo3(signature = (theta, terms=HashMap::new()))]
    fn new(theta: f64, terms: HashMap<(i64, i64), Complex64>) -> PyResult<Self> {
        let theta = DeformationAngle::new(theta).map_err(err)?;
        Ok(PyElement {
            inner: AlgebraElement::from_terms(theta, terms.into_iter().map(|((r, s), c)| (Monomial::new(r, s), c))),
        })
    }

    #[staticmethod]
    fn monomial(theta: f64, r: i64, s: i64) -> PyResult<Self> {
        let theta = DeformationAngle::new(theta).map_err(err)?;
        Ok(PyElement {
            inner: AlgebraElement::monomial(theta, r, s),
        })
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta().value()
    }

    fn coefficient(&self, r: i64, s: i64) -> Complex64 {
        self.inner.coefficient(r, s)
    }

    fn terms(&self) -> HashMap<(i64, i64), Complex64> {
        self.inner.terms().map(|(w, c)| ((w.r, w.s), c)).collect()
    }

    fn adjoint(&self) -> Self {
        PyElement {
            inner: adjoint(&self.inner),
        }
    }

    /// Image under the embedding into the `(m, n, k)` covering algebra.
    #[pyo3(signature = (m, n, k=0))]
    fn embed(&self, m: u32, n: u32, k: u64) -> PyResult<Self> {
        let c = CoveringParams::new(m, n, k).map_err(err)?;
        Ok(PyElement {
            inner: embed(&self.inner, &c),
        })
    }

    fn distance(&self, other: &PyElement) -> f64 {
        self.inner.distance(&other.inner)
    }

    fn __add__(&self, other: &PyElement) -> PyResult<Self> {
        Ok(PyElement {
            inner: self.inner.try_add(&other.inner).map_err(err)?,
        })
    }

    fn __sub__(&self, other: &PyElement) -> PyResult<Self> {
        Ok(PyElement {
            inner: self.inner.try_sub(&other.inner).map_err(err)?,
        })
    }

    fn __mul__(&self, other: &PyElement) -> PyResult<Self> {
        Ok(PyElement {
            inner: normal_order_product(&self.inner, &other.inner).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Element(theta={}, terms={})", self.inner.theta().value(), self.inner.len())
    }
}

/// Eigenvalues of the truncated Dirac operator as `(eigenvalue, multiplicity)`.
#[pyfunction]
#[pyo3(signature = (tau_re=0.0, tau_im=1.0, m=1, n=1, window=16, theta=0.0))]
fn dirac_spectrum(tau_re: f64, tau_im: f64, m: u32, n: u32, window: u32, theta: f64) -> PyResult<Vec<(f64, usize)>> {
    let theta = DeformationAngle::new(theta).map_err(err)?;
    let p = DiracParams::scaled(Complex64::new(tau_re, tau_im), theta, m, n).map_err(err)?;
    Ok(spectral::dirac_spectrum(&p, window)
        .map_err(err)?
        .into_iter()
        .map(|e| (e.eigenvalue, e.multiplicity))
        .collect())
}

/// `σ_λ` of a finite stream of singular values (any order).
#[pyfunction]
fn sigma_lambda(values: Vec<f64>, lam: f64) -> PyResult<f64> {
    let sv = SingularValueStream::from_diagonal(&values).map_err(err)?;
    dixmier::sigma_lambda(&sv, lam).map_err(err)
}

/// Noncommutative-integral estimate of a decreasing stream.
#[pyfunction]
#[pyo3(signature = (values, lambda_max, model="loglog"))]
fn ncint_estimate(py: Python<'_>, values: Vec<f64>, lambda_max: f64, model: &str) -> PyResult<PyObject> {
    let model = match model {
        "loglog" => FitModel::LogLogarithmic,
        "log" => FitModel::Logarithmic,
        other => return Err(PyValueError::new_err(format!("unknown fit model {other:?}"))),
    };
    let sv = SingularValueStream::explicit(values).map_err(err)?;
    to_py(py, &dixmier::ncint_estimate(&sv, lambda_max, model).map_err(err)?)
}

/// `∮|D|⁻²` for the (scaled) lattice Dirac operator.
#[pyfunction]
#[pyo3(signature = (tau_re=0.0, tau_im=1.0, m=1, n=1, lambda_max=1e6))]
fn dirac_integral(py: Python<'_>, tau_re: f64, tau_im: f64, m: u32, n: u32, lambda_max: f64) -> PyResult<PyObject> {
    let count = lambda_max.max(0.0).ceil() as usize + 2;
    let sv = dirac_inverse_power_stream(Complex64::new(tau_re, tau_im), m, n, 2.0, count).map_err(err)?;
    to_py(py, &dixmier::ncint_estimate(&sv, lambda_max, FitModel::default()).map_err(err)?)
}

/// Runs one registered check; keyword arguments are the check parameters.
#[pyfunction]
#[pyo3(signature = (check, **params))]
fn verify(py: Python<'_>, check: &str, params: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<PyObject> {
    let kind: CheckKind = serde_json::from_value(serde_json::Value::String(check.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown check {check:?}")))?;
    let mut spec = serde_json::to_value(CheckSpec::new(kind)).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(params) = params {
        let text: String = py.import("json")?.call_method1("dumps", (params,))?.extract()?;
        let extra: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        spec.as_object_mut().expect("check specs serialize as objects").extend(extra);
    }
    let spec: CheckSpec = serde_json::from_value(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    spec.validate("").map_err(err)?;
    let reports = py.allow_threads(|| spec.run()).map_err(err)?;
    to_py(py, &reports)
}

/// Runs a campaign given as JSON text, or a bundled preset by name.
#[pyfunction]
#[pyo3(signature = (config=None, preset=None, workers=None))]
fn run_campaign(py: Python<'_>, config: Option<&str>, preset: Option<&str>, workers: Option<usize>) -> PyResult<PyObject> {
    let config = match (config, preset) {
        (Some(text), None) => CampaignConfig::from_json(text).map_err(err)?,
        (None, Some(name)) => CampaignConfig::preset(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))?,
        _ => return Err(PyValueError::new_err("give exactly one of config or preset")),
    };
    let report = py.allow_threads(|| run(&config, workers)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn ncg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyElement>()?;
    m.add_function(wrap_pyfunction!(dirac_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(ncint_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(dirac_integral, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add("SCHEMA", ncg_core::campaign::SCHEMA)?;
    Ok(())
}
