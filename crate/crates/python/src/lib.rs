//! Python bindings for the `gfft` crate.

use std::sync::Arc;

use gfft::cmspace::cosine_basis;
use gfft::fresnel::{self, build_fresnel};
use gfft::gbm::sample_paths;
use gfft::mcharness::{self, CS_DRIFT_COEF};
use gfft::timefns::validate_config;
use gfft::{AtomicMeasure, CMElement, KernelOperator, LambdaPair, PhaseFunctional, RngStream, SpaceConfig, TimeFn};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: gfft::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Drift a, variance b and a uniform time grid.
#[pyclass(frozen, module = "gfft")]
struct Space {
    cfg: Arc<SpaceConfig>,
}

#[pymethods]
impl Space {
    #[new]
    #[pyo3(signature = (a_family="zero", a_params=vec![], b_family="linear", b_params=vec![1.0], horizon=1.0, n=512))]
    fn new(a_family: &str, a_params: Vec<f64>, b_family: &str, b_params: Vec<f64>, horizon: f64, n: usize) -> PyResult<Self> {
        let a = TimeFn::from_family(a_family, &a_params).map_err(py_err)?;
        let b = TimeFn::from_family(b_family, &b_params).map_err(py_err)?;
        let cfg = SpaceConfig::validated(a, b, horizon, n).map_err(py_err)?;
        Ok(Space { cfg: Arc::new(cfg) })
    }

    #[getter]
    fn n(&self) -> usize {
        self.cfg.n()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.cfg.horizon()
    }

    /// List of (check name, passed, value).
    fn validate(&self) -> PyResult<Vec<(String, bool, f64)>> {
        let rep = validate_config(&self.cfg).map_err(py_err)?;
        Ok(rep.checks.into_iter().map(|c| (c.name, c.pass, c.value)).collect())
    }

    /// Element whose density is the polynomial with the given coefficients (constant first).
    fn element(&self, poly: Vec<f64>) -> PyResult<Element> {
        Ok(Element(CMElement::from_poly(&poly, &self.cfg).map_err(py_err)?))
    }

    /// Element with density a'/b', so that (w, drift) = (w, a).
    fn drift_element(&self) -> PyResult<Element> {
        Ok(Element(CMElement::drift(&self.cfg).map_err(py_err)?))
    }

    /// Node values of `count` sample paths.
    #[pyo3(signature = (count, seed=0, stream=0))]
    fn sample_paths(&self, count: usize, seed: u64, stream: u64) -> PyResult<Vec<Vec<f64>>> {
        let paths = sample_paths(&self.cfg, count, &RngStream::new(seed, stream)).map_err(py_err)?;
        Ok(paths.iter().map(|p| p.node_values()).collect())
    }
}

/// Element of the Cameron-Martin space, stored by its density.
#[pyclass(frozen, from_py_object, module = "gfft")]
#[derive(Clone)]
struct Element(CMElement);

#[pymethods]
impl Element {
    fn inner(&self, other: &Element) -> PyResult<f64> {
        self.0.inner(&other.0).map_err(py_err)
    }

    fn norm_sq(&self) -> f64 {
        self.0.norm_sq()
    }

    /// (w, a)
    fn inner_drift(&self) -> f64 {
        self.0.inner_drift()
    }

    fn path_values(&self) -> Vec<f64> {
        self.0.path_values()
    }

    fn density(&self) -> Vec<f64> {
        self.0.density()
    }
}

/// Finite sum of coef * exp{i (u1, x1)~ + i (u2, x2)~}.
#[pyclass(module = "gfft")]
struct Functional(PhaseFunctional);

#[pymethods]
impl Functional {
    #[new]
    fn new(space: &Space) -> Self {
        Functional(PhaseFunctional::new(&space.cfg))
    }

    /// The constant functional 1.
    #[staticmethod]
    fn one(space: &Space) -> Self {
        Functional(PhaseFunctional::one(&space.cfg))
    }

    /// Functional induced by an atomic measure sum coef_k delta_{w_k} and kernels phi1, phi2.
    #[staticmethod]
    fn from_measure(coefs: Vec<Complex64>, elements: Vec<Element>, phi1: Vec<f64>, phi2: Vec<f64>) -> PyResult<Self> {
        if coefs.len() != elements.len() || elements.is_empty() {
            return Err(PyValueError::new_err("need one coefficient per element and at least one atom"));
        }
        let cfg = elements[0].0.cfg().clone();
        let mut mu = AtomicMeasure::new();
        for (c, w) in coefs.into_iter().zip(elements) {
            mu.push(c, w.0).map_err(py_err)?;
        }
        let a1 = KernelOperator::from_poly(&phi1, &cfg).map_err(py_err)?;
        let a2 = KernelOperator::from_poly(&phi2, &cfg).map_err(py_err)?;
        Ok(Functional(build_fresnel(&mu, &a1, &a2).map_err(py_err)?))
    }

    fn add(&mut self, coef: Complex64, u1: &Element, u2: &Element) -> PyResult<()> {
        self.0.push(coef, u1.0.clone(), u2.0.clone()).map_err(py_err)
    }

    fn total_variation(&self) -> f64 {
        self.0.total_variation()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// One verification line: closed form against an independent estimate.
#[pyclass(frozen, get_all, module = "gfft")]
struct Report {
    theorem_id: String,
    n: usize,
    closed: Complex64,
    estimate: Complex64,
    stderr: f64,
    discrepancy: f64,
    threshold: f64,
    passed: bool,
}

impl From<gfft::VerifyReport> for Report {
    fn from(r: gfft::VerifyReport) -> Self {
        Report {
            theorem_id: r.theorem_id,
            n: r.n,
            closed: r.closed,
            estimate: r.estimate,
            stderr: r.stderr,
            discrepancy: r.discrepancy,
            threshold: r.threshold,
            passed: r.pass,
        }
    }
}

#[pymethods]
impl Report {
    fn __repr__(&self) -> String {
        format!(
            "Report({}, n={}, discrepancy={:.3e}, threshold={:.3e}, passed={})",
            self.theorem_id, self.n, self.discrepancy, self.threshold, self.passed
        )
    }
}

/// Principal branch of lambda^{-1/2} on the closed right half-plane minus 0.
#[pyfunction]
fn inv_sqrt(lambda: Complex64) -> PyResult<Complex64> {
    fresnel::inv_sqrt(lambda).map_err(py_err)
}

#[pyfunction]
fn psi(lambda1: Complex64, lambda2: Complex64, u1: &Element, u2: &Element) -> PyResult<Complex64> {
    let lam = LambdaPair::interior(lambda1, lambda2).map_err(py_err)?;
    Ok(fresnel::psi(&lam, &u1.0, &u2.0))
}

#[pyfunction]
#[pyo3(signature = (f, lambda1, lambda2, q0=0.5))]
fn analytic_integral(f: &Functional, lambda1: Complex64, lambda2: Complex64, q0: f64) -> PyResult<Complex64> {
    let lam = LambdaPair::interior(lambda1, lambda2).map_err(py_err)?;
    fresnel::analytic_integral(&f.0, &lam, q0).map_err(py_err)
}

#[pyfunction]
fn feynman_integral(f: &Functional, q1: f64, q2: f64, q0: f64) -> PyResult<Complex64> {
    fresnel::feynman_integral(&f.0, [q1, q2], q0).map_err(py_err)
}

#[pyfunction]
fn verify_cs_feynman(f: &Functional, g1: &Element, g2: &Element, q1: f64, q2: f64, q0: f64) -> PyResult<Report> {
    let r = mcharness::verify_cameron_storvick_feynman(&f.0, &g1.0, &g2.0, [q1, q2], q0, CS_DRIFT_COEF).map_err(py_err)?;
    Ok(r.into())
}

#[pyfunction]
#[pyo3(signature = (f, rho1, rho2, n_list, samples=0, seed=0))]
fn verify_scale(f: &Functional, rho1: f64, rho2: f64, n_list: Vec<usize>, samples: usize, seed: u64) -> PyResult<Vec<Report>> {
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    let basis = cosine_basis(n_max, f.0.cfg()).map_err(py_err)?;
    let mc = (samples > 0).then(|| (samples, RngStream::new(seed, 0)));
    let rep = mcharness::verify_change_of_scale(&f.0, [rho1, rho2], &basis, &n_list, mc).map_err(py_err)?;
    Ok(rep.all_reports().into_iter().map(Report::from).collect())
}

#[pyfunction]
#[pyo3(signature = (lambda, w, n, samples=0, seed=0))]
fn verify_lemma(lambda: Complex64, w: &Element, n: usize, samples: usize, seed: u64) -> PyResult<Vec<Report>> {
    let basis = cosine_basis(n, w.0.cfg()).map_err(py_err)?;
    let reps = mcharness::verify_lemma_limit(lambda, &w.0, &basis, n, samples, &RngStream::new(seed, 0)).map_err(py_err)?;
    Ok(reps.into_iter().map(Report::from).collect())
}

#[pymodule]
#[pyo3(name = "gfft")]
fn gfft_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Space>()?;
    m.add_class::<Element>()?;
    m.add_class::<Functional>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(inv_sqrt, m)?)?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_integral, m)?)?;
    m.add_function(wrap_pyfunction!(feynman_integral, m)?)?;
    m.add_function(wrap_pyfunction!(verify_cs_feynman, m)?)?;
    m.add_function(wrap_pyfunction!(verify_scale, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemma, m)?)?;
    Ok(())
}
