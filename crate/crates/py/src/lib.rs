//! Python bindings for `gepsim_core`.
//!
//! Matrices cross the boundary as lists of rows of complex numbers; vectors
//! as lists of complex numbers.

use std::path::PathBuf;

use gepsim_core::baseline::run_standard;
use gepsim_core::blockenc::{build_m_be, verify_be as core_verify_be};
use gepsim_core::diagnostics::{
    check_cond_m as core_check_cond_m, chord as core_chord, crawford_number,
};
use gepsim_core::instances::{self as inst_mod, Family, GepInstance};
use gepsim_core::matcore::{gen_eig as core_gen_eig, CMatrix, CVector, C64};
use gepsim_core::spectral::{self, PipelineConfig};
use gepsim_core::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Schema(_)
        | Error::SchemaVersionMismatch(_) => PyIOError::new_err(e.to_string()),
        Error::SingularB { .. } | Error::SingularMatrix { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix_from(rows: Vec<Vec<C64>>) -> PyResult<CMatrix> {
    CMatrix::from_rows(&rows).map_err(to_py)
}

fn matrix_to(m: &CMatrix) -> Vec<Vec<C64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn family_from(tag: &str) -> PyResult<Family> {
    Family::from_tag(tag).ok_or_else(|| PyValueError::new_err(format!("unknown family {tag:?}")))
}

/// A matrix pencil (A, B) with optional ground truth.
#[pyclass(name = "Instance", module = "gepsim", skip_from_py_object)]
#[derive(Clone)]
pub struct PyInstance {
    inner: GepInstance,
}

#[pymethods]
impl PyInstance {
    /// Seeded instance of a family using the default sweep recipe.
    #[staticmethod]
    fn standard(family: &str, n: usize, seed: u64) -> PyResult<Self> {
        let inner = inst_mod::standard_instance(family_from(family)?, n, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Symmetric pair with cond(B) = kappa_b and the given spectrum.
    #[staticmethod]
    fn symmetric(spectrum: Vec<f64>, kappa_b: f64, seed: u64) -> PyResult<Self> {
        let inner =
            inst_mod::gen_symmetric(spectrum.len(), kappa_b, &spectrum, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Nonsymmetric pencil with real spectrum and the given conditioning.
    #[staticmethod]
    fn diagonalizable(spectrum: Vec<f64>, kappa_e: f64, kappa_b: f64, seed: u64) -> PyResult<Self> {
        let inner =
            inst_mod::gen_diagonalizable_real(spectrum.len(), kappa_e, &spectrum, kappa_b, seed)
                .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Companion pencil of λ²A2 + λA1 + A0.
    #[staticmethod]
    fn quadratic(a2: Vec<Vec<C64>>, a1: Vec<Vec<C64>>, a0: Vec<Vec<C64>>) -> PyResult<Self> {
        let inner = inst_mod::gen_quadratic_linearized(
            &matrix_from(a2)?,
            &matrix_from(a1)?,
            &matrix_from(a0)?,
            0,
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Pencil from explicit matrices; the dense oracle becomes the truth
    /// when its spectrum is real.
    #[staticmethod]
    #[pyo3(signature = (a, b, family = "diagonalizable_real", seed = 0))]
    fn from_matrices(
        a: Vec<Vec<C64>>,
        b: Vec<Vec<C64>>,
        family: &str,
        seed: u64,
    ) -> PyResult<Self> {
        let mut inner =
            GepInstance::new(matrix_from(a)?, matrix_from(b)?, family_from(family)?, seed)
                .map_err(to_py)?;
        if let Ok(eig) = core_gen_eig(&inner.a, &inner.b) {
            let scale = eig.values.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if eig.values.iter().all(|z| z.im.abs() <= 1e-9 * scale) {
                inner.truth = Some(eig);
            }
        }
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: inst_mod::load_instance(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        inst_mod::save_instance(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.tag()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<C64>> {
        matrix_to(&self.inner.a)
    }

    #[getter]
    fn b(&self) -> Vec<Vec<C64>> {
        matrix_to(&self.inner.b)
    }

    /// Ground-truth eigenvalues, ascending, or None.
    #[getter]
    fn truth(&self) -> Option<Vec<f64>> {
        self.inner.truth_values()
    }

    fn kappa_b(&self) -> f64 {
        self.inner.kappa_b()
    }

    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    fn __repr__(&self) -> String {
        format!("Instance(id={:?}, n={})", self.inner.id(), self.inner.n)
    }
}

fn phi0_for(inst: &GepInstance, phi0: &Bound<'_, PyAny>) -> PyResult<CVector> {
    if let Ok(tag) = phi0.extract::<String>() {
        return match tag.as_str() {
            "uniform" => Ok(spectral::uniform_phi0(inst.n)),
            "balanced" => spectral::balanced_phi0(inst).map_err(to_py),
            _ => match tag
                .strip_prefix("eigvec:")
                .and_then(|j| j.parse::<usize>().ok())
            {
                Some(j) => spectral::eigvec_phi0(inst, j).map_err(to_py),
                None => Err(PyValueError::new_err(format!("unknown phi0 {tag:?}"))),
            },
        };
    }
    let v = CVector::new(phi0.extract::<Vec<C64>>()?);
    if v.len() != inst.n || v.norm() == 0.0 {
        return Err(PyValueError::new_err(
            "phi0 must be a nonzero vector of length n",
        ));
    }
    Ok(v.normalized())
}

/// h, p and tau for accuracy `epsilon` and eigenvalue bound `rho`.
#[pyfunction]
fn choose_params<'py>(py: Python<'py>, epsilon: f64, rho: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = spectral::choose_params(epsilon, rho).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("epsilon", p.epsilon)?;
    d.set_item("rho", p.rho)?;
    d.set_item("h", p.h)?;
    d.set_item("p", p.p)?;
    d.set_item("tau", p.tau)?;
    Ok(d)
}

/// Runs one method on an instance and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (instance, epsilon, method = "ode", phi0 = None, solver_error = 0.0, seed = 0))]
fn run<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    epsilon: f64,
    method: &str,
    phi0: Option<&Bound<'py, PyAny>>,
    solver_error: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let phi = match phi0 {
        Some(p) => phi0_for(inst, p)?,
        None => spectral::uniform_phi0(inst.n),
    };
    let report = match method {
        "ode" => {
            let mut cfg = PipelineConfig::new(epsilon);
            cfg.solver_error = solver_error;
            cfg.seed = seed;
            spectral::run_pipeline(inst, &phi, &cfg).map_err(to_py)?
        }
        "qpe" => run_standard(inst, &phi, epsilon).map_err(to_py)?,
        m => return Err(PyValueError::new_err(format!("unknown method {m:?}"))),
    };
    let d = PyDict::new(py);
    d.set_item("method", report.method.tag())?;
    d.set_item("p", report.params.p)?;
    d.set_item("h", report.params.h)?;
    d.set_item("tau", report.params.tau)?;
    d.set_item("rho", report.params.rho)?;
    d.set_item("estimates", report.estimates.clone())?;
    d.set_item("assisted", report.assisted.clone())?;
    d.set_item("truth", report.truth.clone())?;
    d.set_item("errors", report.truth_errors.clone())?;
    d.set_item("peak_masses", report.peak_masses.clone())?;
    d.set_item("probs", report.distribution.probs.clone())?;
    Ok(d)
}

/// (j, lambda, estimate, error, mass).
type ModeTuple = (usize, f64, f64, f64, f64);

/// One run per truth eigenvector; returns (j, lambda, estimate, error, mass) tuples.
#[pyfunction]
#[pyo3(signature = (instance, epsilon, solver_error = 0.0, seed = 0))]
fn recover_modes(
    instance: &PyInstance,
    epsilon: f64,
    solver_error: f64,
    seed: u64,
) -> PyResult<Vec<ModeTuple>> {
    let mut cfg = PipelineConfig::new(epsilon);
    cfg.solver_error = solver_error;
    cfg.seed = seed;
    let (_, modes) = spectral::recover_modes(&instance.inner, &cfg).map_err(to_py)?;
    Ok(modes
        .iter()
        .map(|m| (m.j, m.lambda, m.estimate, m.error, m.mass))
        .collect())
}

/// Dense generalized eigendecomposition: (values, vectors as rows of columns, kappa_E).
#[pyfunction]
#[allow(clippy::type_complexity)]
fn gen_eig(a: Vec<Vec<C64>>, b: Vec<Vec<C64>>) -> PyResult<(Vec<C64>, Vec<Vec<C64>>, f64)> {
    let e = core_gen_eig(&matrix_from(a)?, &matrix_from(b)?).map_err(to_py)?;
    Ok((e.values.clone(), matrix_to(&e.vectors), e.kappa_e))
}

/// Chordal distance between two (possibly complex) numbers.
#[pyfunction]
fn chord(a: C64, b: C64) -> f64 {
    core_chord(a, b)
}

/// Crawford number and, for definite pairs, the maximizing angle.
#[pyfunction]
fn crawford(a: Vec<Vec<C64>>, b: Vec<Vec<C64>>) -> PyResult<(f64, Option<f64>)> {
    let c = crawford_number(&matrix_from(a)?, &matrix_from(b)?).map_err(to_py)?;
    Ok((c.gamma, c.theta_star))
}

/// Condition checks of the collocation matrix for accuracy `epsilon`.
#[pyfunction]
fn check_cond_m<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    epsilon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let params =
        spectral::choose_params(epsilon, spectral::pipeline_rho(inst, epsilon)).map_err(to_py)?;
    let c = core_check_cond_m(inst, &spectral::uniform_phi0(inst.n), &params).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("p", params.p)?;
    d.set_item("norm_m", c.norm_m)?;
    d.set_item("norm_n", c.norm_n)?;
    d.set_item("inv_norm_m", c.inv_norm_m)?;
    d.set_item("kappa_m", c.kappa_m)?;
    d.set_item("kappa_e", c.kappa_e)?;
    d.set_item("norm_lower_ratio", c.norm_lower.ratio)?;
    d.set_item("norm_upper_ratio", c.norm_upper.ratio)?;
    d.set_item("inverse_ratio", c.inverse.ratio)?;
    d.set_item("hard_pass", c.hard_pass())?;
    Ok(d)
}

/// Builds the block-encoding of M and returns its defects, alpha and q.
#[pyfunction]
#[pyo3(signature = (instance, epsilon, p = None))]
fn verify_be<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    epsilon: f64,
    p: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let rho = spectral::pipeline_rho(inst, epsilon);
    let params = match p {
        Some(p) => spectral::params_with_p(epsilon, rho, p),
        None => spectral::choose_params(epsilon, rho),
    }
    .map_err(to_py)?;
    let be = build_m_be(inst, &params).map_err(to_py)?;
    let sys =
        spectral::build_system(inst, &spectral::uniform_phi0(inst.n), &params).map_err(to_py)?;
    let v = core_verify_be(&be, &sys.m).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("p", params.p)?;
    d.set_item("alpha", be.alpha)?;
    d.set_item("q", be.q)?;
    d.set_item("unitarity_defect", v.unitarity_defect)?;
    d.set_item("extraction_defect", v.extraction_defect)?;
    Ok(d)
}

#[pymodule]
fn gepsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    init(m)
}

/// Registers the classes and functions on `m`.
pub fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_function(wrap_pyfunction!(choose_params, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(recover_modes, m)?)?;
    m.add_function(wrap_pyfunction!(gen_eig, m)?)?;
    m.add_function(wrap_pyfunction!(chord, m)?)?;
    m.add_function(wrap_pyfunction!(crawford, m)?)?;
    m.add_function(wrap_pyfunction!(check_cond_m, m)?)?;
    m.add_function(wrap_pyfunction!(verify_be, m)?)?;
    Ok(())
}
