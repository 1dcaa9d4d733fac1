//! Python bindings. Results come back as plain dicts and lists; constraint
//! indices are 0-based with equalities first, as in the Rust library.

use movepoly_core::regularity::{self, SamplingPlan};
use movepoly_core::{
    linalg, multipliers, projection, scenarios, Error, MovingPolyhedron, MultiplierPolicy, ProjectionConfig,
    ReducedMultiplier,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(movepoly, MovepolyError, PyException);
create_exception!(movepoly, InfeasibleError, MovepolyError);
create_exception!(movepoly, GuardExceededError, MovepolyError);

fn err(e: Error) -> PyErr {
    match e {
        Error::InfeasibleSet { .. } => InfeasibleError::new_err(e.to_string()),
        Error::GuardExceeded { .. } => GuardExceededError::new_err(e.to_string()),
        Error::SolverFailure(_) | Error::NoSamples(_) => MovepolyError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| MovepolyError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A moving polyhedron `C(p)` with affine data.
#[pyclass(name = "Problem", module = "movepoly", frozen)]
struct PyProblem {
    inner: MovingPolyhedron,
    sequence: Option<scenarios::PowerSequence>,
}

impl PyProblem {
    fn plan(&self, seed: u64, samples: Option<usize>, levels: Option<usize>) -> SamplingPlan {
        let mut plan = SamplingPlan::from_problem(&self.inner);
        plan.seed = seed;
        if let Some(n) = samples {
            plan.samples = n;
        }
        if let Some(l) = levels {
            plan.levels = l;
        }
        plan
    }

    fn config(&self) -> ProjectionConfig {
        ProjectionConfig::from(self.inner.tolerances())
    }
}

#[pymethods]
impl PyProblem {
    /// Parse a problem file (JSON text).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = movepoly_core::parse_problem(text).map_err(err)?;
        Ok(Self { inner, sequence: None })
    }

    /// A built-in scenario by name, or `random:SEED`.
    #[staticmethod]
    fn scenario(name: &str) -> PyResult<Self> {
        let s = scenarios::scenario_by_name(name).map_err(err)?;
        Ok(Self {
            inner: s.problem,
            sequence: s.sequences.into_iter().next(),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        movepoly_core::serialize_problem(&self.inner).map_err(err)
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    #[getter]
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    #[getter]
    fn n_eq(&self) -> usize {
        self.inner.n_eq()
    }

    #[getter]
    fn base_param(&self) -> Vec<f64> {
        self.inner.base_param().to_vec()
    }

    #[getter]
    fn base_point(&self) -> Vec<f64> {
        self.inner.base_point().to_vec()
    }

    /// Position of each stored constraint in the source file.
    #[getter]
    fn source_order(&self) -> Vec<usize> {
        self.inner.source_order().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(d={}, m={}, eq={}, ineq={})",
            self.inner.ambient_dim(),
            self.inner.param_dim(),
            self.inner.n_eq(),
            self.inner.len() - self.inner.n_eq()
        )
    }

    /// Gradients `g_i(p)` and right-hand sides `f_i(p)` at `p`.
    fn instantiate(&self, p: Vec<f64>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        self.inner.instantiate(&p).map_err(err)?;
        let grads = self.inner.constraints().iter().map(|c| c.gradient(&p)).collect();
        let rhs = self.inner.constraints().iter().map(|c| c.rhs(&p)).collect();
        Ok((grads, rhs))
    }

    fn residual(&self, p: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
        self.inner.instantiate(&p).and_then(|i| i.residual(&x)).map_err(err)
    }

    /// Projection of `w` onto `C(p)` with multipliers and the reduced certificate.
    fn project(&self, py: Python<'_>, p: Vec<f64>, w: Vec<f64>) -> PyResult<Py<PyAny>> {
        let inst = self.inner.instantiate(&p).map_err(err)?;
        let r = projection::project(&inst, &w, &self.config()).map_err(err)?;
        let mut out = serde_json::to_value(&r).map_err(|e| MovepolyError::new_err(e.to_string()))?;
        if r.converged() {
            out["kkt_residual"] = projection::kkt_residual(&inst, &w, &r).into();
        }
        if r.converged() && r.distance > 0.0 {
            let tol = self.inner.tolerances().rank;
            if let ReducedMultiplier::Certificate(c) =
                multipliers::reduced_multiplier(&inst, &w, &r, tol).map_err(err)?
            {
                out["certificate"] = serde_json::to_value(&c).map_err(|e| MovepolyError::new_err(e.to_string()))?;
            }
        }
        to_py(py, &out)
    }

    /// Minimal-l1 normalised multiplier for `w` at `p`.
    #[pyo3(signature = (p, w, enumeration_guard=None))]
    fn min_l1_multiplier(
        &self,
        py: Python<'_>,
        p: Vec<f64>,
        w: Vec<f64>,
        enumeration_guard: Option<usize>,
    ) -> PyResult<Py<PyAny>> {
        let inst = self.inner.instantiate(&p).map_err(err)?;
        let r = projection::project(&inst, &w, &self.config()).map_err(err)?;
        let guard = enumeration_guard.unwrap_or(self.plan(0, None, None).enumeration_guard);
        let m = multipliers::min_l1_multiplier(&inst, &w, &r, guard, self.inner.tolerances().rank).map_err(err)?;
        to_py(py, &m)
    }

    #[pyo3(signature = (seed=0, samples=None))]
    fn check_rcrcq(&self, py: Python<'_>, seed: u64, samples: Option<usize>) -> PyResult<Py<PyAny>> {
        to_py(py, &regularity::check_rcrcq(&self.inner, &self.plan(seed, samples, None)).map_err(err)?)
    }

    #[pyo3(signature = (seed=0, samples=None))]
    fn check_liminf(&self, py: Python<'_>, seed: u64, samples: Option<usize>) -> PyResult<Py<PyAny>> {
        let plan = self.plan(seed, samples, None);
        to_py(py, &regularity::check_inner_semicontinuity(&self.inner, &plan).map_err(err)?)
    }

    #[pyo3(signature = (seed=0, samples=None, levels=None))]
    fn estimate_multiplier_bound(
        &self,
        py: Python<'_>,
        seed: u64,
        samples: Option<usize>,
        levels: Option<usize>,
    ) -> PyResult<Py<PyAny>> {
        let plan = self.plan(seed, samples, levels);
        to_py(py, &regularity::estimate_multiplier_bound(&self.inner, &plan).map_err(err)?)
    }

    /// The full pipeline: liminf, RCRCQ, M, alpha, the Aubin bound and a verdict.
    #[pyo3(signature = (seed=0, samples=None, levels=None))]
    fn estimate(&self, py: Python<'_>, seed: u64, samples: Option<usize>, levels: Option<usize>) -> PyResult<Py<PyAny>> {
        to_py(py, &regularity::analyze(&self.inner, &self.plan(seed, samples, levels)).map_err(err)?)
    }

    /// Normalised multipliers along the scenario's built-in sequence.
    /// `policy` is "reduced", "min-l1" or a list of 0-based constraint indices.
    #[pyo3(signature = (policy=None, kmin=1, kmax=20))]
    fn blowup(
        &self,
        py: Python<'_>,
        policy: Option<&Bound<'_, PyAny>>,
        kmin: usize,
        kmax: usize,
    ) -> PyResult<Py<PyAny>> {
        let seq = self
            .sequence
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("this problem has no built-in sequence"))?;
        let policy = match policy {
            None => MultiplierPolicy::Reduced,
            Some(obj) => match obj.extract::<String>() {
                Ok(s) if s == "reduced" => MultiplierPolicy::Reduced,
                Ok(s) if s == "min-l1" => MultiplierPolicy::MinL1,
                Ok(s) => return Err(PyValueError::new_err(format!("unknown policy '{s}'"))),
                Err(_) => MultiplierPolicy::FixedSubfamily(obj.extract()?),
            },
        };
        let table = regularity::detect_multiplier_blowup(&self.inner, &seq.points(kmin, kmax), &policy).map_err(err)?;
        to_py(py, &table)
    }
}

#[pyfunction]
fn paper_example() -> PyProblem {
    let s = scenarios::paper_example();
    PyProblem {
        inner: s.problem,
        sequence: s.sequences.into_iter().next(),
    }
}

#[pyfunction]
fn scenario_names() -> Vec<&'static str> {
    scenarios::SCENARIO_NAMES.to_vec()
}

/// Numerical rank of a family of vectors with its certificate.
#[pyfunction]
#[pyo3(signature = (vectors, tol=1e-9))]
fn numerical_rank(py: Python<'_>, vectors: Vec<Vec<f64>>, tol: f64) -> PyResult<Py<PyAny>> {
    let fam = linalg::VectorFamily::from_vectors(vectors).map_err(err)?;
    to_py(py, &linalg::numerical_rank(&fam, tol).map_err(err)?)
}

#[pyfunction]
fn gram_determinant(vectors: Vec<Vec<f64>>) -> PyResult<f64> {
    let fam = linalg::VectorFamily::from_vectors(vectors).map_err(err)?;
    linalg::gram_determinant(&fam).map_err(err)
}

#[pymodule]
fn movepoly(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(paper_example, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add_function(wrap_pyfunction!(numerical_rank, m)?)?;
    m.add_function(wrap_pyfunction!(gram_determinant, m)?)?;
    m.add("MovepolyError", m.py().get_type::<MovepolyError>())?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("GuardExceededError", m.py().get_type::<GuardExceededError>())?;
    Ok(())
}
