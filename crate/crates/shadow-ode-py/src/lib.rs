//! Python bindings: the main types and operations of the toolkit.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use shadow_ode::expr::{Curve, VectorField};
use shadow_ode::grid::GridSpec;
use shadow_ode::peano::{residual_check, solve_global, RuleSpec, SolveOptions};
use shadow_ode::perturb::{funnel, recover, verify_roundtrip, KnownSolution};
use shadow_ode::quad::integrate_certified;
use shadow_ode::shadow::Solution;
use shadow_ode::{Expression, SolverError};

fn err(e: SolverError) -> PyErr {
    match &e {
        SolverError::Parse(_) | SolverError::Invalid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A parsed vector field F(x, y0..y{n-1}).
#[pyclass(name = "Field", frozen)]
struct PyField {
    inner: VectorField,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(text: &str, dim: usize) -> PyResult<Self> {
        Ok(PyField {
            inner: VectorField::parse(text, dim).map_err(|e| err(e.into()))?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: f64, y: Vec<f64>) -> PyResult<Vec<f64>> {
        if y.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "state has {} component(s), field has {}",
                y.len(),
                self.inner.dim()
            )));
        }
        self.inner
            .eval(x, &y)
            .map_err(|e| err(SolverError::Domain { step: None, source: e }))
    }

    fn __repr__(&self) -> String {
        format!("Field({:?}, dim={})", self.inner.source(), self.inner.dim())
    }
}

/// A certified solution: samples, endpoint estimate, blow-up flag.
#[pyclass(name = "Solution", frozen)]
struct PySolution {
    inner: Solution,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn a_est(&self) -> Option<f64> {
        self.inner.a_est.is_finite().then_some(self.inner.a_est)
    }

    #[getter]
    fn blow_up(&self) -> bool {
        self.inner.blow_up
    }

    #[getter]
    fn order(&self) -> Option<f64> {
        let p = self.inner.certificate.order;
        p.is_finite().then_some(p)
    }

    #[getter]
    fn max_err_est(&self) -> f64 {
        self.inner.certificate.max_err_est
    }

    #[getter]
    fn provenance(&self) -> String {
        self.inner.provenance.clone()
    }

    /// Samples as (x, [y0..], err_est) tuples.
    fn samples(&self) -> Vec<(f64, Vec<f64>, f64)> {
        self.inner
            .samples
            .iter()
            .map(|s| (s.x, s.value.clone(), s.err_est))
            .collect()
    }

    /// Linear interpolation inside the sampled domain.
    fn value_at(&self, x: f64) -> Option<Vec<f64>> {
        self.inner.value_at(x)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.samples.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(samples={}, a_est={}, blow_up={})",
            self.inner.samples.len(),
            self.inner.a_est,
            self.inner.blow_up
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn build_options(
    t_max: f64,
    n0: u64,
    refinements: u32,
    tol: f64,
    spacing: f64,
    escape_r0: f64,
    pert: &str,
    two_sided: bool,
) -> PyResult<SolveOptions> {
    Ok(SolveOptions {
        n0,
        refinements,
        t_max,
        tol,
        query_spacing: spacing,
        escape_r0,
        rule: RuleSpec::parse(pert).map_err(err)?,
        two_sided,
        boundary_refine_passes: 0,
    })
}

/// Solve an initial value problem globally.
#[pyfunction]
#[pyo3(signature = (field, y0, x0 = 0.0, t_max = 2.0, n0 = 1024, refinements = 8,
                    tol = 1e-4, spacing = 0.0078125, escape_r0 = 1e6, pert = "zero",
                    two_sided = false))]
#[allow(clippy::too_many_arguments)]
fn solve(
    field: &PyField,
    y0: Vec<f64>,
    x0: f64,
    t_max: f64,
    n0: u64,
    refinements: u32,
    tol: f64,
    spacing: f64,
    escape_r0: f64,
    pert: &str,
    two_sided: bool,
) -> PyResult<PySolution> {
    let opts = build_options(t_max, n0, refinements, tol, spacing, escape_r0, pert, two_sided)?;
    let sol = solve_global(&field.inner, x0, &y0, &opts).map_err(err)?;
    Ok(PySolution { inner: sol })
}

/// Max FTC residual |y(z) - y(x) - int F| over random certified sample pairs.
#[pyfunction]
#[pyo3(signature = (solution, field, pairs = 50))]
fn residual(solution: &PySolution, field: &PyField, pairs: usize) -> PyResult<f64> {
    residual_check(&solution.inner, &field.inner, pairs).map_err(err)
}

/// Left-endpoint lattice sum certified by a doubling Cauchy ladder.
/// Returns (value, levels, deltas).
#[pyfunction]
#[pyo3(signature = (f, a, b, tol = 1e-4))]
fn integrate(f: &str, a: f64, b: f64, tol: f64) -> PyResult<(f64, Vec<u64>, Vec<f64>)> {
    let expr = Expression::parse_scalar(f).map_err(|e| err(e.into()))?;
    let (v, cert) = integrate_certified(&expr, a, b, tol).map_err(err)?;
    Ok((v, cert.levels, cert.deltas))
}

/// Recover the perturbation realizing a known solution and verify the round
/// trip. Returns (eps_max, max_deviation).
#[pyfunction]
#[pyo3(signature = (field, known, known_prime, c, y0, n = 4096, t_max = 1.0))]
fn recover_roundtrip(
    field: &PyField,
    known: &str,
    known_prime: &str,
    c: f64,
    y0: Vec<f64>,
    n: u64,
    t_max: f64,
) -> PyResult<(f64, f64)> {
    let dim = field.inner.dim();
    let known = KnownSolution::new(
        Curve::parse(known, dim).map_err(|e| err(e.into()))?,
        Curve::parse(known_prime, dim).map_err(|e| err(e.into()))?,
        c,
    )
    .map_err(err)?;
    let spec = GridSpec::new(0.0, y0, n, 0, t_max).map_err(err)?;
    let pert = recover(&field.inner, &known, &spec).map_err(err)?;
    let dev = verify_roundtrip(&field.inner, &known, &pert, &spec).map_err(err)?;
    Ok((pert.eps_max(), dev))
}

/// One solve per perturbation rule; returns (solutions, clusters).
#[pyfunction]
#[pyo3(signature = (field, y0, rules, t_max = 2.0, n0 = 1024, refinements = 8,
                    tol = 1e-4, spacing = 0.0078125, escape_r0 = 1e6))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    field: &PyField,
    y0: Vec<f64>,
    rules: Vec<String>,
    t_max: f64,
    n0: u64,
    refinements: u32,
    tol: f64,
    spacing: f64,
    escape_r0: f64,
) -> PyResult<(Vec<PySolution>, Vec<Vec<usize>>)> {
    let opts = build_options(t_max, n0, refinements, tol, spacing, escape_r0, "zero", false)?;
    let rules: Result<Vec<RuleSpec>, SolverError> =
        rules.iter().map(|r| RuleSpec::parse(r)).collect();
    let result = funnel(&field.inner, &y0, &rules.map_err(err)?, &opts).map_err(err)?;
    Ok((
        result
            .solutions
            .into_iter()
            .map(|inner| PySolution { inner })
            .collect(),
        result.clusters,
    ))
}

/// Maximal or minimal solution via the superequation epsilon ladder.
/// Returns (solution, domination_margin, segments, fully_resolved).
#[pyfunction]
#[pyo3(signature = (field, y0, eps0 = 1e-2, j_eps = 12, minimal = false, t_max = 1.0,
                    n0 = 1024, refinements = 8, tol = 1e-3, spacing = 0.0078125,
                    escape_r0 = 1e6))]
#[allow(clippy::too_many_arguments)]
fn extremal(
    field: &PyField,
    y0: Vec<f64>,
    eps0: f64,
    j_eps: u32,
    minimal: bool,
    t_max: f64,
    n0: u64,
    refinements: u32,
    tol: f64,
    spacing: f64,
    escape_r0: f64,
) -> PyResult<(PySolution, f64, usize, bool)> {
    let opts = build_options(t_max, n0, refinements, tol, spacing, escape_r0, "zero", false)?;
    let result = if minimal {
        shadow_ode::minimal(&field.inner, &y0, eps0, j_eps, &opts)
    } else {
        shadow_ode::maximal(&field.inner, &y0, eps0, j_eps, &opts)
    }
    .map_err(err)?;
    Ok((
        PySolution {
            inner: result.solution,
        },
        result.domination_margin,
        result.segments.len(),
        result.fully_resolved,
    ))
}

#[pymodule]
fn shadow_ode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(residual, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(recover_roundtrip, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(extremal, m)?)?;
    Ok(())
}
