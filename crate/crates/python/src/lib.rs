//! Python bindings for `tscv`.

use std::collections::HashMap;
use std::sync::Arc;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tscv::conditions::{self, SufficiencyOptions};
use tscv::expr::{Env, Var};
use tscv::timescale::delta_integral_of;
use tscv::{Error, GridFunction, SolveOptions};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Divergence { .. } | Error::SingularJacobian { .. } | Error::ImplicitStep { .. } | Error::Consistency { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn var(name: &str) -> PyResult<Var> {
    Var::from_name(name).ok_or_else(|| PyKeyError::new_err(format!("unknown variable `{name}`")))
}

#[pyclass(name = "TimeScale", module = "pytscv", frozen)]
struct PyTimeScale {
    inner: Arc<tscv::TimeScale>,
}

impl PyTimeScale {
    fn wrap(s: tscv::Result<tscv::TimeScale>) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(s.map_err(to_py)?),
        })
    }

    fn grid(&self, values: Vec<f64>) -> PyResult<GridFunction> {
        GridFunction::new(self.inner.clone(), values).map_err(to_py)
    }
}

#[pymethods]
impl PyTimeScale {
    #[new]
    #[pyo3(signature = (points, dense=None))]
    fn new(points: Vec<f64>, dense: Option<Vec<bool>>) -> PyResult<Self> {
        match dense {
            Some(mask) => Self::wrap(tscv::TimeScale::from_parts(&points, &mask)),
            None => Self::wrap(tscv::TimeScale::explicit(&points)),
        }
    }

    #[staticmethod]
    fn integers(a: i64, b: i64) -> PyResult<Self> {
        Self::wrap(tscv::TimeScale::integers(a, b))
    }

    #[staticmethod]
    fn uniform(a: f64, b: f64, n: usize) -> PyResult<Self> {
        Self::wrap(tscv::TimeScale::uniform(a, b, n))
    }

    #[staticmethod]
    #[pyo3(signature = (q, k_min, k_max, include_zero=false))]
    fn qgrid(q: f64, k_min: i32, k_max: i32, include_zero: bool) -> PyResult<Self> {
        Self::wrap(tscv::TimeScale::qgrid(q, k_min, k_max, include_zero))
    }

    #[getter]
    fn points(&self) -> Vec<f64> {
        self.inner.points().to_vec()
    }

    fn sigma(&self, i: usize) -> PyResult<usize> {
        self.inner.sigma(i).map_err(to_py)
    }

    fn rho(&self, i: usize) -> PyResult<usize> {
        self.inner.rho(i).map_err(to_py)
    }

    fn mu(&self, i: usize) -> PyResult<f64> {
        self.inner.mu(i).map_err(to_py)
    }

    fn is_regular(&self) -> bool {
        self.inner.is_regular()
    }

    /// Delta derivative of the sampled function at index i.
    fn delta_derivative(&self, values: Vec<f64>, i: usize) -> PyResult<f64> {
        self.grid(values)?.delta_derivative(i).map_err(to_py)
    }

    /// Delta integral of the sampled function between two point indices.
    #[pyo3(signature = (values, start=0, end=None))]
    fn integrate(&self, values: Vec<f64>, start: usize, end: Option<usize>) -> PyResult<f64> {
        let end = end.unwrap_or(self.inner.last_index());
        delta_integral_of(&self.inner, &values, start, end).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("TimeScale({} points on [{}, {}])", self.inner.len(), self.inner.first(), self.inner.last())
    }
}

#[pyclass(name = "Expr", module = "pytscv", frozen)]
struct PyExpr {
    inner: tscv::Expr,
}

#[pymethods]
impl PyExpr {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: tscv::parse(text).map_err(|e| to_py(e.into()))?,
        })
    }

    /// Evaluates with the given variable values; unset variables are zero.
    #[pyo3(signature = (**values))]
    fn eval(&self, values: Option<HashMap<String, f64>>) -> PyResult<f64> {
        let mut env = Env::new();
        for (name, v) in values.unwrap_or_default() {
            env.set(var(&name)?, v);
        }
        self.inner.eval(&env).map_err(|e| to_py(e.into()))
    }

    fn diff(&self, wrt: &str) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.diff(var(wrt)?),
        })
    }

    fn variables(&self) -> Vec<&'static str> {
        self.inner.variables().into_iter().map(Var::name).collect()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}')", self.inner)
    }
}

#[pyclass(name = "VariationalProblem", module = "pytscv", frozen)]
struct PyVariationalProblem {
    inner: tscv::VariationalProblem,
}

#[pymethods]
impl PyVariationalProblem {
    #[new]
    fn new(scale: &PyTimeScale, f: &str, alpha: f64) -> PyResult<Self> {
        let f = tscv::parse(f).map_err(|e| to_py(e.into()))?;
        Ok(Self {
            inner: tscv::VariationalProblem::new(scale.inner.clone(), f, alpha).map_err(to_py)?,
        })
    }

    #[getter]
    fn scale(&self) -> PyTimeScale {
        PyTimeScale {
            inner: self.inner.scale().clone(),
        }
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        let x = GridFunction::new(self.inner.scale().clone(), x).map_err(to_py)?;
        self.inner.objective(&x).map_err(to_py)
    }

    /// Gradient with respect to x(t_1), ..., x(T).
    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = GridFunction::new(self.inner.scale().clone(), x).map_err(to_py)?;
        self.inner.objective_gradient(&x).map_err(to_py)
    }

    fn euler_lagrange_residual(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = GridFunction::new(self.inner.scale().clone(), x).map_err(to_py)?;
        conditions::euler_lagrange_residual(&self.inner, &x).map_err(to_py)
    }

    fn transversality_residual(&self, x: Vec<f64>) -> PyResult<f64> {
        let x = GridFunction::new(self.inner.scale().clone(), x).map_err(to_py)?;
        conditions::transversality_residual(&self.inner, &x).map_err(to_py)
    }

    fn to_control(&self) -> PyControlProblem {
        PyControlProblem {
            inner: self.inner.to_control(),
        }
    }
}

#[pyclass(name = "ControlProblem", module = "pytscv", frozen)]
struct PyControlProblem {
    inner: tscv::ControlProblem,
}

#[pymethods]
impl PyControlProblem {
    #[new]
    fn new(scale: &PyTimeScale, f: &str, g: &str, alpha: f64) -> PyResult<Self> {
        let f = tscv::parse(f).map_err(|e| to_py(e.into()))?;
        let g = tscv::parse(g).map_err(|e| to_py(e.into()))?;
        Ok(Self {
            inner: tscv::ControlProblem::new(scale.inner.clone(), f, g, alpha).map_err(to_py)?,
        })
    }

    #[getter]
    fn scale(&self) -> PyTimeScale {
        PyTimeScale {
            inner: self.inner.scale().clone(),
        }
    }

    #[pyo3(signature = (samples=1000, half_width=10.0, seed=0))]
    fn sufficiency_check(&self, samples: usize, half_width: f64, seed: u64) -> String {
        let opts = SufficiencyOptions {
            samples,
            half_width,
            seed,
        };
        conditions::sufficiency_check(&self.inner, &opts).to_string()
    }
}

#[pyclass(name = "Solution", module = "pytscv", frozen)]
struct PySolution {
    inner: tscv::Solution,
}

fn defined(g: &Option<GridFunction>) -> Option<Vec<Option<f64>>> {
    g.as_ref()
        .map(|g| g.values().iter().map(|v| v.is_finite().then_some(*v)).collect())
}

#[pymethods]
impl PySolution {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.inner.scale().points().to_vec()
    }

    #[getter]
    fn x(&self) -> Vec<f64> {
        self.inner.x.values().to_vec()
    }

    /// u^sigma samples; None at the final point.
    #[getter]
    fn u(&self) -> Option<Vec<Option<f64>>> {
        defined(&self.inner.u)
    }

    /// lambda^sigma samples; None at the final point.
    #[getter]
    fn lam(&self) -> Option<Vec<Option<f64>>> {
        defined(&self.inner.lam)
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective_value
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.report.sup_norm
    }

    #[getter]
    fn verdict(&self) -> String {
        self.inner.verdict.to_string()
    }

    fn slope(&self) -> f64 {
        self.inner.slope()
    }

    fn endpoint(&self) -> f64 {
        self.inner.endpoint()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(objective={}, converged={}, iterations={})",
            self.inner.objective_value, self.inner.converged, self.inner.iterations
        )
    }
}

fn options(max_iterations: Option<usize>, gradient_tolerance: Option<f64>, seed: Option<u64>) -> SolveOptions {
    let d = SolveOptions::default();
    SolveOptions {
        max_iterations: max_iterations.unwrap_or(d.max_iterations),
        gradient_tolerance: gradient_tolerance.unwrap_or(d.gradient_tolerance),
        seed: seed.unwrap_or(d.seed),
        ..d
    }
}

#[pyfunction]
#[pyo3(signature = (problem, max_iterations=None, gradient_tolerance=None, seed=None))]
fn solve_variational(
    py: Python<'_>,
    problem: &PyVariationalProblem,
    max_iterations: Option<usize>,
    gradient_tolerance: Option<f64>,
    seed: Option<u64>,
) -> PyResult<PySolution> {
    let opts = options(max_iterations, gradient_tolerance, seed);
    let s = py.detach(|| tscv::solve_variational(&problem.inner, &opts)).map_err(to_py)?;
    Ok(PySolution { inner: s })
}

#[pyfunction]
#[pyo3(signature = (problem, max_iterations=None, gradient_tolerance=None, seed=None))]
fn solve_control(
    py: Python<'_>,
    problem: &PyControlProblem,
    max_iterations: Option<usize>,
    gradient_tolerance: Option<f64>,
    seed: Option<u64>,
) -> PyResult<PySolution> {
    let opts = options(max_iterations, gradient_tolerance, seed);
    let s = py.detach(|| tscv::solve_control(&problem.inner, &opts)).map_err(to_py)?;
    Ok(PySolution { inner: s })
}

/// Newton on the Euler-Lagrange and transversality equations from the initial guess x0.
#[pyfunction]
#[pyo3(signature = (problem, x0, max_iterations=None))]
fn solve_stationarity(problem: &PyVariationalProblem, x0: Vec<f64>, max_iterations: Option<usize>) -> PyResult<PySolution> {
    let opts = options(max_iterations, None, None);
    let x0 = GridFunction::new(problem.inner.scale().clone(), x0).map_err(to_py)?;
    let s = tscv::solve_stationarity(&problem.inner, &opts, &x0).map_err(to_py)?;
    Ok(PySolution { inner: s })
}

#[pyfunction]
fn brute_force_oracle(problem: &Bound<'_, PyAny>) -> PyResult<PySolution> {
    let s = if let Ok(p) = problem.cast::<PyVariationalProblem>() {
        tscv::brute_force_oracle(&p.get().inner)
    } else if let Ok(p) = problem.cast::<PyControlProblem>() {
        tscv::brute_force_oracle(&p.get().inner)
    } else {
        return Err(PyValueError::new_err("expected a VariationalProblem or ControlProblem"));
    };
    Ok(PySolution {
        inner: s.map_err(to_py)?,
    })
}

#[pymodule]
fn pytscv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTimeScale>()?;
    m.add_class::<PyExpr>()?;
    m.add_class::<PyVariationalProblem>()?;
    m.add_class::<PyControlProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve_variational, m)?)?;
    m.add_function(wrap_pyfunction!(solve_control, m)?)?;
    m.add_function(wrap_pyfunction!(solve_stationarity, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_oracle, m)?)?;
    Ok(())
}
