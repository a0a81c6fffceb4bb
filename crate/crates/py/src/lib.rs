//! Python bindings: formats, bound constants, kernels and the BVP pipeline.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rounding_uq::bounds::{self, CBound, LogErrorStats, Method};
use rounding_uq::bvp::{self, BvpParams, QoiBound};
use rounding_uq::kernels::{self, BoundConfig, TriDiagonal};
use rounding_uq::stats;
use rounding_uq::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_)
        | Error::Parse(_)
        | Error::Domain(_)
        | Error::InfeasibleConfidence { .. }
        | Error::ShapeMismatch(_)
        | Error::EmptyInput
        | Error::EmptySample
        | Error::BoundInvalid { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(py_err)
}

fn c_bound(name: &str) -> PyResult<CBound> {
    name.parse().map_err(py_err)
}

fn config(target: f64, c: &str) -> PyResult<BoundConfig> {
    Ok(BoundConfig {
        target,
        c_bound: c_bound(c)?,
    })
}

#[pyclass(name = "FloatFormat", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyFormat(rounding_uq::FloatFormat);

#[pymethods]
impl PyFormat {
    #[new]
    #[pyo3(signature = (precision, e_min, e_max, subnormals = false))]
    fn new(precision: u32, e_min: i32, e_max: i32, subnormals: bool) -> PyResult<Self> {
        let f = rounding_uq::FloatFormat::new(precision, e_min, e_max).map_err(py_err)?;
        Ok(PyFormat(if subnormals { f.with_gradual_underflow() } else { f }))
    }

    /// `fp16`, `bf16`, `fp32`, `fp64` or `p<P>e<Emin>:<Emax>`, optionally with `+sub`.
    #[staticmethod]
    fn parse(name: &str) -> PyResult<Self> {
        name.parse().map(PyFormat).map_err(py_err)
    }

    #[getter]
    fn precision(&self) -> u32 {
        self.0.precision()
    }

    #[getter]
    fn e_min(&self) -> i32 {
        self.0.e_min()
    }

    #[getter]
    fn e_max(&self) -> i32 {
        self.0.e_max()
    }

    #[getter]
    fn unit_roundoff(&self) -> f64 {
        self.0.unit_roundoff()
    }

    fn round(&self, x: f64) -> PyResult<f64> {
        self.0.round(x).map_err(py_err)
    }

    fn round_list(&self, xs: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.round_slice(&xs).map_err(py_err)
    }

    fn op(&self, a: f64, b: f64, op: &str) -> PyResult<f64> {
        let op = op.parse().map_err(py_err)?;
        rounding_uq::precision::emulated_op(a, b, op, &self.0).map_err(py_err)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("FloatFormat('{}')", self.0)
    }
}

fn fmt_arg(fmt: &Bound<'_, PyAny>) -> PyResult<rounding_uq::FloatFormat> {
    if let Ok(f) = fmt.cast::<PyFormat>() {
        return Ok(f.get().0);
    }
    let s: String = fmt.extract()?;
    s.parse().map_err(py_err)
}

/// `gamma_n` for `method` in {dbea, mibea, mmibea, vibea}; `None` when DBEA is invalid.
#[pyfunction]
#[pyo3(signature = (method_name, zeta, u, n, c = "paper", lam = None))]
fn gamma(method_name: &str, zeta: f64, u: f64, n: u64, c: &str, lam: Option<f64>) -> PyResult<Option<f64>> {
    let m = method(method_name)?;
    let mut spec = bounds::BoundSpec::new(m, zeta, u, n).with_c_bound(c_bound(c)?);
    if m == Method::MibeaOriginal {
        spec = spec.with_lambda(match lam {
            Some(l) => l,
            None => bounds::lambda_dagger(zeta, u).map_err(py_err)?,
        });
    }
    match spec.evaluate() {
        Ok(r) => Ok(Some(r.gamma)),
        Err(Error::BoundInvalid { .. }) => Ok(None),
        Err(e) => Err(py_err(e)),
    }
}

#[pyfunction]
#[pyo3(signature = (zeta, fmt, c = "paper"))]
fn critical_sizes(zeta: f64, fmt: &Bound<'_, PyAny>, c: &str) -> PyResult<(u64, u64)> {
    bounds::critical_sizes_with(zeta, fmt_arg(fmt)?.unit_roundoff(), c_bound(c)?).map_err(py_err)
}

/// `(c, mu, sigma^2, kappa)` of `log(1 + delta)` for `delta ~ U[-u, u]`.
#[pyfunction]
#[pyo3(signature = (u, c = "paper"))]
fn log_error_stats(u: f64, c: &str) -> PyResult<(f64, f64, f64, f64)> {
    let s = LogErrorStats::uniform_with(u, c_bound(c)?).map_err(py_err)?;
    Ok((s.c, s.mu, s.sigma_sq, s.kappa))
}

#[pyfunction]
fn union_confidence(zeta: f64, k: u64) -> f64 {
    bounds::union_confidence(zeta, k)
}

#[pyfunction]
fn solve_member_confidence(target: f64, k: u64) -> PyResult<f64> {
    bounds::solve_member_confidence(target, k).map_err(py_err)
}

/// Fraction of `trials` seeded products `prod (1 + delta_i)` within the bound.
#[pyfunction]
#[pyo3(signature = (method_name, zeta, u, n, trials, seed = 0))]
fn coverage(method_name: &str, zeta: f64, u: f64, n: u64, trials: usize, seed: u64) -> PyResult<f64> {
    let r = bounds::BoundSpec::new(method(method_name)?, zeta, u, n).evaluate().map_err(py_err)?;
    bounds::coverage_oracle(&r, u, n, trials, seed).map_err(py_err)
}

#[pyclass(name = "KernelRun", frozen)]
struct PyKernelRun(kernels::KernelRun);

#[pymethods]
impl PyKernelRun {
    #[getter]
    fn measured_bwd(&self) -> f64 {
        self.0.measured_bwd
    }

    #[getter]
    fn measured_fwd(&self) -> f64 {
        self.0.measured_fwd
    }

    #[getter]
    fn condition(&self) -> f64 {
        self.0.condition
    }

    #[getter]
    fn events(&self) -> u64 {
        self.0.events
    }

    #[getter]
    fn excluded_rows(&self) -> usize {
        self.0.excluded_rows
    }

    /// Bound constant of `method`; `None` when invalid.
    fn gamma(&self, method_name: &str) -> PyResult<Option<f64>> {
        Ok(self.0.gamma(method(method_name)?))
    }

    fn confidence(&self, method_name: &str) -> PyResult<Option<f64>> {
        Ok(self.0.bound(method(method_name)?).map(|b| b.confidence))
    }

    fn __repr__(&self) -> String {
        format!(
            "KernelRun({}, fmt={}, bwd={:e}, events={})",
            self.0.kernel.name(),
            self.0.fmt,
            self.0.measured_bwd,
            self.0.events
        )
    }
}

/// Inputs are rounded into `fmt` first.
#[pyfunction]
#[pyo3(signature = (a, b, fmt, target = 0.99, c = "paper"))]
fn dot(a: Vec<f64>, b: Vec<f64>, fmt: &Bound<'_, PyAny>, target: f64, c: &str) -> PyResult<(f64, PyKernelRun)> {
    let f = fmt_arg(fmt)?;
    let (a, b) = (f.round_slice(&a).map_err(py_err)?, f.round_slice(&b).map_err(py_err)?);
    let (y, run) = kernels::dot_emulated(&a, &b, &f, &config(target, c)?).map_err(py_err)?;
    Ok((y, PyKernelRun(run)))
}

/// `a` is a list of rows.
#[pyfunction]
#[pyo3(signature = (a, x, fmt, target = 0.99, c = "paper"))]
fn matvec(a: Vec<Vec<f64>>, x: Vec<f64>, fmt: &Bound<'_, PyAny>, target: f64, c: &str) -> PyResult<(Vec<f64>, PyKernelRun)> {
    let f = fmt_arg(fmt)?;
    let a = kernels::Matrix::from_rows(&a).and_then(|m| m.round_to(&f)).map_err(py_err)?;
    let x = f.round_slice(&x).map_err(py_err)?;
    let (y, run) = kernels::matvec_emulated(&a, &x, &f, &config(target, c)?).map_err(py_err)?;
    Ok((y, PyKernelRun(run)))
}

/// Solves the tridiagonal system; returns `(x_hat, run, c_ls_abs)`.
#[pyfunction]
#[pyo3(signature = (sub, diag, sup, b, fmt, target = 0.99, c = "paper"))]
#[allow(clippy::too_many_arguments)]
fn thomas(
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    b: Vec<f64>,
    fmt: &Bound<'_, PyAny>,
    target: f64,
    c: &str,
) -> PyResult<(Vec<f64>, PyKernelRun, f64)> {
    let f = fmt_arg(fmt)?;
    let t = TriDiagonal::new(sub, diag, sup).and_then(|t| t.round_to(&f)).map_err(py_err)?;
    let b = f.round_slice(&b).map_err(py_err)?;
    let o = kernels::thomas_solve(&t, &b, &f, &config(target, c)?).map_err(py_err)?;
    Ok((o.x_hat, PyKernelRun(o.run), o.c_ls_abs))
}

#[pyfunction]
fn analytic_p(theta1: f64, theta2: f64) -> PyResult<f64> {
    bvp::analytic_p(theta1, theta2).map_err(py_err)
}

/// Componentwise enclosure `(lo, hi)` of the nodal discretization error.
#[pyfunction]
fn discretization_enclosure(theta1: f64, theta2: f64, m: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = BvpParams::new(theta1, theta2, m).map_err(py_err)?;
    let e = bvp::discretization_enclosure(&p).map_err(py_err)?;
    Ok((e.eps_lo, e.eps_hi))
}

#[pyclass(name = "BvpRun", frozen)]
struct PyBvpRun {
    run: bvp::BvpRun,
    disc_width: f64,
}

#[pymethods]
impl PyBvpRun {
    #[getter]
    fn p_hat(&self) -> f64 {
        self.run.p_hat
    }

    #[getter]
    fn p_tilde(&self) -> f64 {
        self.run.p_tilde
    }

    #[getter]
    fn p_exact(&self) -> Option<f64> {
        self.run.p_exact
    }

    #[getter]
    fn rounding_error(&self) -> f64 {
        self.run.rounding_error()
    }

    #[getter]
    fn discretization_width(&self) -> f64 {
        self.disc_width
    }

    #[getter]
    fn u_hat(&self) -> Vec<f64> {
        self.run.solve.x_hat.clone()
    }

    /// Rounding bound on `|p_hat - p_tilde|` for `method`.
    fn bound(&self, method_name: &str) -> PyResult<Option<f64>> {
        Ok(QoiBound::find(&self.run.qoi_bounds, method(method_name)?).and_then(|b| b.bound))
    }

    fn __repr__(&self) -> String {
        format!("BvpRun(M={}, fmt={}, p_hat={})", self.run.params.m, self.run.fmt, self.run.p_hat)
    }
}

#[pyfunction]
#[pyo3(signature = (theta1, theta2, m, fmt, target = 0.99, c = "paper"))]
fn bvp_run(theta1: f64, theta2: f64, m: usize, fmt: &Bound<'_, PyAny>, target: f64, c: &str) -> PyResult<PyBvpRun> {
    let p = BvpParams::new(theta1, theta2, m).map_err(py_err)?;
    let f = fmt_arg(fmt)?;
    let run = bvp::run(&p, &f, &config(target, c)?).map_err(py_err)?;
    let disc_width = bvp::discretization_enclosure(&p).map_err(py_err)?.qoi_width();
    Ok(PyBvpRun { run, disc_width })
}

#[pyclass(name = "Edf", frozen)]
struct PyEdf(stats::Edf);

#[pymethods]
impl PyEdf {
    #[new]
    fn new(samples: Vec<f64>) -> PyResult<Self> {
        stats::Edf::build(&samples).map(PyEdf).map_err(py_err)
    }

    fn __call__(&self, t: f64) -> f64 {
        self.0.query(t)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn steps(&self) -> Vec<(f64, f64)> {
        self.0.steps()
    }

    /// Whether `self` lies below `other` up to `slack` at every pooled point.
    #[pyo3(signature = (other, slack = 0.0))]
    fn dominated_by(&self, other: &PyEdf, slack: f64) -> bool {
        stats::edf_dominates(&self.0, &other.0, slack)
    }
}

#[pymodule]
fn ruq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFormat>()?;
    m.add_class::<PyKernelRun>()?;
    m.add_class::<PyBvpRun>()?;
    m.add_class::<PyEdf>()?;
    m.add_function(wrap_pyfunction!(gamma, m)?)?;
    m.add_function(wrap_pyfunction!(critical_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(log_error_stats, m)?)?;
    m.add_function(wrap_pyfunction!(union_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(solve_member_confidence, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(dot, m)?)?;
    m.add_function(wrap_pyfunction!(matvec, m)?)?;
    m.add_function(wrap_pyfunction!(thomas, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_p, m)?)?;
    m.add_function(wrap_pyfunction!(discretization_enclosure, m)?)?;
    m.add_function(wrap_pyfunction!(bvp_run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
