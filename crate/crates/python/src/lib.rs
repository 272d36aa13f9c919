//! Python bindings: surfaces, the three solvers, convergence studies and the
//! estimator utilities.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use surfem::estimators::{adapt_loop, dorfler_mark, AdaptOptions};
use surfem::fem::DEFAULT_TOL;
use surfem::geometry::manufactured;
use surfem::geometry::properties::run_property_suite;
use surfem::harness::{compute_eoc, run_convergence, solve_level, Method, RunConfig};
use surfem::mesh::{build_sphere_mesh, build_torus_mesh, refine_bisection};
use surfem::parametric::ErrorReport;
use surfem::{Error, ImplicitSurface, LiftKind, Vec3};

fn to_py(err: Error) -> PyErr {
    if err.is_config() {
        PyValueError::new_err(err.to_string())
    } else {
        PyRuntimeError::new_err(err.to_string())
    }
}

fn parse_lift(name: &str) -> PyResult<LiftKind> {
    match name {
        "closest_point" => Ok(LiftKind::ClosestPoint),
        "scaled_radial" => Ok(LiftKind::ScaledRadial),
        other => Err(PyValueError::new_err(format!("unknown lift `{other}`"))),
    }
}

fn point(x: (f64, f64, f64)) -> Vec3 {
    Vec3::new(x.0, x.1, x.2)
}

fn tuple(v: &Vec3) -> (f64, f64, f64) {
    (v.x, v.y, v.z)
}

/// A closed analytic surface with its signed distance function.
#[pyclass(name = "Surface", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PySurface {
    inner: ImplicitSurface,
}

#[pymethods]
impl PySurface {
    #[staticmethod]
    fn sphere(radius: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ImplicitSurface::sphere(radius).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn torus(major_radius: f64, minor_radius: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ImplicitSurface::torus(major_radius, minor_radius).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn ellipsoid(a: f64, b: f64, c: f64) -> PyResult<Self> {
        Ok(Self {
            inner: ImplicitSurface::ellipsoid(a, b, c).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn max_curvature(&self) -> f64 {
        self.inner.max_curvature()
    }

    #[getter]
    fn tube_half_width(&self) -> f64 {
        self.inner.tube_half_width()
    }

    fn signed_distance(&self, x: (f64, f64, f64)) -> f64 {
        self.inner.signed_distance(&point(x))
    }

    fn closest_point(&self, x: (f64, f64, f64)) -> PyResult<(f64, f64, f64)> {
        Ok(tuple(&self.inner.closest_point(&point(x)).map_err(to_py)?))
    }

    fn normal(&self, x: (f64, f64, f64)) -> (f64, f64, f64) {
        tuple(&self.inner.normal(&point(x)))
    }

    /// `q/q_Γ` of the closest point projection for a plane with normal `nu`.
    fn area_ratio(&self, x: (f64, f64, f64), nu: (f64, f64, f64)) -> PyResult<f64> {
        self.inner.area_ratio(&point(x), &point(nu)).map_err(to_py)
    }

    /// Vertices and triangles of the level-`level` mesh (icosphere, or a
    /// `8·2^l × 4·2^l` grid on a torus).
    #[allow(clippy::type_complexity)]
    fn mesh(&self, level: usize) -> PyResult<(Vec<(f64, f64, f64)>, Vec<[usize; 3]>)> {
        let mesh = match self.inner {
            ImplicitSurface::Torus { .. } => build_torus_mesh(&self.inner, 8 << level, 4 << level),
            _ => build_sphere_mesh(&self.inner, level),
        }
        .map_err(to_py)?;
        Ok((mesh.vertices.iter().map(tuple).collect(), mesh.triangles))
    }

    fn __repr__(&self) -> String {
        format!("Surface({:?})", self.inner)
    }
}

fn report_dict<'py>(py: Python<'py>, report: &ErrorReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("h_max", report.h_max)?;
    d.set_item("n_dof", report.n_dof)?;
    d.set_item("err_l2", report.err_l2)?;
    d.set_item("err_h1", report.err_h1)?;
    d.set_item("iterations", report.iterations)?;
    d.set_item("relative_residual", report.relative_residual)?;
    for (k, v) in &report.extra {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// Solves the manufactured problem on one level and returns the error report
/// with the method's estimator totals. `level` is the surface refinement
/// level for `parametric`, and bulk cells per axis for `trace` and
/// `narrowband`.
#[pyfunction]
#[pyo3(signature = (surface, method, level, lift = "closest_point", delta_ratio = 1.5, tol = DEFAULT_TOL))]
fn solve<'py>(
    py: Python<'py>,
    surface: PySurface,
    method: &str,
    level: usize,
    lift: &str,
    delta_ratio: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method.parse().map_err(to_py)?;
    if method == Method::Adaptive {
        return Err(PyValueError::new_err("use `adapt` for the adaptive method"));
    }
    let mut config = RunConfig::default_for(method);
    config.surface = surface.inner;
    config.lift = parse_lift(lift)?;
    config.levels = vec![level];
    config.delta_ratio = delta_ratio;
    config.solver_tol = tol;
    config.validate().map_err(to_py)?;
    let report = py.detach(|| solve_level(&config, level)).map_err(to_py)?;
    report_dict(py, &report)
}

/// Runs a convergence study from a JSON configuration and returns the table
/// as `(csv, json)`.
#[pyfunction]
fn converge(py: Python<'_>, config_json: &str) -> PyResult<(String, String)> {
    let config = RunConfig::from_json(config_json).map_err(to_py)?;
    let table = py.detach(|| run_convergence(&config)).map_err(to_py)?;
    Ok((table.to_csv().map_err(to_py)?, table.to_json().map_err(to_py)?))
}

/// Rates `log(e_k/e_{k+1}) / log(h_k/h_{k+1})`.
#[pyfunction(name = "compute_eoc")]
fn py_compute_eoc(errors: Vec<f64>, hs: Vec<f64>) -> PyResult<Vec<f64>> {
    compute_eoc(&errors, &hs).map_err(to_py)
}

/// Indices of the Dörfler-marked elements.
#[pyfunction(name = "dorfler_mark")]
fn py_dorfler_mark(indicators: Vec<f64>, theta: f64) -> PyResult<BTreeSet<usize>> {
    dorfler_mark(&indicators, theta).map_err(to_py)
}

/// Adaptive loop on the manufactured problem; one dict per solve.
#[pyfunction]
#[pyo3(signature = (surface, level = 2, theta = 0.5, max_iters = 8))]
fn adapt<'py>(
    py: Python<'py>,
    surface: PySurface,
    level: usize,
    theta: f64,
    max_iters: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let s = surface.inner;
    let history = py
        .detach(|| {
            let mesh = build_sphere_mesh(&s, level)?;
            let options = AdaptOptions {
                theta,
                max_iters,
                ..Default::default()
            };
            adapt_loop(mesh, &manufactured(&s)?, options)
        })
        .map_err(to_py)?;
    history
        .steps
        .iter()
        .map(|step| {
            let d = PyDict::new(py);
            d.set_item("iter", step.iter)?;
            d.set_item("n_dof", step.n_dof)?;
            d.set_item("err_h1", step.err_h1)?;
            d.set_item("err_l2", step.err_l2)?;
            d.set_item("eta", step.eta)?;
            d.set_item("lambda", step.lambda)?;
            d.set_item("beta", step.beta)?;
            d.set_item("mu", step.mu)?;
            Ok(d)
        })
        .collect()
}

/// Bisects the marked triangles of a level-`level` mesh (with conformity
/// closure) and returns the new triangle count.
#[pyfunction]
fn bisect(surface: PySurface, level: usize, marked: BTreeSet<usize>) -> PyResult<usize> {
    let mesh = build_sphere_mesh(&surface.inner, level).map_err(to_py)?;
    if let Some(bad) = marked.iter().find(|t| **t >= mesh.n_triangles()) {
        return Err(PyValueError::new_err(format!("triangle {bad} out of range")));
    }
    Ok(refine_bisection(&mesh, &marked, &surface.inner).map_err(to_py)?.n_triangles())
}

/// Worst deviation of each distance-function identity over random tube
/// points, plus an overall `passed` flag.
#[pyfunction]
#[pyo3(signature = (surface, samples = 1000, seed = 0))]
fn check_geometry<'py>(py: Python<'py>, surface: PySurface, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let report = run_property_suite(&surface.inner, samples, seed).map_err(to_py)?;
    let d = PyDict::new(py);
    for (name, value, _) in report.checks() {
        d.set_item(name, value)?;
    }
    d.set_item("passed", report.passed())?;
    Ok(d)
}

#[pymodule]
fn surfem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySurface>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(converge, m)?)?;
    m.add_function(wrap_pyfunction!(py_compute_eoc, m)?)?;
    m.add_function(wrap_pyfunction!(py_dorfler_mark, m)?)?;
    m.add_function(wrap_pyfunction!(adapt, m)?)?;
    m.add_function(wrap_pyfunction!(bisect, m)?)?;
    m.add_function(wrap_pyfunction!(check_geometry, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_names() {
        assert_eq!(parse_lift("closest_point").unwrap(), LiftKind::ClosestPoint);
        assert_eq!(parse_lift("scaled_radial").unwrap(), LiftKind::ScaledRadial);
    }

    #[test]
    fn config_errors_become_value_errors() {
        Python::initialize();
        Python::attach(|py| {
            let err = to_py(Error::Config("x".into()));
            assert!(err.is_instance_of::<PyValueError>(py));
            let err = to_py(Error::EmptyCut);
            assert!(err.is_instance_of::<PyRuntimeError>(py));
        });
    }
}
