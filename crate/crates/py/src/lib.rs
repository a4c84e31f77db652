//! Python module `frontlab`.

use std::path::PathBuf;

use fl::config::{self, ScenarioConfig};
use fl::coupling::{convolve_kernel, OccupationHistory};
use fl::geometry::{circle_u0, star_shaped_u0, InitCondition};
use fl::runner::{self, build_init, RunOutcome};
use fl::solver::{uniform_times, Trajectory};
use fl::weak::{chi_from_u, fixed_point_solve_with, SolveSettings};
use fl::{extract_contour, FrontContour, FrontError, GridSpec, ScalarField};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(frontlab, FrontlabError, PyException);
create_exception!(frontlab, ConfigError, FrontlabError);

fn to_py(e: FrontError) -> PyErr {
    match e {
        FrontError::Config { .. } => ConfigError::new_err(e.to_string()),
        other => FrontlabError::new_err(other.to_string()),
    }
}

#[pyclass(name = "GridSpec", frozen, eq, from_py_object)]
#[derive(Clone, Copy, PartialEq)]
pub struct PyGridSpec {
    pub inner: GridSpec,
}

#[pymethods]
impl PyGridSpec {
    #[new]
    fn new(n: usize, half_extent: f64) -> PyResult<Self> {
        GridSpec::new(n, half_extent).map(|inner| PyGridSpec { inner }).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn half_extent(&self) -> f64 {
        self.inner.half_extent()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.spacing()
    }

    fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let p = self.inner.node(i, j);
        (p[0], p[1])
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("GridSpec(n={}, half_extent={})", self.inner.n(), self.inner.half_extent())
    }
}

/// Nodal values on a grid, row-major with `x` fastest.
#[pyclass(name = "Field", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyField {
    pub inner: ScalarField,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(grid: PyGridSpec, values: Vec<f64>) -> PyResult<Self> {
        ScalarField::new(grid.inner, values).map(|inner| PyField { inner }).map_err(to_py)
    }

    #[getter]
    fn grid(&self) -> PyGridSpec {
        PyGridSpec { inner: *self.inner.spec() }
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.inner.at(i, j)
    }

    fn interpolate(&self, x: f64, y: f64) -> f64 {
        self.inner.interpolate([x, y])
    }

    fn min(&self) -> f64 {
        self.inner.min()
    }

    fn max(&self) -> f64 {
        self.inner.max()
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }
}

#[pyclass(name = "Contour", frozen)]
pub struct PyContour {
    inner: FrontContour,
}

#[pymethods]
impl PyContour {
    #[getter]
    fn level(&self) -> f64 {
        self.inner.level
    }

    #[getter]
    fn perimeter(&self) -> f64 {
        self.inner.perimeter
    }

    fn mean_radius(&self) -> f64 {
        self.inner.mean_radius()
    }

    /// One list of `(x, y)` vertices per connected piece.
    fn polylines(&self) -> Vec<Vec<(f64, f64)>> {
        self.inner
            .polylines
            .iter()
            .map(|p| p.vertices.iter().map(|v| (v[0], v[1])).collect())
            .collect()
    }

    fn closed(&self) -> Vec<bool> {
        self.inner.polylines.iter().map(|p| p.closed).collect()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

#[pyclass(name = "InitCondition", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyInitCondition {
    pub inner: InitCondition,
}

#[pymethods]
impl PyInitCondition {
    #[staticmethod]
    fn circle(radius: f64, grid: PyGridSpec) -> PyResult<Self> {
        circle_u0(radius, grid.inner).map(|inner| PyInitCondition { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn star_shaped(points: Vec<(f64, f64)>, r0: f64, grid: PyGridSpec) -> PyResult<Self> {
        let pts: Vec<[f64; 2]> = points.into_iter().map(|(x, y)| [x, y]).collect();
        star_shaped_u0(&pts, r0, grid.inner).map(|inner| PyInitCondition { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        InitCondition::load(&dir).map(|inner| PyInitCondition { inner }).map_err(to_py)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(&dir).map_err(to_py)
    }

    #[getter]
    fn u0(&self) -> PyField {
        PyField { inner: self.inner.u0.clone() }
    }

    #[getter]
    fn r0_support(&self) -> f64 {
        self.inner.r0_support
    }

    #[getter]
    fn delta0(&self) -> f64 {
        self.inner.delta0
    }

    #[getter]
    fn eta0(&self) -> f64 {
        self.inner.eta0
    }

    #[getter]
    fn lambda0(&self) -> f64 {
        self.inner.lambda0
    }

    fn grad_sup(&self) -> f64 {
        self.inner.grad_sup()
    }

    fn lambda_bar(&self) -> f64 {
        self.inner.lambda_bar()
    }
}

#[pyclass(name = "Trajectory", frozen)]
pub struct PyTrajectory {
    pub inner: Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Trajectory::load(&dir).map(|inner| PyTrajectory { inner }).map_err(to_py)
    }

    fn dump(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.dump(&dir).map_err(to_py)
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    fn snapshot(&self, k: usize) -> PyResult<PyField> {
        self.inner
            .snapshots
            .get(k)
            .map(|u| PyField { inner: u.clone() })
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(format!("no snapshot {k}")))
    }

    fn at(&self, t: f64) -> PyField {
        PyField {
            inner: self.inner.at(t).clone(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.snapshots.len()
    }
}

#[pyclass(name = "Config", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    pub inner: ScenarioConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        config::parse_config(text).map(|inner| PyConfig { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        config::preset(name).map(|inner| PyConfig { inner }).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn coupling_kind(&self) -> &'static str {
        self.inner.coupling.kind()
    }

    #[getter]
    fn checks(&self) -> Vec<&'static str> {
        self.inner.checks.iter().map(|c| c.name()).collect()
    }

    fn grid(&self) -> PyResult<PyGridSpec> {
        self.inner.grid().map(|inner| PyGridSpec { inner }).map_err(to_py)
    }

    fn initial_condition(&self) -> PyResult<PyInitCondition> {
        build_init(&self.inner).map(|inner| PyInitCondition { inner }).map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }
}

#[pyclass(name = "RunOutcome", frozen)]
pub struct PyRunOutcome {
    inner: RunOutcome,
}

#[pymethods]
impl PyRunOutcome {
    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.inner.output_dir.clone()
    }

    #[getter]
    fn digest(&self) -> String {
        self.inner.digest.clone()
    }

    #[getter]
    fn checks(&self) -> Vec<(String, bool)> {
        self.inner.checks.clone()
    }

    fn passed(&self) -> bool {
        self.inner.passed()
    }
}

#[pyclass(name = "WeakSolution", frozen)]
pub struct PyWeakSolution {
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    residuals: Vec<f64>,
    trajectory: Trajectory,
}

#[pymethods]
impl PyWeakSolution {
    #[getter]
    fn trajectory(&self) -> PyTrajectory {
        PyTrajectory {
            inner: self.trajectory.clone(),
        }
    }
}

#[pyfunction]
fn list_presets() -> Vec<&'static str> {
    config::list_presets()
}

/// Runs a scenario and writes its artifacts into `out_dir`.
#[pyfunction]
fn run(py: Python<'_>, config: PyConfig, out_dir: PathBuf) -> PyResult<PyRunOutcome> {
    py.detach(|| runner::run(&config.inner, &out_dir))
        .map(|inner| PyRunOutcome { inner })
        .map_err(to_py)
}

#[pyfunction]
fn run_probe(py: Python<'_>, config: PyConfig, out_dir: PathBuf) -> PyResult<PyRunOutcome> {
    py.detach(|| runner::run_probe(&config.inner, &out_dir))
        .map(|inner| PyRunOutcome { inner })
        .map_err(to_py)
}

/// Recomputes the stored checks; returns `(checks, mismatched)`.
#[pyfunction]
fn verify_dir(py: Python<'_>, dir: PathBuf) -> PyResult<(Vec<(String, bool)>, Vec<String>)> {
    let out = py.detach(|| runner::verify_dir(&dir)).map_err(to_py)?;
    Ok((out.checks, out.mismatched))
}

/// Fixed-point solve seeded with the initial occupation, without writing files.
#[pyfunction]
#[pyo3(signature = (config, max_iter=None))]
fn solve(py: Python<'_>, config: PyConfig, max_iter: Option<usize>) -> PyResult<PyWeakSolution> {
    let c = config.inner;
    py.detach(|| {
        let init = build_init(&c)?;
        let coupling = c.coupling.build(*init.spec())?;
        let times = uniform_times(c.horizon, c.output_count);
        let seed = OccupationHistory::constant(times, chi_from_u(&init.u0))?;
        let settings = SolveSettings {
            cfl_safety: c.cfl_safety,
            ..SolveSettings::default()
        };
        fixed_point_solve_with(
            &init,
            &coupling,
            c.gamma,
            c.horizon,
            &seed,
            c.tolerance()?,
            max_iter.unwrap_or(c.max_iter),
            &settings,
        )
    })
    .map(|w| PyWeakSolution {
        iterations: w.iterations,
        converged: w.converged,
        residuals: w.residual_history,
        trajectory: w.u_traj,
    })
    .map_err(to_py)
}

#[pyfunction(name = "extract_contour")]
#[pyo3(signature = (field, level=0.0))]
fn py_extract_contour(field: &PyField, level: f64) -> PyResult<PyContour> {
    extract_contour(&field.inner, level).map(|inner| PyContour { inner }).map_err(to_py)
}

/// `(c0 * chi)(x) = Σ_y c0(x − y) chi(y) h²`.
#[pyfunction(name = "convolve")]
fn py_convolve(c0: &PyField, chi: &PyField) -> PyResult<PyField> {
    convolve_kernel(&c0.inner, &chi.inner).map(|inner| PyField { inner }).map_err(to_py)
}

#[pymodule]
pub fn frontlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FrontlabError", m.py().get_type::<FrontlabError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyContour>()?;
    m.add_class::<PyInitCondition>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRunOutcome>()?;
    m.add_class::<PyWeakSolution>()?;
    m.add_function(wrap_pyfunction!(list_presets, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_probe, m)?)?;
    m.add_function(wrap_pyfunction!(verify_dir, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(py_extract_contour, m)?)?;
    m.add_function(wrap_pyfunction!(py_convolve, m)?)?;
    Ok(())
}
