//! Python module `pyfracvi`. Fields cross the boundary as flat row-major lists.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use fracvi::analysis::{self, StudyReport};
use fracvi::frgrad;
use fracvi::instances;
use fracvi::oracle;
use fracvi::qvi::{self as core_qvi, QVIConfig, QVIProblem, ThresholdOperator};
use fracvi::vi::{self, EllipticCoefficients, PenaltyConfig, ProblemData, Threshold, VISolution};
use fracvi::{DomainMask, FracOrder, ScalarField, VectorField};

create_exception!(pyfracvi, FracviError, PyException, "Solver error; args are (reason, message).");

fn py_err(e: fracvi::Error) -> PyErr {
    FracviError::new_err((e.reason(), e.to_string()))
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for fracvi::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyclass(name = "Grid", frozen)]
#[derive(Clone, Copy)]
struct PyGrid(fracvi::Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, extent: f64, n: usize) -> PyResult<Self> {
        Ok(Self(fracvi::Grid::new(dim, extent, n).py()?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn extent(&self) -> f64 {
        self.0.extent()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.resolution()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Node coordinates along one axis.
    fn axis(&self) -> Vec<f64> {
        (0..self.0.resolution()).map(|i| self.0.coordinate(i)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Grid(dim={}, extent={}, n={})", self.0.dim(), self.0.extent(), self.0.resolution())
    }
}

fn field(grid: fracvi::Grid, values: Vec<f64>) -> PyResult<ScalarField> {
    ScalarField::new(grid, values).py()
}

fn order(sigma: f64) -> PyResult<FracOrder> {
    FracOrder::new(sigma).py()
}

fn components(v: VectorField) -> Vec<Vec<f64>> {
    v.into_components().into_iter().map(ScalarField::into_values).collect()
}

/// `D^σu` as one list per component.
#[pyfunction]
fn frac_gradient(grid: &PyGrid, u: Vec<f64>, sigma: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(components(frgrad::frac_gradient(&field(grid.0, u)?, order(sigma)?).py()?))
}

#[pyfunction]
fn frac_divergence(grid: &PyGrid, w: Vec<Vec<f64>>, sigma: f64) -> PyResult<Vec<f64>> {
    let comps = w.into_iter().map(|c| field(grid.0, c)).collect::<PyResult<Vec<_>>>()?;
    let w = VectorField::new(comps).py()?;
    Ok(frgrad::frac_divergence(&w, order(sigma)?).py()?.into_values())
}

#[pyfunction]
fn frac_laplacian(grid: &PyGrid, u: Vec<f64>, sigma: f64) -> PyResult<Vec<f64>> {
    Ok(frgrad::frac_laplacian(&field(grid.0, u)?, order(sigma)?).py()?.into_values())
}

#[pyfunction]
fn riesz_potential(grid: &PyGrid, u: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    Ok(frgrad::riesz_potential(&field(grid.0, u)?, alpha).py()?.into_values())
}

fn penalty(newton_tol: f64) -> PenaltyConfig {
    PenaltyConfig { newton_tol, ..Default::default() }
}

/// Box-shaped VI `(Ω, σ, a I, f, g)` on the torus `[-L, L)^N`.
#[pyclass(name = "Problem", frozen)]
#[derive(Clone)]
struct PyProblem(ProblemData);

#[pymethods]
impl PyProblem {
    /// `f` and `g` are scalars or flat lists over the grid; `nu` defaults to `min g`.
    #[new]
    #[pyo3(signature = (grid, omega, sigma, f, g, nu=None, a=1.0))]
    fn new(grid: &PyGrid, omega: f64, sigma: f64, f: FieldArg, g: FieldArg, nu: Option<f64>, a: f64) -> PyResult<Self> {
        let mask = DomainMask::boxed(grid.0, omega).py()?;
        let f = f.into_field(grid.0)?.restrict(&mask).py()?;
        let g = g.into_field(grid.0)?;
        let nu = nu.unwrap_or_else(|| g.min());
        let data = ProblemData::new(
            mask,
            order(sigma)?,
            EllipticCoefficients::constant(grid.0, a).py()?,
            f,
            Threshold::new(g, nu).py()?,
        )
        .py()?;
        Ok(Self(data))
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.mask().grid())
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.0.nu()
    }

    #[getter]
    fn f(&self) -> Vec<f64> {
        self.0.f().values().to_vec()
    }

    #[getter]
    fn g(&self) -> Vec<f64> {
        self.0.g().values().to_vec()
    }

    /// Indicator of Ω per node.
    fn inside(&self) -> Vec<bool> {
        self.0.mask().indicator().to_vec()
    }

    #[pyo3(signature = (newton_tol=instances::NEWTON_TOL))]
    fn solve(&self, py: Python<'_>, newton_tol: f64) -> PyResult<PyVISolution> {
        let s = py.allow_threads(|| vi::solve_vi(&self.0, &penalty(newton_tol))).py()?;
        Ok(PyVISolution(s))
    }

    /// Reference splitting solve; returns `u`.
    #[pyo3(signature = (rho=1.0, tol=1e-10, max_iter=200_000))]
    fn oracle_solve(&self, py: Python<'_>, rho: f64, tol: f64, max_iter: usize) -> PyResult<Vec<f64>> {
        Ok(py.allow_threads(|| oracle::oracle_solve_vi(&self.0, rho, tol, max_iter)).py()?.u.into_values())
    }

    fn energy(&self, u: Vec<f64>) -> PyResult<f64> {
        vi::energy(&field(*self.0.mask().grid(), u)?, &self.0).py()
    }

    fn hsigma_norm(&self, u: Vec<f64>) -> PyResult<f64> {
        self.0.hsigma_norm(&field(*self.0.mask().grid(), u)?).py()
    }

    fn feasibility_violation(&self, u: Vec<f64>) -> PyResult<f64> {
        vi::feasibility_violation(&field(*self.0.mask().grid(), u)?, &self.0).py()
    }

    #[pyo3(signature = (newton_tol=instances::NEWTON_TOL))]
    fn penalty_trace_study(&self, py: Python<'_>, newton_tol: f64) -> PyResult<PyStudyReport> {
        Ok(PyStudyReport(py.allow_threads(|| analysis::penalty_trace_study(&self.0, &penalty(newton_tol))).py()?))
    }

    #[pyo3(signature = (count=10, amp=0.1, seed=0, newton_tol=instances::NEWTON_TOL))]
    fn lipschitz_study(&self, py: Python<'_>, count: usize, amp: f64, seed: u64, newton_tol: f64) -> PyResult<PyStudyReport> {
        let deltas = analysis::perturbations_f(&self.0, count, amp, seed);
        Ok(PyStudyReport(py.allow_threads(|| analysis::lipschitz_study_f(&self.0, &deltas, &penalty(newton_tol), seed)).py()?))
    }

    /// Perturbs `g` along itself: `g + t g`.
    #[pyo3(signature = (t_values=vec![0.4, 0.2, 0.1, 0.05], seed=0, newton_tol=instances::NEWTON_TOL))]
    fn holder_study(&self, py: Python<'_>, t_values: Vec<f64>, seed: u64, newton_tol: f64) -> PyResult<PyStudyReport> {
        let h = self.0.g().clone();
        Ok(PyStudyReport(py.allow_threads(|| analysis::holder_study_g(&self.0, &t_values, &h, &penalty(newton_tol), seed)).py()?))
    }
}

#[derive(FromPyObject)]
enum FieldArg {
    Scalar(f64),
    Values(Vec<f64>),
}

impl FieldArg {
    fn into_field(self, grid: fracvi::Grid) -> PyResult<ScalarField> {
        match self {
            FieldArg::Scalar(c) => Ok(ScalarField::constant(grid, c)),
            FieldArg::Values(v) => field(grid, v),
        }
    }
}

#[pyclass(name = "VISolution", frozen)]
struct PyVISolution(VISolution);

#[pymethods]
impl PyVISolution {
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.0.u.values().to_vec()
    }

    #[getter]
    fn multiplier(&self) -> Vec<f64> {
        self.0.lambda.values().to_vec()
    }

    #[getter]
    fn eps_final(&self) -> f64 {
        self.0.eps_final
    }

    #[getter]
    fn diagnostics(&self) -> BTreeMap<&'static str, Option<f64>> {
        let d = &self.0.diagnostics;
        BTreeMap::from([
            ("feas_violation", Some(d.feas_violation)),
            ("comp_gap", Some(d.comp_gap)),
            ("multiplier_residual", Some(d.multiplier_residual)),
            ("vi_residual", Some(d.vi_residual)),
            ("energy", d.energy),
            ("zero_mode_fraction", Some(d.zero_mode_fraction)),
        ])
    }

    /// Writes `u.fvf`, `lambda.fvf` and `diagnostics.csv`.
    fn save(&self, dir: std::path::PathBuf) -> PyResult<()> {
        self.0.save(dir).py().map(|_| ())
    }
}

#[pyclass(name = "StudyReport", frozen)]
struct PyStudyReport(StudyReport);

#[pymethods]
impl PyStudyReport {
    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.name()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.0.columns.clone()
    }

    /// Rows with `None` for skipped cases.
    #[getter]
    fn rows(&self) -> Vec<Vec<Option<f64>>> {
        self.0.rows.clone()
    }

    #[getter]
    fn passed(&self) -> bool {
        self.0.passed()
    }

    fn constant(&self, name: &str) -> Option<f64> {
        self.0.constant(name)
    }

    /// `(name, measured, bound, passed)` per check.
    fn checks(&self) -> Vec<(String, f64, f64, bool)> {
        self.0.checks.iter().map(|c| (c.name.clone(), c.measured, c.bound, c.passed)).collect()
    }

    fn summary(&self) -> String {
        self.0.summary_line()
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.0.write_csv(path).py()
    }
}

/// A shipped quasi-variational instance.
#[pyclass(name = "QVI", frozen)]
struct PyQVI {
    name: &'static str,
    problem: QVIProblem,
    op: ThresholdOperator,
}

#[pymethods]
impl PyQVI {
    #[getter]
    fn name(&self) -> &'static str {
        self.name
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.op.name()
    }

    /// Picard iteration from `u0` (zero by default); returns `(u, iterations, residual history)`.
    #[pyo3(signature = (u0=None, outer_tol=instances::OUTER_TOL, outer_max=50))]
    fn solve(
        &self,
        py: Python<'_>,
        u0: Option<Vec<f64>>,
        outer_tol: f64,
        outer_max: usize,
    ) -> PyResult<(Vec<f64>, usize, Vec<f64>)> {
        let grid = *self.problem.mask().grid();
        let init = u0.map(|v| field(grid, v)).transpose()?.unwrap_or_else(|| ScalarField::zeros(grid));
        let cfg = QVIConfig { outer_tol, outer_max, ..instances::qvi_config() };
        let s = py.allow_threads(|| core_qvi::solve_qvi(&self.problem, &self.op, &cfg, &init)).py()?;
        let res = s.trace.iter().map(|r| r.fp_residual).collect();
        Ok((s.u.into_values(), s.iterations, res))
    }

    /// Contraction certificate as a dict; `certified` is `q < 1`.
    #[pyo3(signature = (seed=instances::SOBOLEV_SEED))]
    fn certificate(&self, py: Python<'_>, seed: u64) -> PyResult<BTreeMap<&'static str, f64>> {
        let r = py
            .allow_threads(|| {
                let est = core_qvi::estimate_sobolev_constant(self.problem.mask(), self.problem.sigma(), seed)?;
                core_qvi::contraction_certificate(self.problem.f(), &self.op, est.constant, self.problem.coefficients().a_star())
            })
            .py()?;
        Ok(BTreeMap::from([
            ("C_sharp", r.c_sharp),
            ("R_f", r.r_f),
            ("eta", r.eta_rf),
            ("gamma", r.gamma_rf),
            ("q", r.q),
            ("certified", if r.certified { 1.0 } else { 0.0 }),
        ]))
    }
}

/// Shipped VI instances by name: `binding_1d`, `inactive_1d`, `binding_2d`.
#[pyfunction]
fn vi_instance(name: &str) -> PyResult<PyProblem> {
    instances::vi_instances()
        .py()?
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| PyProblem(d))
        .ok_or_else(|| FracviError::new_err(("invalid_parameter", format!("no VI instance '{name}'"))))
}

/// Shipped QVI instances by name: `separated`, `kernel_integral`, `frac_grad_kernel`, `superposition`.
#[pyfunction]
fn qvi_instance(name: &str) -> PyResult<PyQVI> {
    instances::qvi_instances()
        .py()?
        .into_iter()
        .find(|(n, ..)| *n == name)
        .map(|(name, problem, op)| PyQVI { name, problem, op })
        .ok_or_else(|| FracviError::new_err(("invalid_parameter", format!("no QVI instance '{name}'"))))
}

/// Lower estimate of the Sobolev constant on the box `(-omega, omega)^N`.
#[pyfunction]
#[pyo3(signature = (grid, omega, sigma, seed=instances::SOBOLEV_SEED))]
fn sobolev_constant(py: Python<'_>, grid: &PyGrid, omega: f64, sigma: f64, seed: u64) -> PyResult<(f64, f64)> {
    let mask = DomainMask::boxed(grid.0, omega).py()?;
    let s = order(sigma)?;
    let e = py.allow_threads(|| core_qvi::estimate_sobolev_constant(&mask, s, seed)).py()?;
    Ok((e.constant, e.exponent))
}

#[pymodule]
pub fn pyfracvi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FracviError", m.py().get_type::<FracviError>())?;
    m.add("SCALE", instances::SCALE)?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyVISolution>()?;
    m.add_class::<PyStudyReport>()?;
    m.add_class::<PyQVI>()?;
    m.add_function(wrap_pyfunction!(frac_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(frac_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(frac_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(riesz_potential, m)?)?;
    m.add_function(wrap_pyfunction!(vi_instance, m)?)?;
    m.add_function(wrap_pyfunction!(qvi_instance, m)?)?;
    m.add_function(wrap_pyfunction!(sobolev_constant, m)?)?;
    Ok(())
}
