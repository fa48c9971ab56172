//! Python bindings. Fields cross the boundary as flat lists of floats in
//! grid order, collar nodes included.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::nonlocal_kpz::analysis;
use ::nonlocal_kpz::discretization::assemble_dirichlet_form;
use ::nonlocal_kpz::evolution::{
    self, CauchyProblem, DirichletProblem, IntegratorConfig, KernelChoice, Method, PicardConfig,
    SnapshotRecorder,
};
use ::nonlocal_kpz::harness::{self, ExperimentConfig};
use ::nonlocal_kpz::kernel::{make_kernel, Kernel as _, KernelSpec, Profile};
use ::nonlocal_kpz::nonlinearity::{self as nl, Orientation};
use ::nonlocal_kpz::reference::{dirichlet_data_from, HopfCole as CoreHopfCole};
use ::nonlocal_kpz::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Blowup { .. }
        | Error::NonContraction { .. }
        | Error::PicardNotConverged { .. }
        | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T> {
    s.parse()
        .map_err(|_| PyValueError::new_err(format!("unknown {what} `{s}`")))
}

fn method(name: &str) -> PyResult<Method> {
    match name {
        "euler" => Ok(Method::Euler),
        "rk4" => Ok(Method::Rk4),
        "picard" => Ok(Method::Picard),
        other => Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    }
}

/// Unit-mass radial kernel with compact support.
#[pyclass(frozen, module = "nonlocal_kpz")]
struct Kernel {
    spec: KernelSpec,
}

#[pymethods]
impl Kernel {
    #[new]
    #[pyo3(signature = (profile = "uniform", dim = 1, radius = 1.0))]
    fn new(profile: &str, dim: usize, radius: f64) -> PyResult<Self> {
        let profile: Profile = parse("kernel profile", profile)?;
        Ok(Self {
            spec: make_kernel(profile, dim, radius).map_err(err)?,
        })
    }

    #[getter]
    fn profile(&self) -> &'static str {
        self.spec.profile().name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.spec.support_radius()
    }

    /// Second moment along one axis.
    #[getter]
    fn second_moment(&self) -> f64 {
        self.spec.second_moment()
    }

    fn __call__(&self, r: f64) -> f64 {
        self.spec.eval_radial(r.abs())
    }

    fn __repr__(&self) -> String {
        format!(
            "Kernel(profile='{}', dim={}, radius={})",
            self.profile(),
            self.dim(),
            self.radius()
        )
    }
}

#[pyclass(frozen, module = "nonlocal_kpz")]
struct Nonlinearity {
    inner: nl::Nonlinearity,
}

#[pymethods]
impl Nonlinearity {
    #[staticmethod]
    fn identity() -> Self {
        Self {
            inner: nl::Nonlinearity::identity(),
        }
    }

    /// `G(s) = 1 + mu s / (2 (1 + mu^2 s^2))`.
    #[staticmethod]
    fn kpz(mu: f64) -> PyResult<Self> {
        Ok(Self {
            inner: nl::Nonlinearity::kpz_constant(mu).map_err(err)?,
        })
    }

    fn g(&self, s: f64) -> f64 {
        self.inner.g(0, s)
    }

    fn flux(&self, s: f64) -> f64 {
        self.inner.flux(0, s)
    }

    #[getter]
    fn alpha1(&self) -> f64 {
        self.inner.alpha1()
    }

    #[getter]
    fn alpha2(&self) -> f64 {
        self.inner.alpha2()
    }

    #[getter]
    fn orientation(&self) -> &'static str {
        match self.inner.orientation() {
            Orientation::Absorption => "absorption",
            Orientation::Reaction => "reaction",
            Orientation::Neutral => "neutral",
            Orientation::Mixed => "mixed",
        }
    }

    /// Samples the class bounds at `samples` random points; returns
    /// `(samples, violations)`.
    #[pyo3(signature = (samples = 10_000, seed = 0))]
    fn certify(&self, samples: usize, seed: u64) -> (usize, usize) {
        let r = nl::certify_class(&self.inner, samples, seed);
        (r.samples, r.violations)
    }
}

/// Exact solution of the viscous KPZ equation via the Hopf-Cole transform.
#[pyclass(frozen, module = "nonlocal_kpz")]
struct HopfCole {
    inner: CoreHopfCole,
}

#[pymethods]
impl HopfCole {
    #[new]
    #[pyo3(signature = (mu, amplitude = 0.5, variance = 1.0, dim = 1))]
    fn new(mu: f64, amplitude: f64, variance: f64, dim: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CoreHopfCole::new(mu, amplitude, variance, dim).map_err(err)?,
        })
    }

    fn v(&self, x: Vec<f64>, t: f64) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.v(&x, t))
    }

    fn w(&self, x: Vec<f64>, t: f64) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.w(&x, t))
    }
}

impl HopfCole {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.inner.dim()
            )));
        }
        Ok(())
    }
}

fn kernel_choice(kernel: &Kernel, epsilon: Option<f64>) -> KernelChoice {
    match epsilon {
        Some(e) => KernelChoice::rescaled(kernel.spec, e),
        None => KernelChoice::unscaled(kernel.spec),
    }
}

fn integrator(
    method_name: &str,
    dt: Option<f64>,
    cfl_safety: f64,
    tolerance: f64,
) -> PyResult<IntegratorConfig> {
    let method = method(method_name)?;
    // Picard takes dt as its time-grid spacing, the explicit methods as a step
    let picard_dt = if method == Method::Picard { dt } else { None };
    Ok(IntegratorConfig {
        method,
        cfl_safety,
        dt: if method == Method::Picard { None } else { dt },
        picard: PicardConfig {
            tolerance,
            dt: picard_dt,
            ..PicardConfig::default()
        },
    })
}

/// A discretized problem: grid, kernel stencil, nonlinearity, exterior data
/// and initial values.
#[pyclass(frozen, module = "nonlocal_kpz")]
struct Problem {
    inner: evolution::Problem,
}

#[pymethods]
impl Problem {
    /// Bounded box with exterior data. With `reference` the initial and
    /// exterior values come from that exact solution; otherwise the
    /// exterior is the constant `exterior` and the initial field is zero
    /// until replaced.
    #[staticmethod]
    #[pyo3(signature = (bounds, spacing, kernel, nonlinearity, horizon, epsilon = None, exterior = 0.0, reference = None))]
    #[allow(clippy::too_many_arguments)]
    fn dirichlet(
        bounds: Vec<(f64, f64)>,
        spacing: f64,
        kernel: &Kernel,
        nonlinearity: &Nonlinearity,
        horizon: f64,
        epsilon: Option<f64>,
        exterior: f64,
        reference: Option<&HopfCole>,
    ) -> PyResult<Self> {
        let (initial, boundary): (evolution::Sampler, evolution::BoundaryData) = match reference {
            Some(r) => dirichlet_data_from(Arc::new(r.inner)),
            None => (Arc::new(|_| 0.0), Arc::new(move |_, _| exterior)),
        };
        let p = DirichletProblem {
            bounds,
            spacing,
            kernel: kernel_choice(kernel, epsilon),
            nonlinearity: nonlinearity.inner.clone().into(),
            initial,
            boundary,
            horizon,
        };
        Ok(Self {
            inner: p.build().map_err(err)?,
        })
    }

    /// Whole space truncated to `[-half_width, half_width]^dim` with zero
    /// exterior and a contamination monitor.
    #[staticmethod]
    #[pyo3(signature = (half_width, spacing, kernel, nonlinearity, horizon, epsilon = None, contamination_tol = 1e-6))]
    fn cauchy(
        half_width: f64,
        spacing: f64,
        kernel: &Kernel,
        nonlinearity: &Nonlinearity,
        horizon: f64,
        epsilon: Option<f64>,
        contamination_tol: f64,
    ) -> PyResult<Self> {
        let p = CauchyProblem {
            dim: kernel.spec.dim(),
            half_width,
            spacing,
            kernel: kernel_choice(kernel, epsilon),
            nonlinearity: nonlinearity.inner.clone().into(),
            initial: Arc::new(|_| 0.0),
            horizon,
            contamination_tol,
        };
        Ok(Self {
            inner: p.build().map_err(err)?,
        })
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.inner.grid().spacing()
    }

    fn __len__(&self) -> usize {
        self.inner.grid().len()
    }

    /// Node coordinates in grid order.
    fn coords(&self) -> Vec<Vec<f64>> {
        let g = self.inner.grid();
        (0..g.len()).map(|n| g.point(n)).collect()
    }

    /// True on nodes of the closed domain, false on the exterior collar.
    fn interior_mask(&self) -> Vec<bool> {
        let g = self.inner.grid();
        (0..g.len()).map(|n| g.is_interior(n)).collect()
    }

    fn initial(&self) -> Vec<f64> {
        self.inner.initial_field().values
    }

    /// Copy of this problem with new initial values on the domain; collar
    /// entries of `values` are ignored.
    fn with_initial(&self, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: self
                .inner
                .clone()
                .with_initial_values(&values)
                .map_err(err)?,
        })
    }

    fn with_horizon(&self, horizon: f64) -> Self {
        Self {
            inner: self.inner.clone().with_horizon(horizon),
        }
    }

    /// Right-hand side of the semi-discrete system at `values`.
    fn rhs(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.operator().apply(&values).map_err(err)
    }

    #[getter]
    fn lipschitz_bound(&self) -> f64 {
        self.inner.operator().lipschitz_bound()
    }

    #[pyo3(signature = (cfl_safety = evolution::DEFAULT_CFL_SAFETY))]
    fn stable_dt(&self, cfl_safety: f64) -> f64 {
        let cfg = IntegratorConfig {
            cfl_safety,
            ..IntegratorConfig::default()
        };
        evolution::stable_dt(&self.inner, &cfg)
    }

    /// Integrates to the horizon. Returns a dict with the final `field`,
    /// `snapshots` as `(t, values)` pairs at 0, each of `stops` and the
    /// horizon, `steps`, `dt`, `valid` and `max_ring_level`.
    #[pyo3(signature = (method = "rk4", dt = None, stops = Vec::new(), cfl_safety = evolution::DEFAULT_CFL_SAFETY, tolerance = 1e-12))]
    fn evolve<'py>(
        &self,
        py: Python<'py>,
        method: &str,
        dt: Option<f64>,
        stops: Vec<f64>,
        cfl_safety: f64,
        tolerance: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = integrator(method, dt, cfl_safety, tolerance)?;
        let problem = &self.inner;
        let (out, rec) = py
            .detach(|| {
                let mut rec = SnapshotRecorder::default();
                evolution::evolve(problem, &cfg, &stops, &mut [&mut rec]).map(|o| (o, rec))
            })
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("time", out.field.time)?;
        d.set_item("field", out.field.values)?;
        d.set_item(
            "snapshots",
            rec.snapshots
                .into_iter()
                .map(|f| (f.time, f.values))
                .collect::<Vec<_>>(),
        )?;
        d.set_item("steps", out.steps)?;
        d.set_item("dt", out.dt)?;
        d.set_item("valid", out.breach.is_none())?;
        d.set_item("max_ring_level", out.max_ring_level)?;
        Ok(d)
    }

    /// Picard iteration on the integral form. Returns a dict with `times`,
    /// `trajectory`, `sweeps`, `contraction_factors` and `predicted_factor`.
    #[pyo3(signature = (dt = None, tolerance = 1e-12))]
    fn picard<'py>(
        &self,
        py: Python<'py>,
        dt: Option<f64>,
        tolerance: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = integrator("picard", dt, evolution::DEFAULT_CFL_SAFETY, tolerance)?;
        let problem = &self.inner;
        let out = py
            .detach(|| evolution::picard_solve(problem, &cfg))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("times", out.times)?;
        d.set_item("trajectory", out.trajectory)?;
        d.set_item("sweeps", out.sweeps)?;
        d.set_item("contraction_factors", out.contraction_factors)?;
        d.set_item("predicted_factor", out.predicted_factor)?;
        Ok(d)
    }

    /// Discrete `L^q` norm over the domain; `q = inf` gives the max.
    fn norm(&self, values: Vec<f64>, q: f64) -> PyResult<f64> {
        if values.len() != self.inner.grid().len() {
            return Err(err(Error::LengthMismatch {
                expected: self.inner.grid().len(),
                got: values.len(),
            }));
        }
        if q < 1.0 {
            return Err(PyValueError::new_err(format!(
                "q must be at least 1, got {q}"
            )));
        }
        Ok(analysis::lq_norm(self.inner.grid(), &values, q))
    }

    /// Principal eigenvalue of the linear nonlocal operator with zero
    /// exterior.
    fn lambda1(&self, py: Python<'_>) -> PyResult<f64> {
        let problem = &self.inner;
        py.detach(|| {
            let form = assemble_dirichlet_form(problem.grid(), problem.kernel())?;
            analysis::lambda1(&form).map(|e| e.value)
        })
        .map_err(err)
    }
}

/// `(file name, csv)` pairs.
type Tables = Vec<(String, String)>;

/// `(id, summary)` of every experiment.
#[pyfunction]
fn experiments() -> Vec<(&'static str, &'static str)> {
    harness::EXPERIMENTS.to_vec()
}

/// Runs an experiment from a TOML config string. Returns
/// `(passed, verdict_lines, {file: csv})`.
#[pyfunction]
#[pyo3(signature = (id, config = ""))]
fn run_experiment(py: Python<'_>, id: &str, config: &str) -> PyResult<(bool, String, Tables)> {
    let cfg = ExperimentConfig::from_toml(config).map_err(err)?;
    let out = py
        .detach(|| harness::run_experiment(id, &cfg))
        .map_err(err)?;
    Ok((out.passed(), out.verdict_lines(), out.tables))
}

#[pymodule]
#[pyo3(name = "nonlocal_kpz")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_class::<Nonlinearity>()?;
    m.add_class::<HopfCole>()?;
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("KPZ_CONE", nl::KPZ_CONE)?;
    Ok(())
}
