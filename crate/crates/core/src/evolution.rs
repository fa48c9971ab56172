//! Time integration of the Dirichlet and Cauchy problems: explicit
//! method-of-lines steppers and the Picard fixed-point construction.

use std::sync::Arc;

use crate::discretization::{build_grid, Field, Grid, NonlocalOperator, OperatorScaling};
use crate::error::{Error, Result};
use crate::kernel::{discretize, DiscreteKernel, Kernel, KernelSpec, Renormalization};
use crate::nonlinearity::{MuField, Nonlinearity};
use crate::sum::pairwise_sum_by;

/// Scalar function of position.
pub type Sampler = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Exterior data `h(x, t)`.
pub type BoundaryData = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Fraction of the explicit stability limit used by default.
pub const DEFAULT_CFL_SAFETY: f64 = 0.25;

/// What the solution equals outside Ω̄.
#[derive(Clone)]
pub enum Exterior {
    /// Prescribed `h(x, t)` on the collar.
    Dirichlet(BoundaryData),
    /// Truncated whole-space problem: zero outside the box, with a
    /// contamination monitor on the outermost kernel-radius ring.
    Zero { contamination_tol: f64 },
}

impl std::fmt::Debug for Exterior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Exterior::Dirichlet(_) => f.write_str("Dirichlet(..)"),
            Exterior::Zero { contamination_tol } => f
                .debug_struct("Zero")
                .field("contamination_tol", contamination_tol)
                .finish(),
        }
    }
}

/// How the nonlinearity is attached to the grid.
#[derive(Clone)]
pub enum NonlinearitySpec {
    Fixed(Nonlinearity),
    /// 𝒢_μ with μ sampled from a profile at every node.
    KpzProfile(Sampler),
}

impl From<Nonlinearity> for NonlinearitySpec {
    fn from(g: Nonlinearity) -> Self {
        NonlinearitySpec::Fixed(g)
    }
}

impl NonlinearitySpec {
    fn on(&self, grid: &Grid) -> Result<Nonlinearity> {
        match self {
            NonlinearitySpec::Fixed(g) => Ok(g.clone()),
            NonlinearitySpec::KpzProfile(mu) => {
                Nonlinearity::kpz(MuField::Sampled(grid.sample(|p| mu(p))))
            }
        }
    }
}

/// Kernel choice: base kernel plus an optional rescaling ε. A rescaled
/// kernel switches the operator to the diffusive `C(x)/ε²` scaling.
#[derive(Debug, Clone, Copy)]
pub struct KernelChoice {
    pub base: KernelSpec,
    pub epsilon: Option<f64>,
    pub mode: Renormalization,
}

impl KernelChoice {
    pub fn unscaled(base: KernelSpec) -> Self {
        Self {
            base,
            epsilon: None,
            mode: Renormalization::Mass,
        }
    }

    /// Rescaled kernel with lattice-moment renormalization.
    pub fn rescaled(base: KernelSpec, epsilon: f64) -> Self {
        Self {
            base,
            epsilon: Some(epsilon),
            mode: Renormalization::MassMoment,
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.base.support_radius() * self.epsilon.unwrap_or(1.0)
    }

    fn build(&self, h: f64) -> Result<(DiscreteKernel, OperatorScaling)> {
        match self.epsilon {
            None => Ok((discretize(&self.base, h, self.mode)?, OperatorScaling::Unit)),
            Some(eps) => {
                let k = self.base.rescale(eps)?;
                Ok((discretize(&k, h, self.mode)?, OperatorScaling::Diffusive))
            }
        }
    }
}

/// Problem with prescribed exterior data on Ω_J \ Ω̄.
#[derive(Clone)]
pub struct DirichletProblem {
    pub bounds: Vec<(f64, f64)>,
    pub spacing: f64,
    pub kernel: KernelChoice,
    pub nonlinearity: NonlinearitySpec,
    pub initial: Sampler,
    pub boundary: BoundaryData,
    pub horizon: f64,
}

impl DirichletProblem {
    pub fn build(&self) -> Result<Problem> {
        let radius = self.kernel.support_radius();
        let grid = build_grid(&self.bounds, self.spacing, radius)?;
        let (dk, scaling) = self.kernel.build(self.spacing)?;
        let g = self.nonlinearity.on(&grid)?;
        Problem::assemble(
            grid,
            dk,
            g,
            scaling,
            &*self.initial,
            Exterior::Dirichlet(self.boundary.clone()),
            self.horizon,
        )
    }
}

/// Whole-space problem truncated to the box `[-L, L]^N`.
#[derive(Clone)]
pub struct CauchyProblem {
    pub dim: usize,
    pub half_width: f64,
    pub spacing: f64,
    pub kernel: KernelChoice,
    pub nonlinearity: NonlinearitySpec,
    pub initial: Sampler,
    pub horizon: f64,
    pub contamination_tol: f64,
}

impl CauchyProblem {
    /// Truncation half-width: the initial data's extent, six diffusive
    /// lengths `√(2 D T)`, and five kernel radii. `diffusivity` is 1 for
    /// rescaled problems and `C(J)/2` for the plain convolution equation.
    pub fn default_half_width(
        initial_extent: f64,
        horizon: f64,
        diffusivity: f64,
        kernel_radius: f64,
    ) -> f64 {
        initial_extent + 6.0 * (2.0 * diffusivity * horizon).sqrt() + 5.0 * kernel_radius
    }

    pub fn build(&self) -> Result<Problem> {
        let radius = self.kernel.support_radius();
        if !(self.half_width > radius) {
            return Err(Error::Config(format!(
                "truncation half-width {} must exceed the kernel radius {radius}",
                self.half_width
            )));
        }
        // snap L up to a multiple of h so the box is commensurate
        let cells = (self.half_width / self.spacing * (1.0 - 1e-12)).ceil();
        let l = cells * self.spacing;
        let bounds = vec![(-l, l); self.dim];
        let grid = build_grid(&bounds, self.spacing, radius)?;
        let (dk, scaling) = self.kernel.build(self.spacing)?;
        let g = self.nonlinearity.on(&grid)?;
        Problem::assemble(
            grid,
            dk,
            g,
            scaling,
            &*self.initial,
            Exterior::Zero {
                contamination_tol: self.contamination_tol,
            },
            self.horizon,
        )
    }
}

/// A fully discretized problem ready to integrate.
#[derive(Clone)]
pub struct Problem {
    operator: NonlocalOperator,
    kernel: DiscreteKernel,
    initial: Vec<f64>,
    exterior: Exterior,
    horizon: f64,
    collar: Vec<(usize, Vec<f64>)>,
    ring: Vec<usize>,
    initial_sup: f64,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("nodes", &self.grid().len())
            .field("exterior", &self.exterior)
            .field("horizon", &self.horizon)
            .finish()
    }
}

impl Problem {
    /// Assembles a problem from its discrete parts. `initial` is sampled on
    /// Ω̄; the collar gets the exterior data at t = 0.
    pub fn assemble(
        grid: Grid,
        kernel: DiscreteKernel,
        nonlinearity: Nonlinearity,
        scaling: OperatorScaling,
        initial: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
        exterior: Exterior,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::NonPositive {
                what: "horizon",
                value: horizon,
            });
        }
        let operator = NonlocalOperator::new(&grid, &kernel, &nonlinearity, scaling)?;
        let collar: Vec<(usize, Vec<f64>)> = grid
            .collar_node_list()
            .into_iter()
            .map(|n| (n, grid.point(n)))
            .collect();
        let mut values = vec![0.0; grid.len()];
        for n in grid.interior_nodes() {
            values[n] = initial(&grid.point(n));
        }
        let ring = match exterior {
            Exterior::Zero { .. } => grid.boundary_ring(kernel.support_radius()),
            Exterior::Dirichlet(_) => Vec::new(),
        };
        let mut problem = Self {
            operator,
            kernel,
            initial: values,
            exterior,
            horizon,
            collar,
            ring,
            initial_sup: 0.0,
        };
        let mut init = problem.initial.clone();
        problem.refresh_collar(&mut init, 0.0);
        Field::new(init.clone(), 0.0).check(problem.grid())?;
        problem.initial_sup = problem
            .grid()
            .interior_nodes()
            .iter()
            .map(|&n| init[n].abs())
            .fold(0.0, f64::max);
        problem.initial = init;
        Ok(problem)
    }

    pub fn grid(&self) -> &Grid {
        self.operator.grid()
    }

    pub fn operator(&self) -> &NonlocalOperator {
        &self.operator
    }

    pub fn kernel(&self) -> &DiscreteKernel {
        &self.kernel
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        self.operator.nonlinearity()
    }

    pub fn exterior(&self) -> &Exterior {
        &self.exterior
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    /// Initial field with the collar filled at t = 0.
    pub fn initial_field(&self) -> Field {
        Field::new(self.initial.clone(), 0.0)
    }

    /// Replaces the initial values on Ω̄ (collar untouched).
    pub fn with_initial_values(mut self, values: &[f64]) -> Result<Self> {
        if values.len() != self.grid().len() {
            return Err(Error::LengthMismatch {
                expected: self.grid().len(),
                got: values.len(),
            });
        }
        for n in self.grid().interior_nodes() {
            self.initial[n] = values[n];
        }
        self.initial_sup = self
            .grid()
            .interior_nodes()
            .iter()
            .map(|&n| self.initial[n].abs())
            .fold(0.0, f64::max);
        Ok(self)
    }

    /// Writes the exterior data at time `t` into the collar entries of `u`.
    pub fn refresh_collar(&self, u: &mut [f64], t: f64) {
        match &self.exterior {
            Exterior::Dirichlet(h) => {
                for (n, p) in &self.collar {
                    u[*n] = h(p, t);
                }
            }
            Exterior::Zero { .. } => {
                for (n, _) in &self.collar {
                    u[*n] = 0.0;
                }
            }
        }
    }

    /// Largest |u| on the outermost kernel-radius ring, relative to ‖u0‖∞.
    fn ring_level(&self, u: &[f64]) -> f64 {
        let m = self.ring.iter().map(|&n| u[n].abs()).fold(0.0, f64::max);
        if self.initial_sup > 0.0 {
            m / self.initial_sup
        } else {
            m
        }
    }

    fn check_compatible(&self, other: &Problem) -> Result<()> {
        if self.grid() != other.grid() || self.kernel != other.kernel {
            return Err(Error::Mismatch(
                "comparison pair must share grid and kernel".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    /// Weight M of the norm `max_t e^{-Mt} ‖v(t)‖_{L¹(Ω)}`; defaults to
    /// twice the discrete contraction constant.
    pub weight: Option<f64>,
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Uniform time-grid spacing; defaults to `horizon / 64`.
    pub dt: Option<f64>,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            weight: None,
            tolerance: 1e-12,
            max_sweeps: 500,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub cfl_safety: f64,
    pub dt: Option<f64>,
    pub picard: PicardConfig,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            cfl_safety: DEFAULT_CFL_SAFETY,
            dt: None,
            picard: PicardConfig::default(),
        }
    }
}

impl IntegratorConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.picard.tolerance > 0.0) {
            return Err(Error::NonPositive {
                what: "picard tolerance",
                value: self.picard.tolerance,
            });
        }
        Ok(())
    }
}

/// `cfl_safety / L` with `L = 2·alpha2·max scale·stencil mass`.
pub fn stable_dt(problem: &Problem, cfg: &IntegratorConfig) -> f64 {
    cfg.cfl_safety / problem.operator.lipschitz_bound()
}

/// Receives the solution at every accepted step (and at t = 0).
pub trait Observer {
    fn observe(&mut self, t: f64, u: &[f64], ctx: &StepContext<'_>);
}

/// Per-call context handed to observers.
pub struct StepContext<'a> {
    pub problem: &'a Problem,
    pub step: usize,
    /// True when `t` is one of the requested stop times (or 0 or T).
    pub at_stop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationBreach {
    pub time: f64,
    pub level: f64,
}

#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub field: Field,
    pub steps: usize,
    pub dt: f64,
    /// Worst ring level seen (Cauchy problems only).
    pub max_ring_level: f64,
    pub breach: Option<ContaminationBreach>,
}

impl EvolveOutcome {
    pub fn valid(&self) -> bool {
        self.breach.is_none()
    }
}

/// Single-problem explicit stepper.
pub struct Stepper<'p> {
    problem: &'p Problem,
    method: Method,
    t: f64,
    u: Vec<f64>,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl<'p> Stepper<'p> {
    pub fn new(problem: &'p Problem, method: Method) -> Result<Self> {
        if method == Method::Picard {
            return Err(Error::Config("Picard is not a time stepper".into()));
        }
        let n = problem.grid().len();
        Ok(Self {
            problem,
            method,
            t: 0.0,
            u: problem.initial.clone(),
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    fn rhs(&mut self, which: usize, from_stage: bool) -> Result<()> {
        let src = if from_stage { &self.stage } else { &self.u };
        let t = self.t;
        self.problem
            .operator
            .apply_into(src, &mut self.k[which])
            .map_err(|e| match e {
                Error::NonFiniteInput { .. } => Error::Blowup { last_valid_time: t },
                other => other,
            })
    }

    fn set_stage(&mut self, which: usize, factor: f64, t: f64) {
        let k = &self.k[which];
        for ((s, u), kv) in self.stage.iter_mut().zip(&self.u).zip(k) {
            *s = u + factor * kv;
        }
        self.problem.refresh_collar(&mut self.stage, t);
    }

    /// Advances by `dt`, refreshing the collar at every stage time.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let t = self.t;
        match self.method {
            Method::Euler => {
                self.rhs(0, false)?;
                for (u, k) in self.u.iter_mut().zip(&self.k[0]) {
                    *u += dt * k;
                }
            }
            Method::Rk4 => {
                self.rhs(0, false)?;
                self.set_stage(0, 0.5 * dt, t + 0.5 * dt);
                self.rhs(1, true)?;
                self.set_stage(1, 0.5 * dt, t + 0.5 * dt);
                self.rhs(2, true)?;
                self.set_stage(2, dt, t + dt);
                self.rhs(3, true)?;
                let [k1, k2, k3, k4] = &self.k;
                let c = dt / 6.0;
                for (i, u) in self.u.iter_mut().enumerate() {
                    *u += c * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
                }
            }
            Method::Picard => unreachable!(),
        }
        self.t = t + dt;
        self.problem.refresh_collar(&mut self.u, self.t);
        if self.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Blowup { last_valid_time: t });
        }
        Ok(())
    }
}

fn resolve_dt(problem: &Problem, cfg: &IntegratorConfig) -> Result<f64> {
    cfg.validate()?;
    let limit = stable_dt(problem, cfg);
    match cfg.dt {
        Some(dt) if !(dt > 0.0) => Err(Error::NonPositive {
            what: "dt",
            value: dt,
        }),
        Some(dt) if dt > limit * (1.0 + 1e-12) => Err(Error::UnstableStep { dt, limit }),
        Some(dt) => Ok(dt),
        None => Ok(limit),
    }
}

/// Drives a time loop that lands exactly on each stop time and on T.
struct Clock {
    stops: Vec<f64>,
    next: usize,
    horizon: f64,
}

impl Clock {
    fn new(stops: &[f64], horizon: f64) -> Self {
        let mut s: Vec<f64> = stops
            .iter()
            .copied()
            .filter(|&t| t > 0.0 && t < horizon)
            .collect();
        s.push(horizon);
        s.sort_by(f64::total_cmp);
        s.dedup();
        Self {
            stops: s,
            next: 0,
            horizon,
        }
    }

    /// Step to take from `t` with nominal `dt`, and whether it lands on a stop.
    fn plan(&mut self, t: f64, dt: f64) -> Option<(f64, bool, f64)> {
        while self.next < self.stops.len() && self.stops[self.next] <= t + 1e-12 * dt {
            self.next += 1;
        }
        if self.next >= self.stops.len() || t >= self.horizon - 1e-12 * dt {
            return None;
        }
        let target = self.stops[self.next];
        if t + dt >= target - 1e-9 * dt {
            Some((target - t, true, target))
        } else {
            Some((dt, false, t + dt))
        }
    }
}

/// Integrates `problem` to its horizon. Observers see t = 0 and every
/// accepted step; steps are shortened to land on each of `stops`.
pub fn evolve(
    problem: &Problem,
    cfg: &IntegratorConfig,
    stops: &[f64],
    observers: &mut [&mut dyn Observer],
) -> Result<EvolveOutcome> {
    if cfg.method == Method::Picard {
        let out = picard_solve(problem, cfg)?;
        for (i, (t, u)) in out.times.iter().zip(&out.trajectory).enumerate() {
            let ctx = StepContext {
                problem,
                step: i,
                at_stop: true,
            };
            for o in observers.iter_mut() {
                o.observe(*t, u, &ctx);
            }
        }
        let last = out.trajectory.last().cloned().unwrap_or_default();
        return Ok(EvolveOutcome {
            field: Field::new(last, problem.horizon),
            steps: out.times.len() - 1,
            dt: out.dt,
            max_ring_level: 0.0,
            breach: None,
        });
    }
    let dt = resolve_dt(problem, cfg)?;
    let mut stepper = Stepper::new(problem, cfg.method)?;
    let mut clock = Clock::new(stops, problem.horizon);
    let ctx0 = StepContext {
        problem,
        step: 0,
        at_stop: true,
    };
    for o in observers.iter_mut() {
        o.observe(0.0, &stepper.u, &ctx0);
    }
    let monitor = matches!(problem.exterior, Exterior::Zero { .. });
    let tol = match problem.exterior {
        Exterior::Zero { contamination_tol } => contamination_tol,
        _ => f64::INFINITY,
    };
    let mut steps = 0;
    let mut max_ring = 0.0f64;
    let mut breach = None;
    while let Some((step, at_stop, t_next)) = clock.plan(stepper.t, dt) {
        stepper.step(step)?;
        stepper.t = t_next;
        steps += 1;
        if monitor {
            let level = problem.ring_level(&stepper.u);
            max_ring = max_ring.max(level);
            if level > tol && breach.is_none() {
                breach = Some(ContaminationBreach {
                    time: t_next,
                    level,
                });
            }
        }
        let ctx = StepContext {
            problem,
            step: steps,
            at_stop,
        };
        for o in observers.iter_mut() {
            o.observe(stepper.t, &stepper.u, &ctx);
        }
    }
    Ok(EvolveOutcome {
        field: Field::new(stepper.u, stepper.t),
        steps,
        dt,
        max_ring_level: max_ring,
        breach,
    })
}

/// Result of the Picard construction on a uniform time grid.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub times: Vec<f64>,
    /// Full-lattice solution at each time.
    pub trajectory: Vec<Vec<f64>>,
    pub dt: f64,
    pub sweeps: usize,
    /// Weighted distance between consecutive iterates, one per sweep.
    pub increments: Vec<f64>,
    /// Ratios of consecutive increments.
    pub contraction_factors: Vec<f64>,
    /// Discrete L¹ Lipschitz constant of the right-hand side.
    pub lipschitz: f64,
    pub weight: f64,
    /// Contraction bound for the weighted norm with trapezoidal quadrature:
    /// `C (Δ/2) coth(MΔ/2)`, which tends to `C/M` as Δ → 0.
    pub predicted_factor: f64,
}

fn interior_l1(grid: &Grid, nodes: &[usize], a: &[f64], b: &[f64]) -> f64 {
    grid.cell_volume() * pairwise_sum_by(nodes.len(), |i| (a[nodes[i]] - b[nodes[i]]).abs())
}

/// Iterates `v ↦ u0 + ∫₀ᵗ F(v)` with trapezoidal quadrature in time until
/// the weighted L¹ increment drops below the tolerance.
pub fn picard_solve(problem: &Problem, cfg: &IntegratorConfig) -> Result<PicardOutcome> {
    cfg.validate()?;
    let pc = cfg.picard;
    let horizon = problem.horizon;
    let n_t = match pc.dt.or(cfg.dt) {
        Some(dt) if dt > 0.0 => (horizon / dt * (1.0 - 1e-12)).ceil() as usize,
        Some(dt) => {
            return Err(Error::NonPositive {
                what: "picard dt",
                value: dt,
            })
        }
        None => 64,
    }
    .max(1);
    let dt = horizon / n_t as f64;
    let times: Vec<f64> = (0..=n_t).map(|i| i as f64 * dt).collect();
    let lipschitz = problem.operator.lipschitz_bound();
    let weight = pc.weight.unwrap_or(2.0 * lipschitz);
    let half = 0.5 * weight * dt;
    let predicted_factor = lipschitz * 0.5 * dt / half.tanh();

    let grid = problem.grid();
    let nodes = grid.interior_nodes();
    let len = grid.len();
    let u0 = &problem.initial;

    let mut v: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            let mut u = u0.clone();
            problem.refresh_collar(&mut u, t);
            u
        })
        .collect();
    let eval = |v: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        v.iter().map(|u| problem.operator.apply(u)).collect()
    };
    let mut f = eval(&v)?;

    let mut increments = Vec::new();
    let mut factors = Vec::new();
    let mut above_one = 0;
    for sweep in 1..=pc.max_sweeps {
        let mut next = Vec::with_capacity(v.len());
        let mut integral = vec![0.0; len];
        let mut worst = 0.0f64;
        for (i, &t) in times.iter().enumerate() {
            if i > 0 {
                for &n in &nodes {
                    integral[n] += 0.5 * dt * (f[i - 1][n] + f[i][n]);
                }
            }
            let mut u = v[i].clone();
            for &n in &nodes {
                u[n] = u0[n] + integral[n];
            }
            let d = interior_l1(grid, &nodes, &u, &v[i]);
            worst = worst.max((-weight * t).exp() * d);
            next.push(u);
        }
        if let Some(prev) = increments.last().copied() {
            let factor = if prev > 0.0 { worst / prev } else { 0.0 };
            factors.push(factor);
            if factor >= 1.0 {
                above_one += 1;
                if above_one >= 2 {
                    return Err(Error::NonContraction { sweep, factor });
                }
            } else {
                above_one = 0;
            }
        }
        increments.push(worst);
        v = next;
        if worst < pc.tolerance {
            return Ok(PicardOutcome {
                times,
                trajectory: v,
                dt,
                sweeps: sweep,
                increments,
                contraction_factors: factors,
                lipschitz,
                weight,
                predicted_factor,
            });
        }
        f = eval(&v)?;
    }
    Err(Error::PicardNotConverged {
        tolerance: pc.tolerance,
        sweeps: pc.max_sweeps,
        last: increments.last().copied().unwrap_or(f64::NAN),
    })
}

/// Minimum of `v - u` over Ω̄ for two ordered problems advanced in lockstep.
#[derive(Debug, Clone)]
pub struct ComparisonOutcome {
    pub min_gap: f64,
    /// `(t, min over Ω̄ of v - u)` at t = 0 and after every step.
    pub series: Vec<(f64, f64)>,
    pub steps: usize,
}

pub fn evolve_comparison_pair(
    sub: &Problem,
    sup: &Problem,
    cfg: &IntegratorConfig,
) -> Result<ComparisonOutcome> {
    sub.check_compatible(sup)?;
    let method = match cfg.method {
        Method::Picard => Method::Rk4,
        m => m,
    };
    let dt = resolve_dt(sub, cfg)?.min(resolve_dt(sup, cfg)?);
    let horizon = sub.horizon.min(sup.horizon);
    let nodes = sub.grid().interior_nodes();
    let gap = |a: &[f64], b: &[f64]| {
        nodes
            .iter()
            .map(|&n| b[n] - a[n])
            .fold(f64::INFINITY, f64::min)
    };
    let mut lo = Stepper::new(sub, method)?;
    let mut hi = Stepper::new(sup, method)?;
    let mut series = vec![(0.0, gap(&lo.u, &hi.u))];
    let mut clock = Clock::new(&[], horizon);
    let mut steps = 0;
    while let Some((step, _, t_next)) = clock.plan(lo.t, dt) {
        lo.step(step)?;
        hi.step(step)?;
        lo.t = t_next;
        hi.t = t_next;
        steps += 1;
        series.push((t_next, gap(&lo.u, &hi.u)));
    }
    let min_gap = series.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Ok(ComparisonOutcome {
        min_gap,
        series,
        steps,
    })
}

/// Keeps full snapshots at stop times.
#[derive(Debug, Default, Clone)]
pub struct SnapshotRecorder {
    pub snapshots: Vec<Field>,
    pub every_step: bool,
}

impl Observer for SnapshotRecorder {
    fn observe(&mut self, t: f64, u: &[f64], ctx: &StepContext<'_>) {
        if ctx.at_stop || self.every_step {
            self.snapshots.push(Field::new(u.to_vec(), t));
        }
    }
}

/// Rows of `(t, observable, value)`, streamed to CSV.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ObservableLog {
    pub rows: Vec<(f64, String, f64)>,
}

impl ObservableLog {
    pub fn push(&mut self, t: f64, name: &str, value: f64) {
        self.rows.push((t, name.to_string(), value));
    }

    pub fn series(&self, name: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.1 == name)
            .map(|r| (r.0, r.2))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,observable,value\n");
        for (t, name, v) in &self.rows {
            out.push_str(&format!("{t:e},{name},{v:e}\n"));
        }
        out
    }
}
