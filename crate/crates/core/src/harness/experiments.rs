use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, NonlinearityKindConfig};
use crate::analysis::{
    dj_functional, double_energy, double_energy_periodic, geometric_times, lambda1, lq_norm,
    ConvergenceReport, DecayReport,
};
use crate::discretization::{
    assemble_dirichlet_form, build_grid, NonlocalOperator, OperatorScaling,
};
use crate::error::{Error, Result};
use crate::evolution::{
    evolve, evolve_comparison_pair, picard_solve, stable_dt, BoundaryData, CauchyProblem,
    DirichletProblem, IntegratorConfig, KernelChoice, Method, NonlinearitySpec, Observer, Problem,
    Sampler, SnapshotRecorder, StepContext,
};
use crate::kernel::{discretize, Kernel, KernelSpec, Profile, Renormalization};
use crate::nonlinearity::{certify_class, check_elementary_inequality, Nonlinearity, Orientation};
use crate::reference::{
    dirichlet_data_from, FdSurrogate, HopfCole, ReferenceSolution, SurrogateSpec,
};
use crate::report::PropertyReport;

fn mu_profile(cfg: &ExperimentConfig, mu: f64) -> Option<Sampler> {
    let amp = cfg.nonlinearity.mu_amplitude.unwrap_or(0.0);
    if amp == 0.0 {
        return None;
    }
    let k = cfg
        .nonlinearity
        .mu_wavenumber
        .unwrap_or(std::f64::consts::PI);
    Some(Arc::new(move |x: &[f64]| mu + amp * (k * x[0]).sin()))
}

fn nonlinearity_spec(cfg: &ExperimentConfig, mu: f64) -> Result<NonlinearitySpec> {
    if cfg.nonlinearity.kind == Some(NonlinearityKindConfig::Identity) {
        return Ok(Nonlinearity::identity().into());
    }
    if let Some(p) = mu_profile(cfg, mu) {
        return Ok(NonlinearitySpec::KpzProfile(p));
    }
    let g = Nonlinearity::kpz_constant(mu)?;
    Ok(match cfg.nonlinearity.declared_alpha2 {
        Some(a2) => {
            let a1 = g.alpha1();
            g.with_declared_bounds(a1, a2)
        }
        None => g,
    }
    .into())
}

fn mu_of(cfg: &ExperimentConfig, default: f64) -> f64 {
    match cfg.nonlinearity.kind {
        Some(NonlinearityKindConfig::Identity) => 0.0,
        _ => cfg.nonlinearity.mu.unwrap_or(default),
    }
}

fn uniform_stops(horizon: f64, samples: usize) -> Vec<f64> {
    (1..=samples.max(1))
        .map(|k| horizon * k as f64 / samples.max(1) as f64)
        .collect()
}

fn spacing_for(radius: f64, points: f64) -> f64 {
    radius / points
}

/// Operator applied to `x₁²` on the rescaled lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactnessRun {
    /// `(ε, h, interior nodes, max |Lu - 2|)`.
    pub rows: Vec<(f64, f64, usize, f64)>,
    pub tolerance: f64,
}

impl ExactnessRun {
    pub fn passed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.3 <= self.tolerance)
    }
}

pub fn exp_quadratic_exactness(cfg: &ExperimentConfig) -> Result<ExactnessRun> {
    let base = cfg.kernel_spec(Profile::Uniform)?;
    let eps = cfg.sweep.epsilons.clone().unwrap_or_else(|| vec![0.2, 0.1]);
    let k = cfg.points_per_radius()?;
    let bounds = cfg.bounds()?;
    let mut rows = Vec::new();
    for &e in &eps {
        let kernel = base.rescale(e)?;
        let h = spacing_for(kernel.support_radius(), k);
        let grid = build_grid(&bounds, h, kernel.support_radius())?;
        let dk = discretize(&kernel, h, Renormalization::MassMoment)?;
        let op = NonlocalOperator::new(
            &grid,
            &dk,
            &Nonlinearity::identity(),
            OperatorScaling::Diffusive,
        )?;
        let u = grid.sample(|x| x[0] * x[0]);
        let lu = op.apply(&u)?;
        let worst = grid
            .interior_nodes()
            .iter()
            .map(|&n| (lu[n] - 2.0).abs())
            .fold(0.0, f64::max);
        rows.push((e, h, grid.interior_count(), worst));
    }
    Ok(ExactnessRun {
        rows,
        tolerance: cfg.tolerances.exactness.unwrap_or(1e-8),
    })
}

/// One ε of a convergence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub epsilon: f64,
    pub spacing: f64,
    pub nodes: usize,
    pub steps: usize,
    pub dt: f64,
    pub sup_error: f64,
    /// `(t, L∞ error)` at the observation times.
    pub series: Vec<(f64, f64)>,
    pub valid: bool,
    pub max_ring_level: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub report: ConvergenceReport,
    pub records: Vec<ConvergenceRecord>,
    /// Estimated accuracy of the surrogate target, when one was used.
    pub surrogate_error: Option<f64>,
    pub half_width: Option<f64>,
}

struct ErrorObserver {
    reference: Arc<dyn ReferenceSolution>,
    nodes: Vec<usize>,
    points: Vec<Vec<f64>>,
    sup: f64,
    series: Vec<(f64, f64)>,
}

impl ErrorObserver {
    fn new(problem: &Problem, reference: Arc<dyn ReferenceSolution>) -> Self {
        let nodes = problem.grid().interior_nodes();
        let points = nodes.iter().map(|&n| problem.grid().point(n)).collect();
        Self {
            reference,
            nodes,
            points,
            sup: 0.0,
            series: Vec::new(),
        }
    }
}

impl Observer for ErrorObserver {
    fn observe(&mut self, t: f64, u: &[f64], ctx: &StepContext<'_>) {
        if !ctx.at_stop {
            return;
        }
        let err = self
            .nodes
            .iter()
            .zip(&self.points)
            .map(|(&n, p)| (u[n] - self.reference.value(p, t)).abs())
            .fold(0.0, f64::max);
        self.sup = self.sup.max(err);
        self.series.push((t, err));
    }
}

fn convergence(cfg: &ExperimentConfig, cauchy: bool) -> Result<ConvergenceRun> {
    let base = cfg.kernel_spec(Profile::Uniform)?;
    let dim = cfg.dim();
    let mu = mu_of(cfg, 1.0);
    let amplitude = cfg.reference.amplitude.unwrap_or(0.5);
    let variance = cfg.reference.variance.unwrap_or(1.0);
    let horizon = cfg.time.horizon.unwrap_or(0.25);
    let samples = cfg.time.samples.unwrap_or(25);
    let epsilons = cfg
        .sweep
        .epsilons
        .clone()
        .unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]);
    if epsilons.is_empty() {
        return Err(Error::Config("empty epsilon sweep".into()));
    }
    let points = cfg.points_per_radius()?;
    let integrator = cfg.integrator()?;
    let tol = cfg.geometry.contamination_tol.unwrap_or(1e-6);
    let eps_max = epsilons.iter().copied().fold(0.0, f64::max);
    let radius_max = base.support_radius() * eps_max;

    let half_width =
        if cauchy {
            let extent = if amplitude == 0.0 {
                0.0
            } else {
                (2.0 * variance * 1e9f64.ln()).sqrt()
            };
            Some(cfg.geometry.half_width.unwrap_or_else(|| {
                CauchyProblem::default_half_width(extent, horizon, 1.0, radius_max)
            }))
        } else {
            None
        };

    let mut surrogate_error = None;
    let reference: Arc<dyn ReferenceSolution> = match mu_profile(cfg, mu) {
        None => {
            if mu == 0.0 {
                return Err(Error::Config(
                    "convergence runs need a nonzero mu for the exact target".into(),
                ));
            }
            Arc::new(HopfCole::new(mu, amplitude, variance, dim)?)
        }
        Some(profile) => {
            if dim != 1 {
                return Err(Error::Config(
                    "variable-mu targets are one-dimensional".into(),
                ));
            }
            let reach = match half_width {
                Some(l) => l,
                None => cfg
                    .bounds()?
                    .iter()
                    .map(|b| b.0.abs().max(b.1.abs()))
                    .fold(0.0, f64::max),
            } + radius_max;
            let l = (reach + 3.0).ceil();
            let cells = cfg.reference.surrogate_cells.unwrap_or(100 * l as usize);
            let bar = mu;
            let spec = SurrogateSpec {
                mu: profile,
                initial: Arc::new(move |x| {
                    (1.0 + amplitude * (-x[0] * x[0] / (2.0 * variance)).exp()).ln() / bar
                }),
                half_width: l,
                cells,
                horizon,
                snapshot_dt: horizon / 200.0,
            };
            let s = FdSurrogate::solve(&spec)?;
            surrogate_error = Some(s.error_estimate());
            Arc::new(s)
        }
    };
    let nl = nonlinearity_spec(cfg, mu)?;
    let stops = uniform_stops(horizon, samples);

    let results: Vec<Result<ConvergenceRecord>> = epsilons
        .par_iter()
        .map(|&eps| {
            let radius = base.support_radius() * eps;
            let h = spacing_for(radius, points);
            let mut kernel = KernelChoice::rescaled(base, eps);
            if let Some(mode) = cfg.kernel.renormalization {
                kernel.mode = mode;
            }
            let (initial, boundary) = dirichlet_data_from(reference.clone());
            let problem = match half_width {
                Some(l) => CauchyProblem {
                    dim,
                    half_width: l,
                    spacing: h,
                    kernel,
                    nonlinearity: nl.clone(),
                    initial,
                    horizon,
                    contamination_tol: tol,
                }
                .build()?,
                None => DirichletProblem {
                    bounds: cfg.bounds()?,
                    spacing: h,
                    kernel,
                    nonlinearity: nl.clone(),
                    initial,
                    boundary,
                    horizon,
                }
                .build()?,
            };
            let mut obs = ErrorObserver::new(&problem, reference.clone());
            let out = evolve(&problem, &integrator, &stops, &mut [&mut obs])?;
            Ok(ConvergenceRecord {
                epsilon: eps,
                spacing: h,
                nodes: problem.grid().interior_count(),
                steps: out.steps,
                dt: out.dt,
                sup_error: obs.sup,
                series: obs.series,
                valid: out.valid(),
                max_ring_level: out.max_ring_level,
            })
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r?);
    }
    let mut eps_kept = Vec::new();
    let mut errs = Vec::new();
    let mut excluded = Vec::new();
    for r in &records {
        if r.valid {
            eps_kept.push(r.epsilon);
            errs.push(r.sup_error);
        } else {
            excluded.push((
                r.epsilon,
                format!(
                    "boundary contamination {:e} above {tol:e}",
                    r.max_ring_level
                ),
            ));
        }
    }
    let report = ConvergenceReport::new(
        eps_kept,
        errs,
        cfg.tolerances.min_order.unwrap_or(0.9),
        excluded,
    )?;
    Ok(ConvergenceRun {
        report,
        records,
        surrogate_error,
        half_width,
    })
}

pub fn exp_convergence_dirichlet(cfg: &ExperimentConfig) -> Result<ConvergenceRun> {
    convergence(cfg, false)
}

pub fn exp_convergence_cauchy(cfg: &ExperimentConfig) -> Result<ConvergenceRun> {
    convergence(cfg, true)
}

impl ConvergenceRun {
    /// The surrogate must be ten times more accurate than the best run.
    pub fn surrogate_adequate(&self) -> bool {
        match self.surrogate_error {
            Some(e) => {
                let best = self
                    .report
                    .errors
                    .iter()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                10.0 * e <= best
            }
            None => true,
        }
    }

    pub fn passed(&self) -> bool {
        self.report.passed() && self.surrogate_adequate()
    }

    pub fn runs_csv(&self) -> String {
        let mut out =
            String::from("epsilon,h,nodes,steps,dt,sup_linf_error,valid,max_ring_level\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:e},{:e},{},{},{:e},{:e},{},{:e}",
                r.epsilon,
                r.spacing,
                r.nodes,
                r.steps,
                r.dt,
                r.sup_error,
                r.valid,
                r.max_ring_level
            );
        }
        out
    }

    pub fn series_csv(&self) -> String {
        let mut out = String::from("epsilon,t,linf_error\n");
        for r in &self.records {
            for (t, e) in &r.series {
                let _ = writeln!(out, "{:e},{t:e},{e:e}", r.epsilon);
            }
        }
        out
    }
}

/// Sum of Gaussians `Σ c_k exp(-(x - x_k)²/(2 s_k²))` (first coordinate
/// and, in 2D, the second).
#[derive(Debug, Clone)]
struct GaussSum(Vec<(f64, [f64; 2], f64)>);

impl GaussSum {
    fn random(rng: &mut ChaCha8Rng, terms: usize, signed: bool) -> Self {
        GaussSum(
            (0..terms)
                .map(|_| {
                    let c = if signed {
                        rng.gen_range(-1.0..1.0)
                    } else {
                        rng.gen_range(0.1..1.0)
                    };
                    let centre = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                    (c, centre, rng.gen_range(0.15..0.5))
                })
                .collect(),
        )
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|(c, m, s)| {
                let r2: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                c * (-r2 / (2.0 * s * s)).exp()
            })
            .sum()
    }

    fn sampler(self) -> Sampler {
        Arc::new(move |x| self.eval(x))
    }
}

fn unscaled_setup(cfg: &ExperimentConfig) -> Result<(KernelSpec, f64)> {
    let base = cfg.kernel_spec(Profile::Uniform)?;
    let h = spacing_for(base.support_radius(), cfg.points_per_radius()?);
    Ok((base, h))
}

/// Comparison-principle runs and the monotone Euler update check.
#[derive(Debug, Clone)]
pub struct ComparisonRun {
    pub report: PropertyReport,
    pub parts: Vec<PropertyReport>,
    /// `(pair, setting, mu, min gap, allowed floor)`.
    pub pairs: Vec<(usize, &'static str, f64, f64, f64)>,
}

impl ComparisonRun {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }

    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("pair,setting,mu,min_gap,floor\n");
        for (i, s, mu, g, f) in &self.pairs {
            let _ = writeln!(out, "{i},{s},{mu:e},{g:e},{f:e}");
        }
        out
    }
}

pub fn exp_comparison(cfg: &ExperimentConfig) -> Result<ComparisonRun> {
    let (base, h) = unscaled_setup(cfg)?;
    let dim = cfg.dim();
    let horizon = cfg.time.horizon.unwrap_or(2.0);
    let pairs = cfg.suite.pairs.unwrap_or(20);
    let tol = cfg.tolerances.comparison.unwrap_or(1e-8);
    let integrator = cfg.integrator()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let diffusivity = 0.5 * base.second_moment();
    let half_width = cfg.geometry.half_width.unwrap_or_else(|| {
        CauchyProblem::default_half_width(4.0, horizon, diffusivity, base.support_radius())
    });

    let mut gap_report = PropertyReport::new("ordered-pairs");
    let mut rows = Vec::new();
    for i in 0..pairs {
        let mu = rng.gen_range(-2.0..2.0);
        let u0 = GaussSum::random(&mut rng, 3, true);
        let bump = GaussSum::random(&mut rng, 1, false);
        let lift = if i % 4 == 0 {
            0.0
        } else {
            rng.gen_range(0.0..0.3)
        };
        let sup0 = {
            let probe = u0.clone();
            (0..=400)
                .map(|k| probe.eval(&[-2.0 + 0.01 * k as f64, 0.0][..dim]).abs())
                .fold(0.0, f64::max)
        };
        let floor = -tol * sup0.max(1.0);
        let v0 = {
            let (a, b) = (u0.clone(), bump.clone());
            Arc::new(move |x: &[f64]| a.eval(x) + b.eval(x) + lift) as Sampler
        };
        let nl: NonlinearitySpec = Nonlinearity::kpz_constant(mu)?.into();
        let cauchy = i % 2 == 1;
        let (sub, sup) = if cauchy {
            let mk = |init: Sampler| {
                CauchyProblem {
                    dim,
                    half_width,
                    spacing: h,
                    kernel: KernelChoice::unscaled(base),
                    nonlinearity: nl.clone(),
                    initial: init,
                    horizon,
                    contamination_tol: f64::INFINITY,
                }
                .build()
            };
            (mk(u0.clone().sampler())?, mk(v0)?)
        } else {
            let amp = rng.gen_range(-0.5..0.5);
            let freq = rng.gen_range(0.5..3.0);
            let h1: BoundaryData = Arc::new(move |x: &[f64], t: f64| amp * (freq * t + x[0]).sin());
            let h2: BoundaryData =
                Arc::new(move |x: &[f64], t: f64| amp * (freq * t + x[0]).sin() + lift);
            let mk = |init: Sampler, b: BoundaryData| {
                DirichletProblem {
                    bounds: cfg.bounds()?,
                    spacing: h,
                    kernel: KernelChoice::unscaled(base),
                    nonlinearity: nl.clone(),
                    initial: init,
                    boundary: b,
                    horizon,
                }
                .build()
            };
            (mk(u0.clone().sampler(), h1)?, mk(v0, h2)?)
        };
        let out = evolve_comparison_pair(&sub, &sup, &integrator)?;
        gap_report.record(out.min_gap);
        if out.min_gap < floor {
            gap_report.violation(floor - out.min_gap);
        }
        rows.push((
            i,
            if cauchy { "cauchy" } else { "dirichlet" },
            mu,
            out.min_gap,
            floor,
        ));
    }

    // constants c₁ < c₂ stay exactly c₂ - c₁ apart
    let mut constants = PropertyReport::new("ordered-constants");
    for (c1, c2) in [(0.25, 1.0), (-1.5, 0.5)] {
        let mk = |c: f64| {
            DirichletProblem {
                bounds: cfg.bounds()?,
                spacing: h,
                kernel: KernelChoice::unscaled(base),
                nonlinearity: Nonlinearity::kpz_constant(1.0)?.into(),
                initial: Arc::new(move |_| c),
                boundary: Arc::new(move |_, _| c),
                horizon,
            }
            .build()
        };
        let out = evolve_comparison_pair(&mk(c1)?, &mk(c2)?, &integrator)?;
        for (_, g) in &out.series {
            constants.record(*g);
            if *g != c2 - c1 {
                constants.violation((g - (c2 - c1)).abs());
            }
        }
    }

    let euler = euler_monotonicity(cfg, &base, h, &mut rng)?;
    let mut report = PropertyReport::new("comparison");
    for part in [&gap_report, &constants, &euler] {
        report.absorb(part);
    }
    Ok(ComparisonRun {
        report,
        parts: vec![gap_report, constants, euler],
        pairs: rows,
    })
}

/// One explicit Euler step at the stability limit preserves the order of
/// randomly drawn ordered states and collar data.
fn euler_monotonicity(
    cfg: &ExperimentConfig,
    base: &KernelSpec,
    h: f64,
    rng: &mut ChaCha8Rng,
) -> Result<PropertyReport> {
    let mut report = PropertyReport::new("euler-monotone-update");
    let trials = cfg.suite.trials.unwrap_or(200);
    for _ in 0..trials {
        let mu = rng.gen_range(-3.0..3.0);
        let p = DirichletProblem {
            bounds: cfg.bounds()?,
            spacing: h,
            kernel: KernelChoice::unscaled(*base),
            nonlinearity: Nonlinearity::kpz_constant(mu)?.into(),
            initial: Arc::new(|_| 0.0),
            boundary: Arc::new(|_, _| 0.0),
            horizon: 1.0,
        }
        .build()?;
        let dt = stable_dt(&p, &IntegratorConfig::default());
        let op = p.operator();
        let n = p.grid().len();
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = u
            .iter()
            .map(|x| {
                x + if rng.gen::<f64>() < 0.3 {
                    0.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        let (fu, fv) = (op.apply(&u)?, op.apply(&v)?);
        for node in p.grid().interior_nodes() {
            let gap = (v[node] + dt * fv[node]) - (u[node] + dt * fu[node]);
            report.record(gap);
            if gap < -1e-14 {
                report.violation(-gap);
            }
        }
    }
    Ok(report)
}

struct BoundsObserver {
    lo: f64,
    hi: f64,
    tol: f64,
    report: PropertyReport,
}

impl Observer for BoundsObserver {
    fn observe(&mut self, _t: f64, u: &[f64], ctx: &StepContext<'_>) {
        for n in ctx.problem.grid().interior_nodes() {
            let v = u[n];
            self.report.record(v);
            let excess = (self.lo - self.tol - v).max(v - self.hi - self.tol);
            if excess > 0.0 {
                self.report.violation(excess);
            }
        }
    }
}

/// Zero exterior data and nonnegative data keep `0 ≤ u ≤ ‖u0‖∞`.
pub fn exp_maximum_principle(cfg: &ExperimentConfig) -> Result<PropertyReport> {
    let (base, h) = unscaled_setup(cfg)?;
    let runs = cfg.suite.runs.unwrap_or(8);
    let horizon = cfg.time.horizon.unwrap_or(5.0);
    let tol = cfg.tolerances.bounds.unwrap_or(1e-10);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let mut report = PropertyReport::new("maximum-principle");
    for i in 0..runs {
        let mu = if i % 2 == 0 { -1.0 } else { 1.0 } * rng.gen_range(0.5..2.0);
        let method = if (i / 2) % 2 == 0 {
            Method::Rk4
        } else {
            Method::Euler
        };
        let u0 = GaussSum::random(&mut rng, 3, false);
        let p = DirichletProblem {
            bounds: cfg.bounds()?,
            spacing: h,
            kernel: KernelChoice::unscaled(base),
            nonlinearity: Nonlinearity::kpz_constant(mu)?.into(),
            initial: u0.sampler(),
            boundary: Arc::new(|_, _| 0.0),
            horizon,
        }
        .build()?;
        let sup0 = lq_norm(p.grid(), &p.initial_field().values, f64::INFINITY);
        let mut obs = BoundsObserver {
            lo: 0.0,
            hi: sup0,
            tol,
            report: PropertyReport::new(format!("run-{i}")),
        };
        evolve(
            &p,
            &cfg.integrator()?.with_method(method),
            &[],
            &mut [&mut obs],
        )?;
        report.absorb(&obs.report);
    }
    Ok(report)
}

/// `(run, t, observable, value)` rows.
type NormRows = Vec<(usize, f64, &'static str, f64)>;

fn norm_rows_csv(rows: &NormRows, mus: &[f64]) -> String {
    let mut out = String::from("run,mu,t,observable,value\n");
    for (run, t, name, v) in rows {
        let _ = writeln!(out, "{run},{:e},{t:e},{name},{v:e}", mus[*run]);
    }
    out
}

/// One bounded-domain decay run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedDecayRecord {
    pub mu: f64,
    pub horizon: f64,
    pub lambda1: f64,
    pub initial_sup: f64,
    pub final_sup: f64,
    pub threshold_met: bool,
    /// Checked only for absorption orientation.
    pub l2_bound_checked: bool,
    pub l2_bound_violations: usize,
    /// Smallest `bound / ‖u‖₂` over the run.
    pub l2_bound_margin: f64,
}

impl BoundedDecayRecord {
    pub fn passed(&self) -> bool {
        self.threshold_met && self.l2_bound_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct BoundedDecayRun {
    pub records: Vec<BoundedDecayRecord>,
    pub ratio: f64,
    pub slack: f64,
    norms: NormRows,
}

impl BoundedDecayRun {
    pub fn passed(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.passed())
    }

    pub fn norms_csv(&self) -> String {
        let mus: Vec<f64> = self.records.iter().map(|r| r.mu).collect();
        norm_rows_csv(&self.norms, &mus)
    }
}

struct BoundedObserver {
    run: usize,
    l2_0: f64,
    rate: Option<f64>,
    violations: usize,
    margin: f64,
    last_sup: f64,
    rows: NormRows,
}

impl Observer for BoundedObserver {
    fn observe(&mut self, t: f64, u: &[f64], ctx: &StepContext<'_>) {
        let grid = ctx.problem.grid();
        let l2 = lq_norm(grid, u, 2.0);
        self.last_sup = lq_norm(grid, u, f64::INFINITY);
        if let Some(rate) = self.rate {
            let bound = self.l2_0 * (-rate * t).exp();
            if l2 > bound * (1.0 + 1e-12) {
                self.violations += 1;
            }
            if l2 > 0.0 {
                self.margin = self.margin.min(bound / l2);
            }
        }
        if ctx.at_stop {
            self.rows.push((self.run, t, "l2", l2));
            self.rows.push((self.run, t, "linf", self.last_sup));
        }
    }
}

fn per_run<T: Copy>(values: &[T], run: usize) -> T {
    values[run.min(values.len() - 1)]
}

pub fn exp_decay_bounded(cfg: &ExperimentConfig) -> Result<BoundedDecayRun> {
    let (base, h) = unscaled_setup(cfg)?;
    let bounds = cfg.bounds()?;
    let mus = cfg
        .decay
        .mu_values
        .clone()
        .unwrap_or_else(|| vec![-1.0, 1.0]);
    let horizons = cfg
        .decay
        .horizons
        .clone()
        .unwrap_or_else(|| vec![50.0, 100.0]);
    if mus.is_empty() || horizons.is_empty() {
        return Err(Error::Config(
            "decay runs need mu_values and horizons".into(),
        ));
    }
    let ratio = cfg.tolerances.decay_ratio.unwrap_or(1e-3);
    let slack = cfg.tolerances.decay_slack.unwrap_or(0.1);
    let amplitude = cfg.decay.initial_amplitude.unwrap_or(1.0);
    if amplitude < 0.0 {
        return Err(Error::Config("bounded decay needs nonnegative data".into()));
    }
    let samples = cfg.time.samples.unwrap_or(100);
    let integrator = cfg.integrator()?;
    let identity = cfg.nonlinearity.kind == Some(NonlinearityKindConfig::Identity);

    let b = bounds.clone();
    let initial: Sampler = Arc::new(move |x: &[f64]| {
        amplitude
            * x.iter()
                .zip(&b)
                .map(|(c, (lo, hi))| (std::f64::consts::PI * (c - lo) / (hi - lo)).sin().max(0.0))
                .product::<f64>()
    });
    let mut records = Vec::new();
    let mut norms = Vec::new();
    for (run, &mu) in mus.iter().enumerate() {
        let horizon = per_run(&horizons, run);
        let nl = if identity {
            Nonlinearity::identity()
        } else {
            Nonlinearity::kpz_constant(mu)?
        };
        let orientation = nl.orientation();
        let p = DirichletProblem {
            bounds: bounds.clone(),
            spacing: h,
            kernel: KernelChoice::unscaled(base),
            nonlinearity: nl.into(),
            initial: initial.clone(),
            boundary: Arc::new(|_, _| 0.0),
            horizon,
        }
        .build()?;
        let form = assemble_dirichlet_form(p.grid(), p.kernel())?;
        let lam = lambda1(&form)?.value;
        let u0 = p.initial_field().values;
        let sup0 = lq_norm(p.grid(), &u0, f64::INFINITY);
        let check_l2 = matches!(orientation, Orientation::Absorption | Orientation::Neutral);
        let mut obs = BoundedObserver {
            run,
            l2_0: lq_norm(p.grid(), &u0, 2.0),
            rate: check_l2.then_some(lam * (1.0 - slack)),
            violations: 0,
            margin: f64::INFINITY,
            last_sup: sup0,
            rows: Vec::new(),
        };
        evolve(
            &p,
            &integrator,
            &uniform_stops(horizon, samples),
            &mut [&mut obs],
        )?;
        records.push(BoundedDecayRecord {
            mu,
            horizon,
            lambda1: lam,
            initial_sup: sup0,
            final_sup: obs.last_sup,
            threshold_met: obs.last_sup <= ratio * sup0,
            l2_bound_checked: check_l2,
            l2_bound_violations: obs.violations,
            l2_bound_margin: obs.margin,
        });
        norms.extend(obs.rows);
    }
    Ok(BoundedDecayRun {
        records,
        ratio,
        slack,
        norms,
    })
}

/// One whole-line decay run.
#[derive(Debug, Clone)]
pub struct CauchyDecayRecord {
    pub mu: f64,
    pub theta: f64,
    pub orientation: Orientation,
    pub reports: Vec<DecayReport>,
    /// Steps where the L¹ norm moved against the orientation by more than
    /// the per-step tolerance.
    pub l1_violations: usize,
    pub l1_worst: f64,
    pub energy_violations: usize,
    pub energy_samples: usize,
    pub valid: bool,
    pub max_ring_level: f64,
}

impl CauchyDecayRecord {
    pub fn passed(&self) -> bool {
        self.valid
            && self.l1_violations == 0
            && self.energy_violations == 0
            && self.reports.iter().all(|r| r.passed())
    }

    pub fn report(&self, observable: &str) -> Option<&DecayReport> {
        self.reports.iter().find(|r| r.observable == observable)
    }
}

#[derive(Debug, Clone)]
pub struct CauchyDecayRun {
    pub records: Vec<CauchyDecayRecord>,
    pub half_width: f64,
    norms: NormRows,
}

impl CauchyDecayRun {
    pub fn passed(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.passed())
    }

    pub fn norms_csv(&self) -> String {
        let mus: Vec<f64> = self.records.iter().map(|r| r.mu).collect();
        norm_rows_csv(&self.norms, &mus)
    }

    pub fn fits_csv(&self) -> String {
        let mut out = String::from(
            "run,mu,observable,exponent,intercept,residual,samples,window_lo,window_hi,pass\n",
        );
        for (i, r) in self.records.iter().enumerate() {
            for d in &r.reports {
                let _ = writeln!(
                    out,
                    "{i},{:e},{},{:e},{:e},{:e},{},{:e},{:e},{}",
                    r.mu,
                    d.observable,
                    d.fit.exponent,
                    d.fit.intercept,
                    d.fit.residual,
                    d.fit.samples,
                    d.window.0,
                    d.window.1,
                    d.passed()
                );
            }
        }
        out
    }
}

struct CauchyObserver {
    run: usize,
    /// +1: L¹ may only grow, -1: may only shrink.
    direction: f64,
    step_tol: f64,
    last_l1: Option<f64>,
    l1_violations: usize,
    l1_worst: f64,
    theta: f64,
    energy_violations: usize,
    energy_samples: usize,
    samples: Vec<(f64, [f64; 4])>,
    rows: NormRows,
}

impl Observer for CauchyObserver {
    fn observe(&mut self, t: f64, u: &[f64], ctx: &StepContext<'_>) {
        let grid = ctx.problem.grid();
        let l1 = lq_norm(grid, u, 1.0);
        if let Some(prev) = self.last_l1 {
            let against = self.direction * (prev - l1);
            if against > self.step_tol {
                self.l1_violations += 1;
                self.l1_worst = self.l1_worst.max(against);
            }
        }
        self.last_l1 = Some(l1);
        if !ctx.at_stop || t == 0.0 {
            return;
        }
        let l2 = lq_norm(grid, u, 2.0);
        let l4 = lq_norm(grid, u, 4.0);
        let linf = lq_norm(grid, u, f64::INFINITY);
        self.samples.push((t, [l1, l2, l4, linf]));
        for (name, v) in [("l1", l1), ("l2", l2), ("l4", l4), ("linf", linf)] {
            self.rows.push((self.run, t, name, v));
        }
        // d/dt ‖u‖₂² = 2 h^N Σ u·F(u) against -(1 - θ)·energy
        if let Ok(rhs) = ctx.problem.operator().apply(u) {
            let nodes = grid.interior_nodes();
            let rate = 2.0
                * grid.cell_volume()
                * crate::sum::pairwise_sum_by(nodes.len(), |i| u[nodes[i]] * rhs[nodes[i]]);
            let energy = double_energy(grid, u, ctx.problem.kernel());
            let bound = -(1.0 - self.theta) * energy;
            self.energy_samples += 1;
            if rate > bound + 1e-12 * energy.max(rate.abs()) {
                self.energy_violations += 1;
            }
            self.rows.push((self.run, t, "energy_rate", rate));
            self.rows.push((self.run, t, "energy_bound", bound));
        }
    }
}

pub fn exp_decay_cauchy(cfg: &ExperimentConfig) -> Result<CauchyDecayRun> {
    let (base, h) = unscaled_setup(cfg)?;
    let dim = cfg.dim();
    let n = dim as f64;
    let mus = cfg
        .decay
        .mu_values
        .clone()
        .unwrap_or_else(|| vec![-0.5, 0.5]);
    let horizons = cfg.decay.horizons.clone().unwrap_or_else(|| vec![1000.0]);
    if mus.is_empty() || horizons.is_empty() {
        return Err(Error::Config(
            "decay runs need mu_values and horizons".into(),
        ));
    }
    let amplitude = cfg.decay.initial_amplitude.unwrap_or(1.0);
    let variance = cfg.decay.initial_variance.unwrap_or(1.0);
    if !(amplitude > 0.0) {
        return Err(Error::Config("whole-line decay needs positive data".into()));
    }
    let t_start = cfg.time.t_start.unwrap_or(1.0);
    let per_decade = cfg.time.samples_per_decade.unwrap_or(20);
    let step_tol = cfg.tolerances.monotone_step.unwrap_or(1e-10);
    let band = cfg.tolerances.exponent_band.unwrap_or([-0.35, -0.15]);
    let sq_band = cfg.tolerances.squared_exponent_band.unwrap_or([-0.7, -0.3]);
    let tol = cfg.geometry.contamination_tol.unwrap_or(1e-6);
    let integrator = cfg.integrator()?;
    let horizon_max = horizons.iter().copied().fold(0.0, f64::max);
    let diffusivity = 0.5 * base.second_moment();
    let extent = (2.0 * variance * 1e9f64.ln()).sqrt();
    let half_width = cfg.geometry.half_width.unwrap_or_else(|| {
        CauchyProblem::default_half_width(extent, horizon_max, diffusivity, base.support_radius())
    });
    let initial: Sampler = Arc::new(move |x: &[f64]| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        amplitude * (-r2 / (2.0 * variance)).exp()
    });

    let mut records = Vec::new();
    let mut norms = Vec::new();
    for (run, &mu) in mus.iter().enumerate() {
        let horizon = per_run(&horizons, run);
        let nl = match cfg.nonlinearity.kind {
            Some(NonlinearityKindConfig::Identity) => Nonlinearity::identity(),
            _ => Nonlinearity::kpz_constant(mu)?,
        };
        let orientation = nl.orientation();
        let theta = amplitude * nl.mu_sup_norm();
        let reaction = orientation == Orientation::Reaction;
        if reaction && theta >= 1.0 {
            return Err(Error::Config(format!(
                "reaction run needs ||u0||_inf * ||mu||_inf < 1, got {theta}"
            )));
        }
        let p = CauchyProblem {
            dim,
            half_width,
            spacing: h,
            kernel: KernelChoice::unscaled(base),
            nonlinearity: nl.into(),
            initial: initial.clone(),
            horizon,
            contamination_tol: tol,
        }
        .build()?;
        let stops = geometric_times(t_start, horizon, per_decade);
        let mut obs = CauchyObserver {
            run,
            direction: if reaction { 1.0 } else { -1.0 },
            step_tol: step_tol * lq_norm(p.grid(), &p.initial_field().values, 1.0).max(1.0),
            last_l1: None,
            l1_violations: 0,
            l1_worst: 0.0,
            theta: if reaction { theta } else { 0.0 },
            energy_violations: 0,
            energy_samples: 0,
            samples: Vec::new(),
            rows: Vec::new(),
        };
        let out = evolve(&p, &integrator, &stops, &mut [&mut obs])?;
        let window = cfg
            .time
            .fit_window
            .map(|w| (w[0], w[1]))
            .unwrap_or((horizon / 10.0, horizon));
        let times: Vec<f64> = obs.samples.iter().map(|s| s.0).collect();
        let series = |k: usize| obs.samples.iter().map(|s| s.1[k]).collect::<Vec<f64>>();
        let target = |q: f64| -0.5 * n * (1.0 - 1.0 / q);
        let mut reports = Vec::new();
        if reaction {
            let sq: Vec<f64> = series(1).iter().map(|v| v * v).collect();
            reports.push(DecayReport::new(
                "l2_squared",
                times.clone(),
                sq,
                Some(window),
                Some((sq_band[0], sq_band[1])),
            )?);
            for (k, name, q) in [(0, "l1", 1.0), (1, "l2", 2.0), (2, "l4", 4.0)] {
                let _ = q;
                reports.push(DecayReport::new(
                    name,
                    times.clone(),
                    series(k),
                    Some(window),
                    None,
                )?);
            }
        } else {
            for (k, name, q) in [(0, "l1", 1.0), (1, "l2", 2.0), (2, "l4", 4.0)] {
                let b = if q == 2.0 {
                    (band[0], band[1])
                } else {
                    (target(q) - 0.1, target(q) + 0.1)
                };
                reports.push(DecayReport::new(
                    name,
                    times.clone(),
                    series(k),
                    Some(window),
                    Some(b),
                )?);
            }
        }
        reports.push(DecayReport::new(
            "linf",
            times.clone(),
            series(3),
            Some(window),
            None,
        )?);
        records.push(CauchyDecayRecord {
            mu,
            theta,
            orientation,
            reports,
            l1_violations: obs.l1_violations,
            l1_worst: obs.l1_worst,
            energy_violations: obs.energy_violations,
            energy_samples: obs.energy_samples,
            valid: out.valid(),
            max_ring_level: out.max_ring_level,
        });
        norms.extend(obs.rows);
    }
    Ok(CauchyDecayRun {
        records,
        half_width,
        norms,
    })
}

/// Picard construction checked against RK4.
#[derive(Debug, Clone)]
pub struct PicardRun {
    pub sweeps: usize,
    pub factors: Vec<f64>,
    pub increments: Vec<f64>,
    pub predicted_factor: f64,
    pub lipschitz: f64,
    pub weight: f64,
    pub tolerance: f64,
    /// Richardson estimate of the trapezoidal time error.
    pub time_error: f64,
    /// `(t, max |picard - rk4|)`.
    pub gaps: Vec<(f64, f64)>,
    pub nodes: usize,
}

impl PicardRun {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().map(|g| g.1).fold(0.0, f64::max)
    }

    pub fn allowed_gap(&self) -> f64 {
        10.0 * (self.tolerance + self.time_error)
    }

    pub fn contraction_ok(&self) -> bool {
        self.factors
            .iter()
            .all(|&f| f < 1.0 && f <= self.predicted_factor * (1.0 + 1e-9))
    }

    pub fn passed(&self) -> bool {
        self.contraction_ok() && self.max_gap() <= self.allowed_gap()
    }

    pub fn sweeps_csv(&self) -> String {
        let mut out = String::from("sweep,increment,factor,predicted\n");
        for (i, inc) in self.increments.iter().enumerate() {
            let f = if i == 0 {
                f64::NAN
            } else {
                self.factors[i - 1]
            };
            let _ = writeln!(out, "{},{inc:e},{f:e},{:e}", i + 1, self.predicted_factor);
        }
        out
    }

    pub fn gaps_csv(&self) -> String {
        let mut out = String::from("t,max_gap\n");
        for (t, g) in &self.gaps {
            let _ = writeln!(out, "{t:e},{g:e}");
        }
        out
    }
}

pub fn exp_picard_crosscheck(cfg: &ExperimentConfig) -> Result<PicardRun> {
    let radius = cfg.kernel.radius.unwrap_or(0.5);
    let base = crate::kernel::make_kernel(
        cfg.kernel.profile.unwrap_or(Profile::Uniform),
        cfg.dim(),
        radius,
    )?;
    let bounds = cfg.bounds()?;
    let width = bounds[0].1 - bounds[0].0;
    // 32 interior nodes along the first axis by default
    let cells = cfg.geometry.cells.unwrap_or(31) as f64;
    let h = width / cells;
    let mu = mu_of(cfg, 1.0);
    let horizon = cfg.time.horizon.unwrap_or(1.0);
    let mut integ = cfg.integrator()?;
    if integ.picard.dt.is_none() {
        integ.picard.dt = Some(horizon / 64.0);
    }
    let centre: Vec<f64> = bounds.iter().map(|b| 0.5 * (b.0 + b.1)).collect();
    let half = 0.5 * width;
    let p = DirichletProblem {
        bounds: bounds.clone(),
        spacing: h,
        kernel: KernelChoice::unscaled(base),
        nonlinearity: nonlinearity_spec(cfg, mu)?,
        initial: Arc::new(move |x: &[f64]| {
            let r = ((x[0] - centre[0]) / half).abs();
            (std::f64::consts::FRAC_PI_2 * r).cos().powi(2)
        }),
        boundary: Arc::new(|x: &[f64], t: f64| 0.2 * x[0] * (-t).exp()),
        horizon,
    }
    .build()?;
    let coarse = picard_solve(&p, &integ)?;
    let mut fine_cfg = integ;
    fine_cfg.picard.dt = Some(coarse.dt / 2.0);
    let fine = picard_solve(&p, &fine_cfg)?;
    let nodes = p.grid().interior_nodes();
    let mut time_error = 0.0f64;
    for (i, u) in coarse.trajectory.iter().enumerate() {
        let v = &fine.trajectory[2 * i];
        for &n in &nodes {
            time_error = time_error.max((u[n] - v[n]).abs() * 4.0 / 3.0);
        }
    }
    let rk_dt = stable_dt(&p, &integ).min(coarse.dt / 8.0);
    let mut rec = SnapshotRecorder::default();
    evolve(
        &p,
        &integ.with_method(Method::Rk4).with_dt(rk_dt),
        &coarse.times,
        &mut [&mut rec],
    )?;
    if rec.snapshots.len() != coarse.times.len() {
        return Err(Error::Mismatch(
            "RK4 snapshots do not match the Picard grid".into(),
        ));
    }
    let gaps = coarse
        .trajectory
        .iter()
        .zip(&rec.snapshots)
        .map(|(u, s)| {
            let g = nodes
                .iter()
                .map(|&n| (u[n] - s.values[n]).abs())
                .fold(0.0, f64::max);
            (s.time, g)
        })
        .collect();
    Ok(PicardRun {
        sweeps: coarse.sweeps,
        factors: coarse.contraction_factors,
        increments: coarse.increments,
        predicted_factor: coarse.predicted_factor,
        lipschitz: coarse.lipschitz,
        weight: coarse.weight,
        tolerance: integ.picard.tolerance,
        time_error,
        gaps,
        nodes: nodes.len(),
    })
}

/// Sampled inequality checks bundled into one report.
#[derive(Debug, Clone)]
pub struct PropertySuite {
    pub report: PropertyReport,
    pub parts: Vec<PropertyReport>,
}

impl PropertySuite {
    pub fn passed(&self) -> bool {
        self.report.passed() && self.parts.iter().all(|p| p.passed())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,samples,violations,min,max,worst_excess,pass\n");
        for p in &self.parts {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e},{:e},{}",
                p.name,
                p.samples,
                p.violations,
                p.min,
                p.max,
                p.worst_excess,
                p.passed()
            );
        }
        out
    }
}

pub fn exp_property_suite(cfg: &ExperimentConfig) -> Result<PropertySuite> {
    let seed = cfg.seed();
    let class_samples = cfg.suite.class_samples.unwrap_or(100_000);
    let mut parts = Vec::new();

    let mut class = PropertyReport::new("nonlinearity-class");
    let candidates: Vec<Nonlinearity> = match cfg.nonlinearity.declared_alpha2 {
        Some(a2) => {
            let g = Nonlinearity::kpz_constant(mu_of(cfg, 1.0))?;
            let a1 = g.alpha1();
            vec![g.with_declared_bounds(a1, a2)]
        }
        None => {
            let mut v = vec![Nonlinearity::identity()];
            for mu in [-4.0, -1.0, -0.25, 0.25, 1.0, 4.0] {
                v.push(Nonlinearity::kpz_constant(mu)?);
            }
            v
        }
    };
    let per = class_samples.div_ceil(candidates.len());
    for (i, g) in candidates.iter().enumerate() {
        class.absorb(&certify_class(g, per, seed.wrapping_add(i as u64)));
    }
    parts.push(class);

    parts.push(check_elementary_inequality(
        cfg.suite.elementary_samples.unwrap_or(100_000),
        seed.wrapping_add(100),
    ));

    let tol = cfg.tolerances.plancherel.unwrap_or(1e-6);
    let mut plancherel = PropertyReport::new("fourier-energy-identity");
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(200));
    let fields = cfg.suite.periodic_fields.unwrap_or(10);
    for i in 0..fields {
        let (profile, dim, shape): (Profile, usize, Vec<usize>) = if i % 2 == 0 {
            (Profile::Uniform, 1, vec![64 + 8 * i])
        } else {
            (Profile::PolynomialBump, 2, vec![16, 20])
        };
        let k = crate::kernel::make_kernel(profile, dim, 1.0)?;
        let dk = discretize(&k, 0.25, Renormalization::Mass)?;
        let total: usize = shape.iter().product();
        let u: Vec<f64> = (0..total).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dj = dj_functional(&u, &shape, &dk)?;
        let de = double_energy_periodic(&u, &shape, &dk)?;
        let rel = (de - 2.0 * dj).abs() / de.abs().max(f64::MIN_POSITIVE);
        plancherel.record(rel);
        if rel > tol {
            plancherel.violation(rel - tol);
        }
    }
    parts.push(plancherel);

    let mut report = PropertyReport::new("property-suite");
    for p in &parts {
        report.absorb(p);
    }
    Ok(PropertySuite { report, parts })
}
