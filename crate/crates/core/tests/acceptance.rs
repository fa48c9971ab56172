//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line
//! straight to stdout so it shows up even when output is captured.

use std::io::Write;
use std::time::{Duration, Instant};

use nonlocal_kpz::harness::{
    exp_comparison, exp_convergence_cauchy, exp_convergence_dirichlet, exp_decay_bounded,
    exp_decay_cauchy, exp_maximum_principle, exp_picard_crosscheck, exp_property_suite,
    exp_quadratic_exactness, run_experiment, ExperimentConfig,
};

fn verdict(n: u32, pass: bool, detail: String) {
    let line = format!(
        "criterion {n}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn sci(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).expect("acceptance config parses")
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

const CONVERGENCE: &str = r#"
seed = 1
[kernel]
profile = "uniform"
radius = 1.0
[nonlinearity]
kind = "kpz"
mu = 1.0
[reference]
amplitude = 0.5
variance = 1.0
[geometry]
lower = [-1.0]
upper = [1.0]
points_per_radius = 8.0
[time]
horizon = 0.25
[sweep]
epsilons = [0.2, 0.1, 0.05, 0.025]
"#;

#[test]
fn criterion_01_quadratic_exactness() {
    let cfg = config("[sweep]\nepsilons = [0.2, 0.1]\n");
    let start = Instant::now();
    let run = exp_quadratic_exactness(&cfg).unwrap();
    let elapsed = start.elapsed();
    let worst = run.rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let pass = run.rows.len() == 2 && worst <= 1e-8 && elapsed < Duration::from_secs(1);
    verdict(
        1,
        pass,
        format!("max |Lu - 2| = {worst:.3e} (tol 1e-8), {elapsed:?}"),
    );
}

#[test]
fn criterion_02_dirichlet_convergence() {
    let cfg = config(CONVERGENCE);
    let start = Instant::now();
    let run = single_threaded(|| exp_convergence_dirichlet(&cfg)).unwrap();
    let elapsed = start.elapsed();
    let r = &run.report;
    let pass = r.epsilons == [0.2, 0.1, 0.05, 0.025]
        && r.excluded.is_empty()
        && r.errors.windows(2).all(|w| w[1] < w[0])
        && r.order >= 0.9
        && elapsed <= Duration::from_secs(120);
    verdict(
        2,
        pass,
        format!(
            "errors [{}], order {:.3} (min 0.9), single-threaded {elapsed:?}",
            sci(&r.errors),
            r.order
        ),
    );
}

#[test]
fn criterion_03_cauchy_convergence() {
    let run = exp_convergence_cauchy(&config(CONVERGENCE)).unwrap();
    let r = &run.report;
    let ring = run
        .records
        .iter()
        .map(|x| x.max_ring_level)
        .fold(0.0, f64::max);
    let pass = r.epsilons.len() == 4
        && r.excluded.is_empty()
        && run.records.iter().all(|x| x.valid)
        && r.errors.windows(2).all(|w| w[1] < w[0])
        && r.order >= 0.9;
    verdict(
        3,
        pass,
        format!(
            "errors [{}], order {:.3}, half-width {:.2}, max ring level {ring:.2e}",
            sci(&r.errors),
            r.order,
            run.half_width.unwrap_or(f64::NAN)
        ),
    );
}

#[test]
fn criterion_04_comparison_principle() {
    let run = exp_comparison(&config(
        "seed = 4\n[suite]\npairs = 20\n[tolerances]\ncomparison = 1e-8\n",
    ))
    .unwrap();
    let worst = run
        .pairs
        .iter()
        .map(|p| p.3 - p.4)
        .fold(f64::INFINITY, f64::min);
    // floor = -1e-8 * max(1, sup|u0|) and the random data satisfy sup|u0| < 3
    let ordered = run
        .pairs
        .iter()
        .all(|p| p.3 >= p.4 && (-3e-8..=-1e-8).contains(&p.4));
    let pass = run.pairs.len() == 20 && ordered && run.passed();
    verdict(
        4,
        pass,
        format!(
            "{} pairs, min(gap - floor) = {worst:.3e}, smallest gap {:.3e}",
            run.pairs.len(),
            run.pairs.iter().map(|p| p.3).fold(f64::INFINITY, f64::min)
        ),
    );
}

#[test]
fn criterion_05_maximum_principle() {
    let r = exp_maximum_principle(&config("seed = 5\n[tolerances]\nbounds = 1e-10\n")).unwrap();
    let pass = r.samples > 0 && r.violations == 0;
    verdict(
        5,
        pass,
        format!(
            "{} nodal samples, range [{:.3e}, {:.3e}], violations {}",
            r.samples, r.min, r.max, r.violations
        ),
    );
}

#[test]
fn criterion_06_bounded_decay() {
    let run = exp_decay_bounded(&config(
        "[decay]\nmu_values = [-1.0, 1.0]\nhorizons = [50.0, 100.0]\n\
         [tolerances]\ndecay_ratio = 1e-3\ndecay_slack = 0.1\n",
    ))
    .unwrap();
    let abs = &run.records[0];
    let rea = &run.records[1];
    let pass = abs.mu == -1.0
        && abs.horizon == 50.0
        && abs.final_sup < 1e-3 * abs.initial_sup
        && abs.l2_bound_checked
        && abs.l2_bound_violations == 0
        && abs.lambda1 > 0.0
        && rea.mu == 1.0
        && rea.horizon == 100.0
        && rea.final_sup < 1e-3 * rea.initial_sup;
    verdict(
        6,
        pass,
        format!(
            "lambda1 {:.5}, ratio(mu=-1, T=50) {:.2e}, L2 bound margin {:.3}, ratio(mu=+1, T=100) {:.2e}",
            abs.lambda1,
            abs.final_sup / abs.initial_sup,
            abs.l2_bound_margin,
            rea.final_sup / rea.initial_sup
        ),
    );
}

#[test]
fn criterion_07_cauchy_decay_absorption() {
    let run = exp_decay_cauchy(&config(
        "[decay]\nmu_values = [-0.5]\nhorizons = [1000.0]\n\
         [time]\nfit_window = [100.0, 1000.0]\nsamples_per_decade = 20\n\
         [tolerances]\nmonotone_step = 1e-10\n",
    ))
    .unwrap();
    let r = &run.records[0];
    let l2 = r.report("l2").unwrap();
    let pass = r.valid
        && l2.window == (100.0, 1000.0)
        && (-0.35..=-0.15).contains(&l2.fit.exponent)
        && r.l1_violations == 0;
    verdict(
        7,
        pass,
        format!(
            "L2 exponent {:.4} in [-0.35, -0.15], L1 increases beyond 1e-10: {}, valid {}",
            l2.fit.exponent, r.l1_violations, r.valid
        ),
    );
}

#[test]
fn criterion_08_cauchy_decay_reaction() {
    let run = exp_decay_cauchy(&config(
        "[decay]\nmu_values = [0.5]\nhorizons = [1000.0]\ninitial_amplitude = 1.0\n\
         [time]\nfit_window = [100.0, 1000.0]\n",
    ))
    .unwrap();
    let r = &run.records[0];
    let sq = r.report("l2_squared").unwrap();
    let pass = r.valid
        && r.theta == 0.5
        && (-0.7..=-0.3).contains(&sq.fit.exponent)
        && r.l1_violations == 0
        && r.energy_samples > 0
        && r.energy_violations == 0;
    verdict(
        8,
        pass,
        format!(
            "||u||_2^2 exponent {:.4} in [-0.7, -0.3], L1 decreases: {}, energy inequality {}/{} violated",
            sq.fit.exponent, r.l1_violations, r.energy_violations, r.energy_samples
        ),
    );
}

#[test]
fn criterion_09_inequality_suites() {
    let suite = exp_property_suite(&config(
        "[suite]\nclass_samples = 100000\nelementary_samples = 100000\nperiodic_fields = 10\n\
         [tolerances]\nplancherel = 1e-6\n",
    ))
    .unwrap();
    let part = |name: &str| suite.parts.iter().find(|p| p.name == name).unwrap();
    let class = part("nonlinearity-class");
    let elem = part("power-difference-inequality");
    let fourier = part("fourier-energy-identity");
    let pass = class.samples >= 100_000
        && class.violations == 0
        && elem.samples == 100_000
        && elem.violations == 0
        && fourier.samples == 10
        && fourier.max <= 1e-6;
    verdict(
        9,
        pass,
        format!(
            "class range [{:.4}, {:.4}] ({} samples), power inequality min slack {:.2e}, Fourier identity max rel err {:.2e}",
            class.min, class.max, class.samples, elem.min, fourier.max
        ),
    );
}

#[test]
fn criterion_10_picard_crosscheck() {
    let run = exp_picard_crosscheck(&ExperimentConfig::default()).unwrap();
    let worst = run.factors.iter().copied().fold(0.0, f64::max);
    let pass = run.nodes == 32
        && !run.factors.is_empty()
        && run
            .factors
            .iter()
            .all(|&f| f < 1.0 && f <= run.predicted_factor)
        && run.max_gap() <= 10.0 * (run.tolerance + run.time_error);
    verdict(
        10,
        pass,
        format!(
            "{} sweeps, worst factor {worst:.4} <= predicted {:.4}, gap {:.3e} <= {:.3e}",
            run.sweeps,
            run.predicted_factor,
            run.max_gap(),
            10.0 * (run.tolerance + run.time_error)
        ),
    );
}

#[test]
fn criterion_11_determinism() {
    let cfg = config(CONVERGENCE);
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment("convergence-dirichlet", &cfg).unwrap())
    };
    let a = in_pool(1);
    let b = in_pool(1);
    let c = in_pool(8);
    let same = |x: &nonlocal_kpz::harness::ExperimentOutcome,
                y: &nonlocal_kpz::harness::ExperimentOutcome| {
        x.tables.len() == y.tables.len()
            && x.tables
                .iter()
                .zip(&y.tables)
                .all(|(p, q)| p.0 == q.0 && p.1.as_bytes() == q.1.as_bytes())
    };
    let pass = !a.tables.is_empty() && same(&a, &b) && same(&a, &c);
    verdict(
        11,
        pass,
        format!(
            "{} CSV tables byte-identical across repeated 1-thread and 8-thread runs",
            a.tables.len()
        ),
    );
}
