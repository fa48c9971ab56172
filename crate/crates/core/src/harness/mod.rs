//! Experiment registry, verdict lines, and CSV output.

pub mod config;
mod experiments;

use std::fmt::Write as _;
use std::path::Path;

pub use config::ExperimentConfig;
pub use experiments::*;

use crate::error::{Error, Result};

/// `(id, summary)` of every runnable experiment.
pub const EXPERIMENTS: &[(&str, &str)] = &[
    (
        "quadratic-exactness",
        "rescaled linear operator applied to x^2 returns 2",
    ),
    (
        "convergence-dirichlet",
        "epsilon sweep on a bounded domain against the Hopf-Cole solution",
    ),
    (
        "convergence-cauchy",
        "epsilon sweep on the truncated line against the Hopf-Cole solution",
    ),
    ("comparison", "randomized ordered data pairs stay ordered"),
    (
        "maximum-principle",
        "zero exterior data keeps 0 <= u <= sup u0",
    ),
    (
        "decay-bounded",
        "decay to zero on a bounded domain, L2 bound from lambda_1",
    ),
    (
        "decay-cauchy",
        "algebraic decay rates of Lq norms on the line",
    ),
    (
        "picard-crosscheck",
        "Picard contraction factors and agreement with RK4",
    ),
    (
        "property-suite",
        "sampled nonlinearity bounds, power inequality, Fourier energy identity",
    ),
];

/// One checked claim of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub check: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn new(check: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            check: check.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Verdicts plus the CSV tables an experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub id: String,
    pub verdicts: Vec<Verdict>,
    /// `(file name, contents)`.
    pub tables: Vec<(String, String)>,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.passed)
    }

    /// `<id> <check> PASS|FAIL <detail>`, one line per verdict.
    pub fn verdict_lines(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                self.id,
                v.check,
                if v.passed { "PASS" } else { "FAIL" },
                v.detail
            );
        }
        out
    }

    pub fn table(&self, name: &str) -> Option<&str> {
        self.tables
            .iter()
            .find(|t| t.0 == name)
            .map(|t| t.1.as_str())
    }

    /// Writes every table and `verdicts.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.tables {
            std::fs::write(dir.join(name), body)?;
        }
        std::fs::write(dir.join("verdicts.txt"), self.verdict_lines())?;
        Ok(())
    }
}

fn table(name: &str, body: String) -> (String, String) {
    (name.to_string(), body)
}

fn convergence_outcome(id: &str, run: ConvergenceRun) -> ExperimentOutcome {
    let mut verdicts = vec![Verdict::new(
        "rate",
        run.report.passed(),
        format!(
            "order={:.4} min_order={} strictly_decreasing={} errors=[{}]",
            run.report.order,
            run.report.min_order,
            run.report.strictly_decreasing,
            run.report
                .errors
                .iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )];
    if run.half_width.is_some() {
        let worst = run
            .records
            .iter()
            .map(|r| r.max_ring_level)
            .fold(0.0, f64::max);
        verdicts.push(Verdict::new(
            "contamination",
            run.report.excluded.is_empty(),
            format!(
                "max_ring_level={worst:.3e} excluded={}",
                run.report.excluded.len()
            ),
        ));
    }
    if let Some(e) = run.surrogate_error {
        verdicts.push(Verdict::new(
            "surrogate-accuracy",
            run.surrogate_adequate(),
            format!("estimated_error={e:.3e}"),
        ));
    }
    ExperimentOutcome {
        id: id.to_string(),
        verdicts,
        tables: vec![
            table("convergence.csv", run.report.to_csv()),
            table("runs.csv", run.runs_csv()),
            table("error_series.csv", run.series_csv()),
        ],
    }
}

fn property_verdict(p: &crate::report::PropertyReport) -> Verdict {
    Verdict::new(
        p.name.clone(),
        p.passed(),
        format!(
            "samples={} violations={} min={:.3e} max={:.3e} worst_excess={:.3e}",
            p.samples, p.violations, p.min, p.max, p.worst_excess
        ),
    )
}

/// Runs one experiment by id.
pub fn run_experiment(id: &str, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if let Some(declared) = &cfg.experiment {
        if declared != id {
            return Err(Error::Config(format!(
                "config is for experiment `{declared}`, not `{id}`"
            )));
        }
    }
    let outcome = match id {
        "quadratic-exactness" => {
            let run = exp_quadratic_exactness(cfg)?;
            let mut csv = String::from("epsilon,h,nodes,max_abs_error\n");
            let verdicts = run
                .rows
                .iter()
                .map(|(e, h, n, err)| {
                    let _ = writeln!(csv, "{e:e},{h:e},{n},{err:e}");
                    Verdict::new(
                        format!("epsilon={e}"),
                        *err <= run.tolerance,
                        format!("max_abs_error={err:.3e} tolerance={:e}", run.tolerance),
                    )
                })
                .collect();
            ExperimentOutcome {
                id: id.into(),
                verdicts,
                tables: vec![table("exactness.csv", csv)],
            }
        }
        "convergence-dirichlet" => convergence_outcome(id, exp_convergence_dirichlet(cfg)?),
        "convergence-cauchy" => convergence_outcome(id, exp_convergence_cauchy(cfg)?),
        "comparison" => {
            let run = exp_comparison(cfg)?;
            ExperimentOutcome {
                id: id.into(),
                verdicts: run.parts.iter().map(property_verdict).collect(),
                tables: vec![
                    table("pairs.csv", run.pairs_csv()),
                    table("checks.csv", run.report.to_csv()),
                ],
            }
        }
        "maximum-principle" => {
            let r = exp_maximum_principle(cfg)?;
            ExperimentOutcome {
                id: id.into(),
                verdicts: vec![property_verdict(&r)],
                tables: vec![table("checks.csv", r.to_csv())],
            }
        }
        "decay-bounded" => {
            let run = exp_decay_bounded(cfg)?;
            let mut csv = String::from(
                "mu,horizon,lambda1,initial_sup,final_sup,threshold_met,l2_bound_checked,l2_bound_violations,l2_bound_margin\n",
            );
            let mut verdicts = Vec::new();
            for r in &run.records {
                let _ = writeln!(
                    csv,
                    "{:e},{:e},{:e},{:e},{:e},{},{},{},{:e}",
                    r.mu,
                    r.horizon,
                    r.lambda1,
                    r.initial_sup,
                    r.final_sup,
                    r.threshold_met,
                    r.l2_bound_checked,
                    r.l2_bound_violations,
                    r.l2_bound_margin
                );
                verdicts.push(Verdict::new(
                    format!("mu={}", r.mu),
                    r.passed(),
                    format!(
                        "final_ratio={:.3e} threshold={:e} lambda1={:.6} l2_bound={} violations={}",
                        r.final_sup / r.initial_sup,
                        run.ratio,
                        r.lambda1,
                        if r.l2_bound_checked {
                            "checked"
                        } else {
                            "skipped"
                        },
                        r.l2_bound_violations
                    ),
                ));
            }
            ExperimentOutcome {
                id: id.into(),
                verdicts,
                tables: vec![table("runs.csv", csv), table("norms.csv", run.norms_csv())],
            }
        }
        "decay-cauchy" => {
            let run = exp_decay_cauchy(cfg)?;
            let mut verdicts = Vec::new();
            for r in &run.records {
                let fits = r
                    .reports
                    .iter()
                    .map(|d| format!("{}={:.4}", d.observable, d.fit.exponent))
                    .collect::<Vec<_>>()
                    .join(" ");
                verdicts.push(Verdict::new(
                    format!("mu={}", r.mu),
                    r.passed(),
                    format!(
                        "{fits} l1_violations={} energy_violations={}/{} theta={} valid={}",
                        r.l1_violations, r.energy_violations, r.energy_samples, r.theta, r.valid
                    ),
                ));
            }
            ExperimentOutcome {
                id: id.into(),
                verdicts,
                tables: vec![
                    table("fits.csv", run.fits_csv()),
                    table("norms.csv", run.norms_csv()),
                ],
            }
        }
        "picard-crosscheck" => {
            let run = exp_picard_crosscheck(cfg)?;
            let worst = run.factors.iter().copied().fold(0.0, f64::max);
            ExperimentOutcome {
                id: id.into(),
                verdicts: vec![
                    Verdict::new(
                        "contraction",
                        run.contraction_ok(),
                        format!(
                            "sweeps={} worst_factor={worst:.4} predicted={:.4}",
                            run.sweeps, run.predicted_factor
                        ),
                    ),
                    Verdict::new(
                        "rk4-agreement",
                        run.max_gap() <= run.allowed_gap(),
                        format!(
                            "max_gap={:.3e} allowed={:.3e} time_error={:.3e}",
                            run.max_gap(),
                            run.allowed_gap(),
                            run.time_error
                        ),
                    ),
                ],
                tables: vec![
                    table("sweeps.csv", run.sweeps_csv()),
                    table("gaps.csv", run.gaps_csv()),
                ],
            }
        }
        "property-suite" => {
            let suite = exp_property_suite(cfg)?;
            ExperimentOutcome {
                id: id.into(),
                verdicts: suite.parts.iter().map(property_verdict).collect(),
                tables: vec![table("properties.csv", suite.to_csv())],
            }
        }
        other => return Err(Error::UnknownExperiment(other.to_string())),
    };
    Ok(outcome)
}
