//! Experiment configuration. Every field is optional; each experiment
//! fills in its own defaults, so an empty file runs the standard scenario.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{IntegratorConfig, Method, PicardConfig};
use crate::kernel::{make_kernel, KernelSpec, Profile, Renormalization};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment id; when set it must match the id being run.
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub nonlinearity: NonlinearitySection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub suite: SuiteSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub profile: Option<Profile>,
    pub radius: Option<f64>,
    pub renormalization: Option<Renormalization>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityKindConfig {
    Identity,
    Kpz,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySection {
    pub kind: Option<NonlinearityKindConfig>,
    pub mu: Option<f64>,
    /// Variable μ: `mu + mu_amplitude · sin(mu_wavenumber · x)`.
    pub mu_amplitude: Option<f64>,
    pub mu_wavenumber: Option<f64>,
    /// Fault injection: declare this (too small) upper cone bound.
    pub declared_alpha2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub dim: Option<usize>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Cauchy box half-width; derived from the horizon when absent.
    pub half_width: Option<f64>,
    /// Lattice points per (rescaled) kernel radius.
    pub points_per_radius: Option<f64>,
    /// Cells across the first axis, for experiments on a fixed node count.
    pub cells: Option<usize>,
    pub contamination_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: Option<f64>,
    /// Uniformly spaced observation times in (0, T].
    pub samples: Option<usize>,
    /// First sample of a geometric schedule.
    pub t_start: Option<f64>,
    pub samples_per_decade: Option<usize>,
    pub fit_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub amplitude: Option<f64>,
    pub variance: Option<f64>,
    /// Coarse cell count of the variable-μ surrogate.
    pub surrogate_cells: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Option<Method>,
    pub cfl_safety: Option<f64>,
    pub dt: Option<f64>,
    pub picard_dt: Option<f64>,
    pub picard_tolerance: Option<f64>,
    pub picard_max_sweeps: Option<usize>,
    pub picard_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    /// One run per entry.
    pub mu_values: Option<Vec<f64>>,
    /// Horizon per run; a single entry applies to all runs.
    pub horizons: Option<Vec<f64>>,
    pub initial_amplitude: Option<f64>,
    pub initial_variance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    pub class_samples: Option<usize>,
    pub elementary_samples: Option<usize>,
    pub periodic_fields: Option<usize>,
    pub pairs: Option<usize>,
    pub runs: Option<usize>,
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub min_order: Option<f64>,
    pub exactness: Option<f64>,
    pub decay_ratio: Option<f64>,
    pub decay_slack: Option<f64>,
    pub comparison: Option<f64>,
    pub bounds: Option<f64>,
    pub plancherel: Option<f64>,
    pub monotone_step: Option<f64>,
    pub exponent_band: Option<[f64; 2]>,
    pub squared_exponent_band: Option<[f64; 2]>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(20_240_601)
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim.unwrap_or(1)
    }

    pub fn kernel_spec(&self, default: Profile) -> Result<KernelSpec> {
        let radius = self.kernel.radius.unwrap_or(1.0);
        make_kernel(self.kernel.profile.unwrap_or(default), self.dim(), radius)
    }

    pub fn points_per_radius(&self) -> Result<f64> {
        let k = self.geometry.points_per_radius.unwrap_or(8.0);
        if k < 4.0 {
            return Err(Error::Config(format!(
                "points_per_radius must be at least 4, got {k}"
            )));
        }
        Ok(k)
    }

    /// Box of the bounded domain, default `(-1, 1)^N`.
    pub fn bounds(&self) -> Result<Vec<(f64, f64)>> {
        let n = self.dim();
        let lo = self.geometry.lower.clone().unwrap_or_else(|| vec![-1.0; n]);
        let hi = self.geometry.upper.clone().unwrap_or_else(|| vec![1.0; n]);
        if lo.len() != n || hi.len() != n {
            return Err(Error::Config(format!(
                "geometry bounds need {n} entries per corner"
            )));
        }
        Ok(lo.into_iter().zip(hi).collect())
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        let s = &self.integrator;
        let defaults = PicardConfig::default();
        let cfg = IntegratorConfig {
            method: s.method.unwrap_or_default(),
            cfl_safety: s.cfl_safety.unwrap_or(crate::evolution::DEFAULT_CFL_SAFETY),
            dt: s.dt,
            picard: PicardConfig {
                weight: s.picard_weight,
                tolerance: s.picard_tolerance.unwrap_or(defaults.tolerance),
                max_sweeps: s.picard_max_sweeps.unwrap_or(defaults.max_sweeps),
                dt: s.picard_dt,
            },
        };
        if !(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0) {
            return Err(Error::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                cfg.cfl_safety
            )));
        }
        if !(cfg.picard.tolerance > 0.0) {
            return Err(Error::Config("picard_tolerance must be positive".into()));
        }
        Ok(cfg)
    }
}
