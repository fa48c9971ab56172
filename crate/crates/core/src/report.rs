//! Experiment outputs shared across modules.

use std::fmt::Write as _;

/// Outcome of a sampled property check.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: String,
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub violations: usize,
    /// Worst violation beyond tolerance, 0 when none.
    pub worst_excess: f64,
    pub notes: Vec<String>,
}

impl PropertyReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            samples: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            violations: 0,
            worst_excess: 0.0,
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.samples > 0
    }

    pub(crate) fn record(&mut self, value: f64) {
        self.samples += 1;
        self.min = self.min.min(value);
        self.max = self.max.max(value);
    }

    pub(crate) fn violation(&mut self, excess: f64) {
        self.violations += 1;
        self.worst_excess = self.worst_excess.max(excess);
    }

    /// Folds another report into a suite-level one.
    pub fn absorb(&mut self, other: &PropertyReport) {
        self.samples += other.samples;
        self.violations += other.violations;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        self.worst_excess = self.worst_excess.max(other.worst_excess);
        self.notes.push(format!(
            "{}: {} samples, {} violations, range [{:e}, {:e}]",
            other.name, other.samples, other.violations, other.min, other.max
        ));
    }

    pub fn verdict_line(&self) -> String {
        format!(
            "{} {} samples={} violations={} min={:e} max={:e}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.samples,
            self.violations,
            self.min,
            self.max
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,samples,violations,min,max,worst_excess,pass\n");
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:e},{:e},{}",
            self.name,
            self.samples,
            self.violations,
            self.min,
            self.max,
            self.worst_excess,
            self.passed()
        );
        out
    }
}
