//! Norms, power-law fits, the principal Dirichlet eigenvalue, and the
//! energy functionals used by the decay estimates.

use std::fmt::Write as _;

use rustfft::num_complex::Complex;

use crate::discretization::{DirichletForm, Grid};
use crate::error::{Error, Result};
use crate::kernel::{fft_nd, fourier_symbol, periodic_index, DiscreteKernel};
use crate::sum::{pairwise_sum, pairwise_sum_by};

/// `(h^N Σ |u|^q)^{1/q}` over Ω̄, or the nodal max for `q = ∞`.
pub fn lq_norm(grid: &Grid, u: &[f64], q: f64) -> f64 {
    let nodes = grid.interior_nodes();
    if q == f64::INFINITY {
        return nodes.iter().map(|&n| u[n].abs()).fold(0.0, f64::max);
    }
    assert!(q >= 1.0, "lq_norm needs q >= 1, got {q}");
    let vol = grid.cell_volume();
    let s = if q == 1.0 {
        pairwise_sum_by(nodes.len(), |i| u[nodes[i]].abs())
    } else if q == 2.0 {
        pairwise_sum_by(nodes.len(), |i| u[nodes[i]] * u[nodes[i]])
    } else {
        pairwise_sum_by(nodes.len(), |i| u[nodes[i]].abs().powf(q))
    };
    (vol * s).powf(1.0 / q)
}

/// Least-squares line through `(ln t, ln value)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    pub samples: usize,
}

/// Residual above which a log-log fit is not a power law.
pub const POOR_FIT_RESIDUAL: f64 = 1e-2;

pub fn fit_power_law(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<PowerLawFit> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(v > 0.0) || !(t > 0.0) {
            return Err(Error::NonPositiveSample { time: t, value: v });
        }
        xs.push(t.ln());
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < 5 {
        return Err(Error::TooFewSamples(n));
    }
    let nf = n as f64;
    let mx = pairwise_sum(&xs) / nf;
    let my = pairwise_sum(&ys) / nf;
    let sxx = pairwise_sum_by(n, |i| (xs[i] - mx) * (xs[i] - mx));
    let sxy = pairwise_sum_by(n, |i| (xs[i] - mx) * (ys[i] - my));
    let exponent = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - exponent * mx;
    let ss = pairwise_sum_by(n, |i| {
        let r = ys[i] - intercept - exponent * xs[i];
        r * r
    });
    Ok(PowerLawFit {
        exponent,
        intercept,
        residual: (ss / nf).sqrt(),
        samples: n,
    })
}

/// `per_decade` geometrically spaced times in `[t0, t1]`, both ends included.
pub fn geometric_times(t0: f64, t1: f64, per_decade: usize) -> Vec<f64> {
    let decades = (t1 / t0).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize;
    let mut ts: Vec<f64> = (0..=n)
        .map(|k| t0 * 10f64.powf(decades * k as f64 / n as f64))
        .collect();
    ts[0] = t0;
    ts[n] = t1;
    ts
}

/// Principal eigenpair of a Dirichlet form.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    /// Unit-norm (Euclidean, over interior unknowns) with positive sum.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Cholesky factor of a symmetric banded matrix in lower band storage.
struct BandCholesky {
    band: Vec<Vec<f64>>,
    bw: usize,
}

impl BandCholesky {
    #[allow(clippy::needless_range_loop)]
    fn factor(mut band: Vec<Vec<f64>>) -> Result<Self> {
        let n = band.len();
        let bw = band.first().map_or(0, |r| r.len() - 1);
        for k in 0..n {
            for d in (1..=bw.min(k)).rev() {
                // L[k][k-d] = (A[k][k-d] - Σ_{j<k-d} L[k][j] L[k-d][j]) / L[k-d][k-d]
                let col = k - d;
                let mut s = band[k][d];
                for e in d + 1..=bw.min(k) {
                    let j = k - e;
                    if col - j <= bw {
                        s -= band[k][e] * band[col][col - j];
                    }
                }
                band[k][d] = s / band[col][0];
            }
            let mut s = band[k][0];
            for d in 1..=bw.min(k) {
                s -= band[k][d] * band[k][d];
            }
            if !(s > 0.0) {
                return Err(Error::NotPositiveDefinite { row: k, pivot: s });
            }
            band[k][0] = s.sqrt();
        }
        Ok(Self { band, bw })
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for k in 0..n {
            let mut s = b[k];
            for d in 1..=self.bw.min(k) {
                s -= self.band[k][d] * b[k - d];
            }
            b[k] = s / self.band[k][0];
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for d in 1..=self.bw.min(n - 1 - k) {
                s -= self.band[k + d][d] * b[k + d];
            }
            b[k] = s / self.band[k][0];
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = pairwise_sum_by(v.len(), |i| v[i] * v[i]).sqrt();
    let sign = if pairwise_sum(v) < 0.0 { -1.0 } else { 1.0 };
    for x in v.iter_mut() {
        *x *= sign / norm;
    }
}

pub const LAMBDA1_TOLERANCE: f64 = 1e-10;

/// Smallest eigenvalue of the form by inverse iteration on a banded
/// Cholesky factorization.
pub fn lambda1(form: &DirichletForm) -> Result<Eigenpair> {
    const MAX_ITER: usize = 10_000;
    let n = form.size();
    if n == 0 {
        return Err(Error::Mismatch("Dirichlet form has no unknowns".into()));
    }
    let chol = BandCholesky::factor(form.lower_band())?;
    let mut v = vec![1.0; n];
    normalize(&mut v);
    let mut value = form.quadratic(&v);
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITER {
        chol.solve(&mut v);
        normalize(&mut v);
        value = form.quadratic(&v);
        let av = form.apply(&v);
        residual = pairwise_sum_by(n, |i| (av[i] - value * v[i]).powi(2)).sqrt();
        if residual <= LAMBDA1_TOLERANCE * value.abs().max(1e-300) {
            return Ok(Eigenpair {
                value,
                vector: v,
                iterations: it,
            });
        }
    }
    let _ = value;
    Err(Error::Stagnation {
        iterations: MAX_ITER,
        residual,
    })
}

/// Rayleigh quotient `⟨Av, v⟩ / ⟨v, v⟩`.
pub fn rayleigh_quotient(form: &DirichletForm, v: &[f64]) -> Result<f64> {
    let vv = pairwise_sum_by(v.len(), |i| v[i] * v[i]);
    if vv == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(form.quadratic(v) / vv)
}

fn check_periodic(values: &[f64], shape: &[usize], dk: &DiscreteKernel) -> Result<()> {
    if shape.len() != dk.dim() {
        return Err(Error::Mismatch(format!(
            "{}-dimensional kernel on a {}-axis grid",
            dk.dim(),
            shape.len()
        )));
    }
    let total: usize = shape.iter().product();
    if values.len() != total {
        return Err(Error::LengthMismatch {
            expected: total,
            got: values.len(),
        });
    }
    Ok(())
}

/// `h^N/n Σ_k (m - Ĵ_k) |û_k|²` on a periodic grid (row-major, last axis
/// fastest).
pub fn dj_functional(values: &[f64], shape: &[usize], dk: &DiscreteKernel) -> Result<f64> {
    check_periodic(values, shape, dk)?;
    let symbol = fourier_symbol(dk, shape)?;
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_nd(&mut buf, shape, false);
    let m = dk.mass();
    let total = values.len() as f64;
    let s = pairwise_sum_by(buf.len(), |k| (m - symbol[k]) * buf[k].norm_sqr());
    Ok(s * dk.spacing().powi(dk.dim() as i32) / total)
}

/// Direct `h^N Σ_x Σ_j w_j (u(x+z_j) - u(x))²` with periodic wrap.
pub fn double_energy_periodic(values: &[f64], shape: &[usize], dk: &DiscreteKernel) -> Result<f64> {
    check_periodic(values, shape, dk)?;
    let n = values.len();
    let row = |x: usize| -> f64 {
        let (r, c) = match shape.len() {
            1 => (0, x),
            _ => (x / shape[1], x % shape[1]),
        };
        let mut acc = 0.0;
        for (o, w) in dk.offsets().iter().zip(dk.weights()) {
            let y = match shape.len() {
                1 => periodic_index(&[c as i32 + o[0], 0], shape),
                _ => periodic_index(&[c as i32 + o[0], r as i32 + o[1]], shape),
            };
            let d = values[y] - values[x];
            acc += w * d * d;
        }
        acc
    };
    Ok(dk.spacing().powi(dk.dim() as i32) * pairwise_sum_by(n, row))
}

/// Direct double sum over all lattice pairs with `u` extended by zero
/// outside Ω̄ (collar entries are ignored).
pub fn double_energy(grid: &Grid, u: &[f64], dk: &DiscreteKernel) -> f64 {
    let nodes = grid.interior_nodes();
    let row = |i: usize| -> f64 {
        let x = nodes[i];
        let mut acc = 0.0;
        for (o, w) in dk.offsets().iter().zip(dk.weights()) {
            let y = (x as isize + grid.flat_offset(o)) as usize;
            if grid.is_interior(y) {
                let d = u[y] - u[x];
                acc += w * d * d;
            } else {
                // both orderings of the pair (x, y) with y outside Ω̄
                acc += 2.0 * w * u[x] * u[x];
            }
        }
        acc
    };
    grid.cell_volume() * pairwise_sum_by(nodes.len(), row)
}

/// Energy divided by `min(‖u‖₁^{-4/N} ‖u‖₂^{2+4/N}, ‖u‖₂²)`.
pub fn gns_ratio(grid: &Grid, u: &[f64], dk: &DiscreteKernel) -> Result<f64> {
    let l1 = lq_norm(grid, u, 1.0);
    let l2 = lq_norm(grid, u, 2.0);
    if l1 == 0.0 {
        return Err(Error::ZeroField);
    }
    let n = grid.dim() as f64;
    let a = l1.powf(-4.0 / n) * l2.powf(2.0 + 4.0 / n);
    Ok(double_energy(grid, u, dk) / a.min(l2 * l2))
}

/// Time series of one observable and its late-time power-law fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub observable: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub window: (f64, f64),
    pub fit: PowerLawFit,
    /// Acceptance band for the exponent, if any.
    pub target: Option<(f64, f64)>,
}

impl DecayReport {
    /// Fits over `window`, or over the last decade of samples by default.
    pub fn new(
        observable: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        window: Option<(f64, f64)>,
        target: Option<(f64, f64)>,
    ) -> Result<Self> {
        let last = times.last().copied().ok_or(Error::TooFewSamples(0))?;
        let window = window.unwrap_or((last / 10.0, last));
        let fit = fit_power_law(&times, &values, window)?;
        Ok(Self {
            observable: observable.into(),
            times,
            values,
            window,
            fit,
            target,
        })
    }

    pub fn passed(&self) -> bool {
        match self.target {
            Some((lo, hi)) => self.fit.exponent >= lo && self.fit.exponent <= hi,
            None => true,
        }
    }

    pub fn verdict_line(&self) -> String {
        let band = match self.target {
            Some((lo, hi)) => format!(" band=[{lo}, {hi}]"),
            None => String::new(),
        };
        format!(
            "{} {} exponent={:.6} residual={:.3e} window=[{}, {}]{band}",
            self.observable,
            if self.passed() { "PASS" } else { "FAIL" },
            self.fit.exponent,
            self.fit.residual,
            self.window.0,
            self.window.1
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,observable,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:e},{},{v:e}", self.observable);
        }
        out
    }
}

/// Errors against a reference for a decreasing sequence of ε.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    /// Slope of `ln error` against `ln ε`.
    pub order: f64,
    pub strictly_decreasing: bool,
    pub min_order: f64,
    /// ε values dropped from the sweep, with the reason.
    pub excluded: Vec<(f64, String)>,
}

impl ConvergenceReport {
    pub fn new(
        epsilons: Vec<f64>,
        errors: Vec<f64>,
        min_order: f64,
        excluded: Vec<(f64, String)>,
    ) -> Result<Self> {
        if epsilons.len() != errors.len() {
            return Err(Error::LengthMismatch {
                expected: epsilons.len(),
                got: errors.len(),
            });
        }
        if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config(
                "epsilon sweep must be strictly decreasing".into(),
            ));
        }
        if let Some(e) = errors.iter().find(|e| !e.is_finite()) {
            return Err(Error::Config(format!("non-finite error {e}")));
        }
        let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
        let order = if epsilons.len() >= 2 && errors.iter().all(|&e| e > 0.0) {
            let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
            let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
            let n = xs.len() as f64;
            let mx = pairwise_sum(&xs) / n;
            let my = pairwise_sum(&ys) / n;
            let sxx = pairwise_sum_by(xs.len(), |i| (xs[i] - mx).powi(2));
            let sxy = pairwise_sum_by(xs.len(), |i| (xs[i] - mx) * (ys[i] - my));
            sxy / sxx
        } else {
            f64::NAN
        };
        Ok(Self {
            epsilons,
            errors,
            order,
            strictly_decreasing,
            min_order,
            excluded,
        })
    }

    pub fn passed(&self) -> bool {
        self.excluded.is_empty()
            && self.epsilons.len() >= 2
            && self.strictly_decreasing
            && self.order >= self.min_order
    }

    pub fn verdict_line(&self, id: &str) -> String {
        format!(
            "{id} {} order={:.4} strictly_decreasing={} min_order={} runs={} excluded={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.order,
            self.strictly_decreasing,
            self.min_order,
            self.epsilons.len(),
            self.excluded.len()
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,sup_linf_error\n");
        for (e, err) in self.epsilons.iter().zip(&self.errors) {
            let _ = writeln!(out, "{e:e},{err:e}");
        }
        out
    }
}
