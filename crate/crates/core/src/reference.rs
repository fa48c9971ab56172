//! Exact and surrogate solutions of the local limit problems.
//!
//! With constant μ the substitution `w = e^{μv}` turns
//! `v_t = Δv + μ|∇v|²` into the heat equation, so a Gaussian bump on top of
//! the constant 1 gives a closed-form target. For variable μ there is no
//! closed form and a fine finite-difference solution stands in.

use std::sync::Arc;

use crate::discretization::Grid;
use crate::error::{Error, Result};
use crate::evolution::{BoundaryData, Sampler};

/// Anything that can be evaluated at a space-time point.
pub trait ReferenceSolution: Send + Sync {
    fn value(&self, x: &[f64], t: f64) -> f64;
}

/// `v = ln(w)/μ` with `w = 1 + a (σ²/s²)^{N/2} exp(-|x|²/(2s²))`, `s² = σ² + 2t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfCole {
    mu: f64,
    amplitude: f64,
    variance: f64,
    dim: usize,
}

/// Analytic first and second derivatives of `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives {
    pub v_t: f64,
    pub grad: [f64; 2],
    pub laplacian: f64,
}

impl HopfCole {
    pub fn new(mu: f64, amplitude: f64, variance: f64, dim: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if mu == 0.0 || !mu.is_finite() {
            return Err(Error::Config(
                "Hopf-Cole solution needs a nonzero finite mu".into(),
            ));
        }
        if !(amplitude > -1.0) || !amplitude.is_finite() {
            return Err(Error::Config(format!(
                "amplitude must exceed -1 to keep w positive, got {amplitude}"
            )));
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::NonPositive {
                what: "variance",
                value: variance,
            });
        }
        Ok(Self {
            mu,
            amplitude,
            variance,
            dim,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Amplitude and variance of the Gaussian part at time t.
    pub fn gaussian_at(&self, t: f64) -> (f64, f64) {
        let s2 = self.variance + 2.0 * t;
        let a = self.amplitude * (self.variance / s2).powf(0.5 * self.dim as f64);
        (a, s2)
    }

    fn r2(&self, x: &[f64]) -> f64 {
        x[..self.dim].iter().map(|c| c * c).sum()
    }

    /// `w - 1`.
    fn bump(&self, x: &[f64], t: f64) -> f64 {
        let (a, s2) = self.gaussian_at(t);
        a * (-self.r2(x) / (2.0 * s2)).exp()
    }

    pub fn w(&self, x: &[f64], t: f64) -> f64 {
        1.0 + self.bump(x, t)
    }

    pub fn v(&self, x: &[f64], t: f64) -> f64 {
        self.w(x, t).ln() / self.mu
    }

    /// Heat-equation residual of w, with the time and space derivatives of
    /// the Gaussian computed by separate formulas.
    pub fn heat_residual(&self, x: &[f64], t: f64) -> f64 {
        let s2 = self.variance + 2.0 * t;
        let g = self.bump(x, t);
        let r2 = self.r2(x);
        let n = self.dim as f64;
        let g_t = g * (r2 / (s2 * s2) - n / s2);
        let lap: f64 = x[..self.dim]
            .iter()
            .map(|c| g * (c * c / (s2 * s2) - 1.0 / s2))
            .sum();
        g_t - lap
    }

    pub fn derivatives(&self, x: &[f64], t: f64) -> Derivatives {
        let s2 = self.variance + 2.0 * t;
        let g = self.bump(x, t);
        let w = 1.0 + g;
        let r2 = self.r2(x);
        let n = self.dim as f64;
        let g_t = g * (r2 / (s2 * s2) - n / s2);
        let mut grad_g = [0.0; 2];
        let mut lap_g = 0.0;
        for i in 0..self.dim {
            grad_g[i] = -x[i] * g / s2;
            lap_g += g * (x[i] * x[i] / (s2 * s2) - 1.0 / s2);
        }
        let grad_sq = grad_g[0] * grad_g[0] + grad_g[1] * grad_g[1];
        Derivatives {
            v_t: g_t / (self.mu * w),
            grad: [grad_g[0] / (self.mu * w), grad_g[1] / (self.mu * w)],
            laplacian: (lap_g / w - grad_sq / (w * w)) / self.mu,
        }
    }

    /// Largest `|v_t - Δv - μ|∇v|²|` over the samples.
    pub fn residual_kpz(&self, samples: &[(Vec<f64>, f64)]) -> f64 {
        samples
            .iter()
            .map(|(x, t)| {
                let d = self.derivatives(x, *t);
                let grad_sq = d.grad[0] * d.grad[0] + d.grad[1] * d.grad[1];
                (d.v_t - d.laplacian - self.mu * grad_sq).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Range of v at t = 0 over all of space.
    pub fn initial_range(&self) -> (f64, f64) {
        let peak = (1.0 + self.amplitude).ln() / self.mu;
        (peak.min(0.0), peak.max(0.0))
    }

    /// Radius beyond which `|w(·,0) - 1| < tol`.
    pub fn initial_extent(&self, tol: f64) -> f64 {
        let a = self.amplitude.abs();
        if a <= tol {
            return 0.0;
        }
        (2.0 * self.variance * (a / tol).ln()).sqrt()
    }
}

impl ReferenceSolution for HopfCole {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.v(x, t)
    }
}

/// Initial data on Ω̄ and exterior data `h(x, t)` taken from a global
/// solution, so the collar carries the exact solution with no extension error.
pub fn dirichlet_data_from(sol: Arc<dyn ReferenceSolution>) -> (Sampler, BoundaryData) {
    let a = sol.clone();
    let initial: Sampler = Arc::new(move |x: &[f64]| a.value(x, 0.0));
    let boundary: BoundaryData = Arc::new(move |x: &[f64], t: f64| sol.value(x, t));
    (initial, boundary)
}

/// `x,[y,]value` rows of the reference on every node of `grid` at time `t`.
pub fn reference_csv(sol: &dyn ReferenceSolution, grid: &Grid, t: f64) -> String {
    let mut out = String::from(if grid.dim() == 1 {
        "x,value\n"
    } else {
        "x,y,value\n"
    });
    for n in 0..grid.len() {
        let p = grid.point(n);
        let v = sol.value(&p, t);
        match grid.dim() {
            1 => out.push_str(&format!("{:e},{v:e}\n", p[0])),
            _ => out.push_str(&format!("{:e},{:e},{v:e}\n", p[0], p[1])),
        }
    }
    out
}

/// One-dimensional `v_t = v_xx + μ(x) v_x²` on `[-L, L]`.
#[derive(Clone)]
pub struct SurrogateSpec {
    pub mu: Sampler,
    pub initial: Sampler,
    pub half_width: f64,
    /// Coarse cell count; the solution is computed at this and twice the
    /// resolution and the finer one is kept.
    pub cells: usize,
    pub horizon: f64,
    /// Spacing of stored snapshots.
    pub snapshot_dt: f64,
}

/// Fourth-order finite-difference solution with Hermite interpolation in
/// time and cubic Lagrange interpolation in space.
#[derive(Debug, Clone)]
pub struct FdSurrogate {
    x0: f64,
    dx: f64,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
    error_estimate: f64,
}

struct FdRun {
    dx: f64,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    rates: Vec<Vec<f64>>,
}

fn fd_rhs(u: &[f64], mu: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    let inv = 1.0 / dx;
    let inv2 = inv * inv;
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        let (ux, uxx) = if i >= 2 && i + 2 < n {
            (
                (-u[i + 2] + 8.0 * u[i + 1] - 8.0 * u[i - 1] + u[i - 2]) * inv / 12.0,
                (-u[i + 2] + 16.0 * u[i + 1] - 30.0 * u[i] + 16.0 * u[i - 1] - u[i - 2]) * inv2
                    / 12.0,
            )
        } else {
            (
                0.5 * (u[i + 1] - u[i - 1]) * inv,
                (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv2,
            )
        };
        out[i] = uxx + mu[i] * ux * ux;
    }
}

fn fd_run(
    spec: &SurrogateSpec,
    cells: usize,
    snapshot_every_coarse: usize,
    refine: usize,
) -> FdRun {
    let l = spec.half_width;
    let dx = 2.0 * l / cells as f64;
    let xs: Vec<f64> = (0..=cells).map(|i| -l + i as f64 * dx).collect();
    let mu: Vec<f64> = xs.iter().map(|&x| (spec.mu)(&[x])).collect();
    let mut u: Vec<f64> = xs.iter().map(|&x| (spec.initial)(&[x])).collect();
    // RK4 stability on the fourth-order Laplacian: |λ| ≤ 16/(3dx²), limit 2.78/|λ|
    let base_steps = (spec.horizon / (0.4 * (2.0 * l / spec.cells as f64).powi(2))).ceil() as usize;
    let coarse_steps = base_steps.div_ceil(snapshot_every_coarse) * snapshot_every_coarse;
    let steps = coarse_steps * refine * refine;
    let every = snapshot_every_coarse * refine * refine;
    let dt = spec.horizon / steps as f64;
    let n = u.len();
    let mut k: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut times = vec![0.0];
    let mut rate = vec![0.0; n];
    fd_rhs(&u, &mu, dx, &mut rate);
    let mut values = vec![u.clone()];
    let mut rates = vec![rate.clone()];
    for step in 1..=steps {
        fd_rhs(&u, &mu, dx, &mut k[0]);
        for i in 0..n {
            stage[i] = u[i] + 0.5 * dt * k[0][i];
        }
        fd_rhs(&stage, &mu, dx, &mut k[1]);
        for i in 0..n {
            stage[i] = u[i] + 0.5 * dt * k[1][i];
        }
        fd_rhs(&stage, &mu, dx, &mut k[2]);
        for i in 0..n {
            stage[i] = u[i] + dt * k[2][i];
        }
        fd_rhs(&stage, &mu, dx, &mut k[3]);
        for i in 0..n {
            u[i] += dt / 6.0 * (k[0][i] + 2.0 * (k[1][i] + k[2][i]) + k[3][i]);
        }
        if step % every == 0 {
            fd_rhs(&u, &mu, dx, &mut rate);
            times.push(step as f64 * dt);
            values.push(u.clone());
            rates.push(rate.clone());
        }
    }
    FdRun {
        dx,
        times,
        values,
        rates,
    }
}

impl FdSurrogate {
    pub fn solve(spec: &SurrogateSpec) -> Result<Self> {
        if spec.cells < 16 || !(spec.half_width > 0.0) || !(spec.horizon > 0.0) {
            return Err(Error::Config(
                "surrogate needs at least 16 cells, positive half-width and horizon".into(),
            ));
        }
        if !(spec.snapshot_dt > 0.0) {
            return Err(Error::NonPositive {
                what: "snapshot_dt",
                value: spec.snapshot_dt,
            });
        }
        let dx = 2.0 * spec.half_width / spec.cells as f64;
        let base_dt = 0.4 * dx * dx;
        let every = ((spec.snapshot_dt / base_dt).floor() as usize).max(1);
        let coarse = fd_run(spec, spec.cells, every, 1);
        let fine = fd_run(spec, 2 * spec.cells, every, 2);
        if coarse.times.len() != fine.times.len() {
            return Err(Error::Mismatch(
                "surrogate snapshot schedules differ".into(),
            ));
        }
        // Richardson: the fine solution's error is about |coarse - fine| / 15
        let mut gap = 0.0f64;
        for (c, f) in coarse.values.iter().zip(&fine.values) {
            for (i, cv) in c.iter().enumerate() {
                gap = gap.max((cv - f[2 * i]).abs());
            }
        }
        if fine.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Blowup {
                last_valid_time: 0.0,
            });
        }
        Ok(Self {
            x0: -spec.half_width,
            dx: fine.dx,
            times: fine.times,
            values: fine.values,
            rates: fine.rates,
            error_estimate: gap / 15.0,
        })
    }

    /// Estimated max error of the stored solution at the nodes.
    pub fn error_estimate(&self) -> f64 {
        self.error_estimate
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }

    fn at_snapshot(&self, snap: usize, x: f64) -> (f64, f64) {
        let n = self.values[snap].len();
        let s = ((x - self.x0) / self.dx).clamp(0.0, (n - 1) as f64);
        let i0 = (s.floor() as usize).saturating_sub(1).min(n - 4);
        let mut v = 0.0;
        let mut r = 0.0;
        for j in 0..4 {
            let mut l = 1.0;
            for m in 0..4 {
                if m != j {
                    l *= (s - (i0 + m) as f64) / (j as f64 - m as f64);
                }
            }
            v += l * self.values[snap][i0 + j];
            r += l * self.rates[snap][i0 + j];
        }
        (v, r)
    }
}

impl ReferenceSolution for FdSurrogate {
    fn value(&self, x: &[f64], t: f64) -> f64 {
        let last = self.times.len() - 1;
        let t = t.clamp(0.0, self.times[last]);
        let k = match self.times.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(k) => return self.at_snapshot(k, x[0]).0,
            Err(k) => k.clamp(1, last),
        };
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let dt = t1 - t0;
        let (v0, r0) = self.at_snapshot(k - 1, x[0]);
        let (v1, r1) = self.at_snapshot(k, x[0]);
        let s = (t - t0) / dt;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * v0 + h10 * dt * r0 + h01 * v1 + h11 * dt * r1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standard() -> HopfCole {
        HopfCole::new(1.0, 0.5, 1.0, 1).unwrap()
    }

    #[test]
    fn initial_value_and_far_field() {
        let s = standard();
        let x = 0.7f64;
        let want = (1.0 + 0.5 * (-x * x / 2.0).exp()).ln();
        assert!((s.v(&[x], 0.0) - want).abs() < 1e-15);
        assert!(s.v(&[60.0], 0.3).abs() < 1e-300);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(HopfCole::new(0.0, 0.5, 1.0, 1).is_err());
        assert!(HopfCole::new(1.0, -1.0, 1.0, 1).is_err());
        assert!(HopfCole::new(1.0, 0.5, 0.0, 1).is_err());
        assert!(HopfCole::new(1.0, 0.5, 1.0, 3).is_err());
    }

    fn samples(dim: usize, n: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
                (x, rng.gen_range(0.0..2.0))
            })
            .collect()
    }

    #[test]
    fn kpz_residual_vanishes() {
        assert!(standard().residual_kpz(&samples(1, 1000, 1)) <= 1e-10);
        let s2 = HopfCole::new(-0.7, 2.0, 0.5, 2).unwrap();
        assert!(s2.residual_kpz(&samples(2, 1000, 2)) <= 1e-10);
        let flat = HopfCole::new(1.0, 0.0, 1.0, 1).unwrap();
        assert_eq!(flat.residual_kpz(&samples(1, 100, 3)), 0.0);
        assert_eq!(flat.v(&[0.3], 0.1), 0.0);
    }

    #[test]
    fn w_solves_heat_equation() {
        let s = HopfCole::new(1.3, 0.9, 0.4, 2).unwrap();
        for (x, t) in samples(2, 1000, 5) {
            assert!(s.heat_residual(&x, t).abs() <= 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let s = HopfCole::new(0.8, 1.5, 0.6, 2).unwrap();
        let h = 1e-4;
        for (x, t) in samples(2, 20, 6) {
            let t = t + 0.01;
            let d = s.derivatives(&x, t);
            let fd_t = (s.v(&x, t + h) - s.v(&x, t - h)) / (2.0 * h);
            assert!((d.v_t - fd_t).abs() < 1e-7);
            let mut lap = 0.0;
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let (vp, vm, v0) = (s.v(&xp, t), s.v(&xm, t), s.v(&x, t));
                assert!((d.grad[i] - (vp - vm) / (2.0 * h)).abs() < 1e-7);
                lap += (vp - 2.0 * v0 + vm) / (h * h);
            }
            assert!((d.laplacian - lap).abs() < 1e-5);
        }
    }

    /// Composite Gauss–Legendre quadrature of `f` on `[a, b]`.
    fn gauss(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            0.538_469_310_105_683_1,
            -0.538_469_310_105_683_1,
            0.906_179_845_938_664,
            -0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let c = a + (p as f64 + 0.5) * h;
            for k in 0..5 {
                total += 0.5 * h * W[k] * f(c + 0.5 * h * X[k]);
            }
        }
        total
    }

    #[test]
    fn gaussian_evolution_matches_heat_kernel_convolution() {
        let s = standard();
        let t = 0.25;
        for &x in &[0.0, 0.4, -1.3, 2.5] {
            let conv = gauss(
                |y| {
                    let k = (-(x - y) * (x - y) / (4.0 * t)).exp()
                        / (4.0 * std::f64::consts::PI * t).sqrt();
                    k * s.w(&[y], 0.0)
                },
                x - 12.0,
                x + 12.0,
                400,
            );
            assert!((conv - s.w(&[x], t)).abs() < 1e-8, "x = {x}");
        }
        // 2D: the kernel factorizes, so check the amplitude law via a radial slice
        let s2 = HopfCole::new(1.0, 0.5, 1.0, 2).unwrap();
        let (a, var) = s2.gaussian_at(t);
        let inner = |y1: f64| {
            gauss(
                |y2| {
                    let k =
                        (-(y1 * y1 + y2 * y2) / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t);
                    k * (s2.w(&[y1, y2], 0.0) - 1.0)
                },
                -10.0,
                10.0,
                100,
            )
        };
        let centre = gauss(inner, -10.0, 10.0, 100);
        assert!((centre - a).abs() < 1e-8);
        assert!((var - 1.5).abs() < 1e-15);
    }

    #[test]
    fn consistency_with_w() {
        let s = HopfCole::new(-1.7, 0.5, 1.0, 1).unwrap();
        for (x, t) in samples(1, 200, 8) {
            let w = s.w(&x, t);
            assert!((s.mu() * s.v(&x, t) - w.ln()).abs() <= 4.0 * f64::EPSILON * w.ln().abs());
        }
    }

    #[test]
    fn peak_decreases_in_time() {
        let s = standard();
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let p = s.v(&[0.0], k as f64 * 0.1);
            assert!(p < prev);
            prev = p;
        }
        let (lo, hi) = s.initial_range();
        assert_eq!(lo, 0.0);
        assert!((hi - 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn data_samplers_agree_with_solution() {
        let s = standard();
        let grid = build_grid(&[(-1.0, 1.0)], 0.05, 0.2).unwrap();
        let (u0, h) = dirichlet_data_from(Arc::new(s));
        let (lo, hi) = s.initial_range();
        for n in grid.interior_nodes() {
            let v = u0(&grid.point(n));
            assert!(v >= lo && v <= hi);
        }
        for n in grid.collar_node_list() {
            let p = grid.point(n);
            assert_eq!(h(&p, 0.25), s.v(&p, 0.25));
        }
        let csv = reference_csv(&s, &grid, 0.0);
        assert_eq!(csv.lines().count(), grid.len() + 1);
    }

    #[test]
    fn surrogate_reproduces_hopf_cole() {
        // with constant μ the surrogate must agree with the exact solution
        let s = standard();
        let spec = SurrogateSpec {
            mu: Arc::new(|_| 1.0),
            initial: Arc::new(move |x| s.v(x, 0.0)),
            half_width: 8.0,
            cells: 320,
            horizon: 0.25,
            snapshot_dt: 0.005,
        };
        let sur = FdSurrogate::solve(&spec).unwrap();
        let mut worst = 0.0f64;
        for k in 0..=40 {
            let x = -1.2 + 0.06 * k as f64 + 0.0013;
            for &t in &[0.0, 0.0731, 0.25] {
                worst = worst.max((sur.value(&[x], t) - s.v(&[x], t)).abs());
            }
        }
        assert!(worst < 1e-6, "worst {worst}");
        assert!(sur.error_estimate() < 1e-6);
        assert!(worst < 20.0 * sur.error_estimate() + 1e-8);
    }
}
