//! The nonlinearity class: functions 𝒢(x, s) whose flux `s·𝒢(x, s)` is
//! strongly monotone with slopes in `[alpha1, alpha2]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::report::PropertyReport;

/// `3√3/16`, the half-width of the monotonicity cone of 𝒢_μ.
pub const KPZ_CONE: f64 = 0.324_759_526_419_164_5;

/// Node-dependent coefficient μ(x).
#[derive(Debug, Clone, PartialEq)]
pub enum MuField {
    Constant(f64),
    /// One value per grid node.
    Sampled(Vec<f64>),
}

impl MuField {
    /// μ at node `x`. Constant fields ignore the index.
    #[inline]
    pub fn at(&self, x: usize) -> f64 {
        match self {
            MuField::Constant(m) => *m,
            MuField::Sampled(v) => v[x],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            MuField::Constant(m) => m.abs(),
            MuField::Sampled(v) => v.iter().fold(0.0, |a, m| a.max(m.abs())),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            MuField::Constant(m) => *m,
            MuField::Sampled(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            MuField::Constant(m) => *m,
            MuField::Sampled(v) => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            MuField::Constant(_) => None,
            MuField::Sampled(v) => Some(v.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityKind {
    /// 𝒢 ≡ 1, the linear nonlocal heat equation.
    Identity,
    /// `𝒢_μ(x, s) = 1 + μ(x) s / (2(1 + μ(x)² s²))`.
    Kpz(MuField),
    /// `𝒢(s) = a + b·clamp(s, -cap, cap)`; `cap = None` leaves it unbounded
    /// (outside the class, for fault injection).
    Affine {
        intercept: f64,
        slope: f64,
        cap: Option<f64>,
    },
}

/// Which one-sided flux bound holds, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `s·𝒢(x, s) ≤ s`: mass is nonincreasing.
    Absorption,
    /// `s·𝒢(x, s) ≥ s`: mass is nondecreasing.
    Reaction,
    /// Both bounds hold (𝒢 ≡ 1 at the flux level).
    Neutral,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    alpha1: f64,
    alpha2: f64,
}

impl Nonlinearity {
    pub fn identity() -> Self {
        Self {
            kind: NonlinearityKind::Identity,
            alpha1: 1.0,
            alpha2: 1.0,
        }
    }

    pub fn kpz(mu: MuField) -> Result<Self> {
        let finite = match &mu {
            MuField::Constant(m) => m.is_finite(),
            MuField::Sampled(v) => v.iter().all(|m| m.is_finite()),
        };
        if !finite {
            return Err(Error::Config("mu must be finite".into()));
        }
        Ok(Self {
            kind: NonlinearityKind::Kpz(mu),
            alpha1: 1.0 - KPZ_CONE,
            alpha2: 1.0 + KPZ_CONE,
        })
    }

    pub fn kpz_constant(mu: f64) -> Result<Self> {
        Self::kpz(MuField::Constant(mu))
    }

    /// Capped affine 𝒢. Its flux slopes lie in `a ∓ 2|b|·cap`.
    pub fn affine_capped(intercept: f64, slope: f64, cap: f64) -> Result<Self> {
        if !(cap > 0.0) {
            return Err(Error::NonPositive {
                what: "cap",
                value: cap,
            });
        }
        let spread = 2.0 * slope.abs() * cap;
        let alpha1 = intercept - spread;
        if !(alpha1 > 0.0) {
            return Err(Error::Config(format!(
                "affine nonlinearity leaves the class: alpha1 = {alpha1}"
            )));
        }
        Ok(Self {
            kind: NonlinearityKind::Affine {
                intercept,
                slope,
                cap: Some(cap),
            },
            alpha1,
            alpha2: intercept + spread,
        })
    }

    /// Uncapped affine 𝒢 with caller-declared bounds. Not in the class for
    /// `slope != 0`; used to exercise [`certify_class`].
    pub fn affine_declared(intercept: f64, slope: f64, alpha1: f64, alpha2: f64) -> Self {
        Self {
            kind: NonlinearityKind::Affine {
                intercept,
                slope,
                cap: None,
            },
            alpha1,
            alpha2,
        }
    }

    /// Overrides the declared cone. The evaluation is unchanged, so an
    /// understated `alpha2` makes [`certify_class`] report violations.
    pub fn with_declared_bounds(mut self, alpha1: f64, alpha2: f64) -> Self {
        self.alpha1 = alpha1;
        self.alpha2 = alpha2;
        self
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    /// Number of nodes a sampled μ expects, if any.
    pub fn node_count(&self) -> Option<usize> {
        match &self.kind {
            NonlinearityKind::Kpz(mu) => mu.len(),
            _ => None,
        }
    }

    pub fn mu_sup_norm(&self) -> f64 {
        match &self.kind {
            NonlinearityKind::Kpz(mu) => mu.sup_norm(),
            _ => 0.0,
        }
    }

    /// 𝒢(x, s).
    #[inline]
    pub fn g(&self, x: usize, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Identity => 1.0,
            NonlinearityKind::Kpz(mu) => {
                let m = mu.at(x);
                let ms = m * s;
                1.0 + ms / (2.0 * (1.0 + ms * ms))
            }
            NonlinearityKind::Affine {
                intercept,
                slope,
                cap,
            } => {
                let c = match cap {
                    Some(c) => s.clamp(-c, *c),
                    None => s,
                };
                intercept + slope * c
            }
        }
    }

    /// ∂𝒢/∂s at (x, s).
    pub fn g_prime(&self, x: usize, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Identity => 0.0,
            NonlinearityKind::Kpz(mu) => {
                let m = mu.at(x);
                let ms2 = m * m * s * s;
                0.5 * m * (1.0 - ms2) / ((1.0 + ms2) * (1.0 + ms2))
            }
            NonlinearityKind::Affine { slope, cap, .. } => match cap {
                Some(c) if s.abs() > *c => 0.0,
                _ => *slope,
            },
        }
    }

    /// `s·𝒢(x, s)`.
    #[inline]
    pub fn flux(&self, x: usize, s: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Identity => s,
            NonlinearityKind::Kpz(mu) => {
                let m = mu.at(x);
                let ms = m * s;
                s + 0.5 * ms * s / (1.0 + ms * ms)
            }
            NonlinearityKind::Affine { .. } => s * self.g(x, s),
        }
    }

    /// Flux difference quotient, extended by the derivative on the diagonal.
    pub fn psi(&self, x: usize, s: f64, sigma: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Identity => 1.0,
            NonlinearityKind::Kpz(mu) => {
                let m = mu.at(x);
                let a = 1.0 + m * m * s * s;
                let b = 1.0 + m * m * sigma * sigma;
                1.0 + m * (s + sigma) / (2.0 * (a * b))
            }
            NonlinearityKind::Affine { .. } => {
                if s == sigma {
                    self.g_prime(x, s) * s + self.g(x, s)
                } else {
                    (self.flux(x, s) - self.flux(x, sigma)) / (s - sigma)
                }
            }
        }
    }

    /// `2 ∂𝒢/∂s(x, 0) / 𝒢(x, 0)`, the drift coefficient of the local limit.
    pub fn mu_of(&self, x: usize) -> f64 {
        match &self.kind {
            NonlinearityKind::Kpz(mu) => mu.at(x),
            _ => 2.0 * self.g_prime(x, 0.0) / self.g(x, 0.0),
        }
    }

    /// Orientation over the whole field (constant fields decide directly).
    pub fn orientation(&self) -> Orientation {
        match &self.kind {
            NonlinearityKind::Identity => Orientation::Neutral,
            NonlinearityKind::Kpz(mu) => {
                let (lo, hi) = (mu.min(), mu.max());
                if lo == 0.0 && hi == 0.0 {
                    Orientation::Neutral
                } else if hi <= 0.0 {
                    Orientation::Absorption
                } else if lo >= 0.0 {
                    Orientation::Reaction
                } else {
                    Orientation::Mixed
                }
            }
            NonlinearityKind::Affine { slope, .. } => {
                // (𝒢 - 1)s has the sign of slope·s² only when intercept = 1
                if *slope == 0.0 {
                    Orientation::Neutral
                } else if *slope < 0.0 {
                    Orientation::Absorption
                } else {
                    Orientation::Reaction
                }
            }
        }
    }
}

/// Sampling box for [`certify_class`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub half_width: f64,
    /// Magnitude of the extra tail samples.
    pub tail: f64,
    /// Fraction of samples drawn on the diagonal `s = σ`.
    pub diagonal_fraction: f64,
}

impl SampleBox {
    /// `[-10/max(‖μ‖∞, 1), 10/max(‖μ‖∞, 1)]` with tails at ±10³.
    pub fn default_for(g: &Nonlinearity) -> Self {
        Self {
            half_width: 10.0 / g.mu_sup_norm().max(1.0),
            tail: 1e3,
            diagonal_fraction: 0.05,
        }
    }
}

pub const CLASS_TOLERANCE: f64 = 1e-12;

/// Samples the flux difference quotient and reports its empirical range and
/// any excursion outside `[alpha1, alpha2]` beyond 1e-12.
pub fn certify_class(g: &Nonlinearity, sample_count: usize, seed: u64) -> PropertyReport {
    certify_class_in(g, sample_count, seed, SampleBox::default_for(g))
}

pub fn certify_class_in(
    g: &Nonlinearity,
    sample_count: usize,
    seed: u64,
    bounds: SampleBox,
) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("nonlinearity-class");
    let nodes = g.node_count().unwrap_or(1).max(1);
    let w = bounds.half_width;
    let tails = [-bounds.tail, bounds.tail];
    for i in 0..sample_count {
        let x = rng.gen_range(0..nodes);
        let s: f64 = rng.gen_range(-w..=w);
        let sigma = if rng.gen::<f64>() < bounds.diagonal_fraction {
            s
        } else if i % 64 == 0 {
            tails[(i / 64) % 2]
        } else {
            rng.gen_range(-w..=w)
        };
        let q = g.psi(x, s, sigma);
        report.record(q);
        let excess = (g.alpha1() - q).max(q - g.alpha2());
        if !q.is_finite() || excess > CLASS_TOLERANCE {
            report.violation(if q.is_finite() { excess } else { f64::INFINITY });
        }
    }
    report
}

/// `4(q - 1)/q²`.
pub fn elementary_constant(q: f64) -> f64 {
    4.0 * (q - 1.0) / (q * q)
}

/// Samples `(a - b)(a^{q-1} - b^{q-1}) ≥ c(q)(a^{q/2} - b^{q/2})²` for
/// `a, b ≥ 0`, `q ∈ [1, 8]`. Reports the slack `lhs - rhs`, relative to the
/// magnitude of the terms.
pub fn check_elementary_inequality(sample_count: usize, seed: u64) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PropertyReport::new("power-difference-inequality");
    for _ in 0..sample_count {
        let q: f64 = rng.gen_range(1.0..=8.0);
        // log-uniform magnitudes cover many scales
        let a = if rng.gen::<f64>() < 0.05 {
            0.0
        } else {
            10f64.powf(rng.gen_range(-3.0..3.0))
        };
        let b = if rng.gen::<f64>() < 0.2 {
            // near-diagonal pairs, where both sides are small
            a * (1.0 + rng.gen_range(-1e-3..1e-3))
        } else {
            10f64.powf(rng.gen_range(-3.0..3.0))
        };
        let lhs = (a - b) * (a.powf(q - 1.0) - b.powf(q - 1.0));
        let rhs = elementary_constant(q) * (a.powf(q / 2.0) - b.powf(q / 2.0)).powi(2);
        let scale = a.max(b).powf(q).max(f64::MIN_POSITIVE);
        let slack = (lhs - rhs) / scale;
        report.record(slack);
        if slack < -CLASS_TOLERANCE {
            report.violation(-slack);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_constant_matches_closed_form() {
        assert!((KPZ_CONE - 3.0 * 3f64.sqrt() / 16.0).abs() < 1e-16);
    }

    #[test]
    fn cone_maximizer_by_grid_search() {
        // (|x| + |y|) / ((1 + x²)(1 + y²)) peaks at x = y = 1/√3 with value 3√3/8
        let f = |x: f64, y: f64| (x.abs() + y.abs()) / ((1.0 + x * x) * (1.0 + y * y));
        let (mut best, mut arg) = (0.0, (0.0, 0.0));
        for i in 0..=2000 {
            for j in 0..=2000 {
                let (x, y) = (i as f64 * 1e-3, j as f64 * 1e-3);
                if f(x, y) > best {
                    best = f(x, y);
                    arg = (x, y);
                }
            }
        }
        let r = 1.0 / 3f64.sqrt();
        assert!((arg.0 - r).abs() < 2e-3 && (arg.1 - r).abs() < 2e-3);
        assert!((best - 3.0 * 3f64.sqrt() / 8.0).abs() < 1e-6);
        // KPZ_CONE is half that maximum
        assert!((best / 2.0 - KPZ_CONE).abs() < 1e-6);
    }

    #[test]
    fn g_examples() {
        let g = Nonlinearity::kpz_constant(1.0).unwrap();
        assert_eq!(g.g(0, 0.0), 1.0);
        assert!((g.g(0, 1.0) - 1.25).abs() < 1e-15);
        let id = Nonlinearity::identity();
        assert_eq!(id.g(3, 7.0), 1.0);
        assert_eq!(g.alpha1(), 1.0 - KPZ_CONE);
        assert_eq!(g.alpha2(), 1.0 + KPZ_CONE);
    }

    #[test]
    fn g_stays_in_three_quarters_five_quarters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let mu: f64 = rng.gen_range(-50.0..50.0);
            let s: f64 = rng.gen_range(-100.0..100.0);
            let g = Nonlinearity::kpz_constant(mu).unwrap();
            let v = g.g(0, s);
            assert!((0.75..=1.25).contains(&v), "mu {mu} s {s} -> {v}");
        }
    }

    #[test]
    fn flux_difference_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let k: f64 = rng.gen_range(-5.0..5.0);
            let p: f64 = rng.gen_range(-5.0..5.0);
            let q: f64 = rng.gen_range(-5.0..5.0);
            let g = Nonlinearity::kpz_constant(k).unwrap();
            let lhs = g.flux(0, p) - g.flux(0, q);
            let rhs = (p - q)
                * (1.0 + k * (p + q) / (2.0 * (1.0 + k * k * p * p) * (1.0 + k * k * q * q)));
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn flux_orientation_by_sign_of_mu() {
        let neg = Nonlinearity::kpz_constant(-0.7).unwrap();
        let pos = Nonlinearity::kpz_constant(0.7).unwrap();
        for i in -200..=200 {
            let s = f64::from(i) * 0.05;
            assert!(neg.flux(0, s) <= s);
            assert!(pos.flux(0, s) >= s);
        }
        assert_eq!(neg.flux(0, 0.0), 0.0);
        assert_eq!(neg.orientation(), Orientation::Absorption);
        assert_eq!(pos.orientation(), Orientation::Reaction);
        assert_eq!(Nonlinearity::identity().orientation(), Orientation::Neutral);
    }

    #[test]
    fn psi_examples() {
        let k = 2.5;
        let g = Nonlinearity::kpz_constant(k).unwrap();
        assert_eq!(g.psi(0, 0.8, -0.8), 1.0);
        let s = 1.0 / (3f64.sqrt() * k);
        assert!((g.psi(0, s, s) - (1.0 + KPZ_CONE)).abs() < 1e-15);
        assert_eq!(Nonlinearity::identity().psi(0, 3.0, -1.0), 1.0);
    }

    #[test]
    fn psi_is_continuous_across_the_diagonal() {
        let g = Nonlinearity::kpz_constant(1.3).unwrap();
        let capped = Nonlinearity::affine_capped(1.0, 0.2, 1.0).unwrap();
        for s in [-2.0, -0.3, 0.0, 0.4, 1.7] {
            for d in [1e-4, 1e-6] {
                // derivative formula agrees with the quotient limit
                let diag = g.g_prime(0, s) * s + g.g(0, s);
                assert!((g.psi(0, s + d, s) - diag).abs() < 10.0 * d);
                assert!((g.psi(0, s, s) - diag).abs() < 1e-14);
                if s.abs() != 1.0 {
                    let cd = capped.psi(0, s, s);
                    assert!((capped.psi(0, s + d, s) - cd).abs() < 10.0 * d);
                }
            }
        }
    }

    #[test]
    fn psi_symmetric_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kinds = [
            Nonlinearity::kpz_constant(-1.7).unwrap(),
            Nonlinearity::affine_capped(2.0, 0.3, 1.5).unwrap(),
        ];
        for g in &kinds {
            for _ in 0..1000 {
                let s: f64 = rng.gen_range(-10.0..10.0);
                let t: f64 = rng.gen_range(-10.0..10.0);
                assert_eq!(g.psi(0, s, t), g.psi(0, t, s));
            }
        }
    }

    #[test]
    fn mu_of_examples() {
        assert_eq!(Nonlinearity::identity().mu_of(0), 0.0);
        let g = Nonlinearity::kpz_constant(-0.4).unwrap();
        assert_eq!(g.mu_of(12), -0.4);
        // from the derivative definition, independently of the stored μ
        assert!((2.0 * g.g_prime(0, 0.0) / g.g(0, 0.0) + 0.4).abs() < 1e-15);
        let field = MuField::Sampled(vec![0.1, -2.0, 3.5]);
        let g = Nonlinearity::kpz(field.clone()).unwrap();
        for i in 0..3 {
            assert_eq!(g.mu_of(i), field.at(i));
            assert!((2.0 * g.g_prime(i, 0.0) / g.g(i, 0.0) - field.at(i)).abs() < 1e-14);
        }
        let affine = Nonlinearity::affine_capped(2.0, 0.5, 0.5).unwrap();
        assert!((affine.mu_of(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn certify_identity_is_exact() {
        let r = certify_class(&Nonlinearity::identity(), 1000, 1);
        assert!(r.passed());
        assert_eq!(r.min, 1.0);
        assert_eq!(r.max, 1.0);
    }

    #[test]
    fn certify_kpz() {
        let g = Nonlinearity::kpz_constant(1.0).unwrap();
        let r = certify_class(&g, 100_000, 42);
        assert!(r.passed(), "{}", r.verdict_line());
        assert!(r.min >= 1.0 - KPZ_CONE - 1e-12);
        assert!(r.max <= 1.0 + KPZ_CONE + 1e-12);
        // the box is sized so the extremes are approached
        assert!(r.max > 1.0 + 0.99 * KPZ_CONE);
    }

    #[test]
    fn certify_flags_unbounded_affine() {
        let g = Nonlinearity::affine_declared(1.0, 1.0, 0.5, 2.0);
        let r = certify_class(&g, 1000, 3);
        assert!(!r.passed());
        assert!(r.max > 2.0);
    }

    #[test]
    fn certify_flags_understated_alpha2() {
        let g = Nonlinearity::kpz_constant(1.0)
            .unwrap()
            .with_declared_bounds(1.0 - KPZ_CONE, 1.2);
        assert!(!certify_class(&g, 10_000, 9).passed());
    }

    #[test]
    fn affine_capped_rejects_leaving_the_class() {
        assert!(Nonlinearity::affine_capped(1.0, 1.0, 1.0).is_err());
        let g = Nonlinearity::affine_capped(1.0, 0.2, 1.0).unwrap();
        assert!(certify_class(&g, 10_000, 2).passed());
    }

    #[test]
    fn flux_monotone_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let g = Nonlinearity::kpz_constant(1.0).unwrap();
        for _ in 0..100_000 {
            let a: f64 = rng.gen_range(-20.0..20.0);
            let b: f64 = rng.gen_range(-20.0..20.0);
            let (s, sigma) = if a > b { (a, b) } else { (b, a) };
            if s == sigma {
                continue;
            }
            let d = g.flux(0, s) - g.flux(0, sigma);
            let tol = 1e-12 * (1.0 + s.abs() + sigma.abs());
            assert!(d >= g.alpha1() * (s - sigma) - tol);
            assert!(d <= g.alpha2() * (s - sigma) + tol);
        }
    }

    #[test]
    fn elementary_inequality_holds() {
        let r = check_elementary_inequality(100_000, 17);
        assert!(r.passed(), "{}", r.verdict_line());
        assert!(r.min >= -1e-12);
    }

    #[test]
    fn elementary_constant_values() {
        assert_eq!(elementary_constant(1.0), 0.0);
        assert_eq!(elementary_constant(2.0), 1.0);
        assert!((elementary_constant(4.0) - 0.75).abs() < 1e-16);
    }
}
