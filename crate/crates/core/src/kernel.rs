//! Admissible convolution kernels: nonnegative, radial, compactly supported,
//! unit mass, with finite second moment along a coordinate axis.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::pairwise_sum;

/// Minimum lattice points per support radius accepted by [`discretize`].
pub const MIN_POINTS_PER_RADIUS: f64 = 4.0;

/// Radial shape of a kernel, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Indicator of the closed ball of radius ρ.
    Uniform,
    /// `(1 - |z|²/ρ²)²` on the ball.
    PolynomialBump,
    /// `1 - |z|/ρ`, one dimension only.
    Triangular,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Uniform => "uniform",
            Profile::PolynomialBump => "polynomial-bump",
            Profile::Triangular => "triangular",
        }
    }

    /// Unnormalized shape at `s = |z|/ρ`, for `s` in `[0, 1]`.
    fn shape(self, s: f64) -> f64 {
        match self {
            Profile::Uniform => 1.0,
            Profile::PolynomialBump => {
                let t = 1.0 - s * s;
                t * t
            }
            Profile::Triangular => 1.0 - s,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Profile::Uniform),
            "polynomial-bump" | "bump" => Ok(Profile::PolynomialBump),
            "triangular" => Ok(Profile::Triangular),
            other => Err(Error::Config(format!("unknown kernel profile `{other}`"))),
        }
    }
}

/// Anything that behaves like a kernel J on R^N.
pub trait Kernel {
    fn dim(&self) -> usize;
    fn support_radius(&self) -> f64;
    /// J as a function of `|z|`.
    fn eval_radial(&self, r: f64) -> f64;
    /// `C(J) = ∫ J(z) z_N² dz`.
    fn second_moment(&self) -> f64;

    fn eval(&self, z: &[f64]) -> f64 {
        let r = z.iter().map(|c| c * c).sum::<f64>().sqrt();
        self.eval_radial(r)
    }
}

/// A normalized kernel of unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    profile: Profile,
    dim: usize,
    radius: f64,
    normalization: f64,
    second_moment: f64,
}

/// Builds a unit-mass kernel. Normalizations and second moments are closed
/// forms for every supported profile.
pub fn make_kernel(profile: Profile, dim: usize, radius: f64) -> Result<KernelSpec> {
    if !(1..=2).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::NonPositive {
            what: "support radius",
            value: radius,
        });
    }
    let r2 = radius * radius;
    let (normalization, second_moment) = match (profile, dim) {
        (Profile::Uniform, 1) => (1.0 / (2.0 * radius), r2 / 3.0),
        (Profile::Uniform, 2) => (1.0 / (PI * r2), r2 / 4.0),
        // ∫(1-s²)² ds over [-1,1] = 16/15, ∫ s²(1-s²)² ds = 16/105
        (Profile::PolynomialBump, 1) => (15.0 / (16.0 * radius), r2 / 7.0),
        // 2π∫(1-r²)² r dr = π/3, π∫ r³(1-r²)² dr = π/24
        (Profile::PolynomialBump, 2) => (3.0 / (PI * r2), r2 / 8.0),
        (Profile::Triangular, 1) => (1.0 / radius, r2 / 6.0),
        (Profile::Triangular, d) => {
            return Err(Error::UnsupportedProfile {
                profile: profile.name(),
                dim: d,
            })
        }
        _ => unreachable!(),
    };
    Ok(KernelSpec {
        profile,
        dim,
        radius,
        normalization,
        second_moment,
    })
}

impl KernelSpec {
    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Sup norm of J, attained at the origin for every profile.
    pub fn max_value(&self) -> f64 {
        self.normalization
    }

    pub fn rescale(&self, epsilon: f64) -> Result<RescaledKernel> {
        rescale(self, epsilon)
    }
}

impl Kernel for KernelSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn support_radius(&self) -> f64 {
        self.radius
    }

    fn eval_radial(&self, r: f64) -> f64 {
        if r > self.radius {
            return 0.0;
        }
        self.normalization * self.profile.shape(r / self.radius)
    }

    fn second_moment(&self) -> f64 {
        self.second_moment
    }
}

/// `J_ε(z) = ε^{-N} J(z/ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledKernel {
    base: KernelSpec,
    epsilon: f64,
}

pub fn rescale(base: &KernelSpec, epsilon: f64) -> Result<RescaledKernel> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::NonPositive {
            what: "epsilon",
            value: epsilon,
        });
    }
    Ok(RescaledKernel {
        base: *base,
        epsilon,
    })
}

impl RescaledKernel {
    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Kernel for RescaledKernel {
    fn dim(&self) -> usize {
        self.base.dim
    }

    fn support_radius(&self) -> f64 {
        self.epsilon * self.base.radius
    }

    fn eval_radial(&self, r: f64) -> f64 {
        self.base.eval_radial(r / self.epsilon) / self.epsilon.powi(self.base.dim as i32)
    }

    fn second_moment(&self) -> f64 {
        self.epsilon * self.epsilon * self.base.second_moment
    }
}

/// How lattice weights are normalized after sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Renormalization {
    /// `h^N J(z_j)` as sampled.
    Raw,
    /// Scaled to unit sum; the operator uses the continuum `C(J)`.
    #[default]
    Mass,
    /// Unit sum, and the operator uses the lattice second moment `C_h(J)`.
    MassMoment,
}

/// Lattice quadrature of a kernel: offsets in units of `h` and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    dim: usize,
    h: f64,
    support_radius: f64,
    radius_nodes: usize,
    offsets: Vec<[i32; 2]>,
    weights: Vec<f64>,
    mode: Renormalization,
    mass: f64,
    second_moment: f64,
    continuum_second_moment: f64,
}

/// Samples `kernel` on the lattice `hZ^N`. Nodes on the support boundary get
/// the kernel's pointwise value there.
pub fn discretize<K: Kernel + ?Sized>(
    kernel: &K,
    h: f64,
    mode: Renormalization,
) -> Result<DiscreteKernel> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::NonPositive {
            what: "grid spacing",
            value: h,
        });
    }
    let dim = kernel.dim();
    let radius = kernel.support_radius();
    let points = radius / h;
    if points < MIN_POINTS_PER_RADIUS * (1.0 - 1e-12) {
        return Err(Error::UnderResolved {
            radius,
            h,
            points,
            required_h: radius / MIN_POINTS_PER_RADIUS,
        });
    }
    let r_lat = points * (1.0 + 1e-12);
    let r_nodes = r_lat.floor() as i32;
    let r_lat2 = r_lat * r_lat;
    let cell = h.powi(dim as i32);

    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    let ys: Vec<i32> = if dim == 2 {
        (-r_nodes..=r_nodes).collect()
    } else {
        vec![0]
    };
    for &j in &ys {
        for i in -r_nodes..=r_nodes {
            let d2 = f64::from(i * i + j * j);
            if d2 > r_lat2 {
                continue;
            }
            // clamp so boundary nodes read the closed-support value
            let r = (d2.sqrt() * h).min(radius);
            offsets.push([i, j]);
            weights.push(cell * kernel.eval_radial(r));
        }
    }

    let center = offsets
        .iter()
        .position(|o| *o == [0, 0])
        .expect("origin is always a lattice node");
    if mode != Renormalization::Raw {
        let raw_mass = pairwise_sum(&weights);
        for w in &mut weights {
            *w /= raw_mass;
        }
        // the center weight closes the sum: with the rest summing to at
        // least 1/2, 1 - rest is exact and rest + (1 - rest) == 1
        weights[center] = 1.0 - sum_except(&weights, center);
        for _ in 0..64 {
            let s = stencil_sum(&weights, center);
            if s == 1.0 {
                break;
            }
            let c = weights[center];
            weights[center] = if s < 1.0 { c.next_up() } else { c.next_down() };
        }
    }

    let mass = stencil_sum(&weights, center);
    let axis = dim - 1;
    let moments: Vec<f64> = offsets
        .iter()
        .zip(&weights)
        .map(|(o, w)| {
            let z = f64::from(o[axis]) * h;
            w * z * z
        })
        .collect();
    let second_moment = pairwise_sum(&moments);

    Ok(DiscreteKernel {
        dim,
        h,
        support_radius: radius,
        radius_nodes: r_nodes as usize,
        offsets,
        weights,
        mode,
        mass,
        second_moment,
        continuum_second_moment: kernel.second_moment(),
    })
}

impl DiscreteKernel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Stencil half-width in lattice units.
    pub fn radius_nodes(&self) -> usize {
        self.radius_nodes
    }

    pub fn offsets(&self) -> &[[i32; 2]] {
        &self.offsets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mode(&self) -> Renormalization {
        self.mode
    }

    /// Σ weights, off-center weights first and the center last.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `C_h(J) = Σ w_j (z_j)_N²`, in physical units.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn continuum_second_moment(&self) -> f64 {
        self.continuum_second_moment
    }

    /// The second moment entering the rescaled operator's constant:
    /// lattice moment in mass+moment mode, continuum moment otherwise.
    pub fn operator_second_moment(&self) -> f64 {
        match self.mode {
            Renormalization::MassMoment => self.second_moment,
            _ => self.continuum_second_moment,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.dim == 1 {
            out.push_str("offset,weight\n");
            for (o, w) in self.offsets.iter().zip(&self.weights) {
                let _ = writeln!(out, "{},{:e}", o[0], w);
            }
        } else {
            out.push_str("offset_x,offset_y,weight\n");
            for (o, w) in self.offsets.iter().zip(&self.weights) {
                let _ = writeln!(out, "{},{},{:e}", o[0], o[1], w);
            }
        }
        out
    }
}

fn sum_except(weights: &[f64], skip: usize) -> f64 {
    pairwise_sum(&weights[..skip]) + pairwise_sum(&weights[skip + 1..])
}

/// Fixed-order stencil sum: off-center weights first, center last.
fn stencil_sum(weights: &[f64], center: usize) -> f64 {
    sum_except(weights, center) + weights[center]
}

/// Periodic DFT of the zero-padded discrete kernel on a grid of `shape`
/// points (one entry per axis). Returned values are real because the kernel
/// is even; layout is row-major with the last axis fastest, in standard DFT
/// frequency order.
pub fn fourier_symbol(dk: &DiscreteKernel, shape: &[usize]) -> Result<Vec<f64>> {
    if shape.len() != dk.dim {
        return Err(Error::Mismatch(format!(
            "kernel is {}-dimensional, grid shape has {} axes",
            dk.dim,
            shape.len()
        )));
    }
    let width = 2 * dk.radius_nodes + 1;
    for (axis, &n) in shape.iter().enumerate() {
        if n < width {
            return Err(Error::GridTooSmall {
                axis,
                size: n,
                width,
            });
        }
    }
    let total: usize = shape.iter().product();
    let mut buf = vec![Complex::new(0.0, 0.0); total];
    for (o, w) in dk.offsets.iter().zip(&dk.weights) {
        let idx = periodic_index(o, shape);
        buf[idx].re += w;
    }
    fft_nd(&mut buf, shape, false);
    Ok(buf.into_iter().map(|c| c.re).collect())
}

/// Row-major index of a lattice offset on a periodic grid. In 2D, offset
/// component 0 runs along the fast (last) axis.
pub(crate) fn periodic_index(o: &[i32; 2], shape: &[usize]) -> usize {
    let wrap = |v: i32, n: usize| v.rem_euclid(n as i32) as usize;
    match shape.len() {
        1 => wrap(o[0], shape[0]),
        _ => wrap(o[1], shape[0]) * shape[1] + wrap(o[0], shape[1]),
    }
}

/// In-place N-d FFT over a row-major buffer.
pub(crate) fn fft_nd(buf: &mut [Complex<f64>], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::new();
    match shape.len() {
        1 => {
            let fft = if inverse {
                planner.plan_fft_inverse(shape[0])
            } else {
                planner.plan_fft_forward(shape[0])
            };
            fft.process(buf);
        }
        _ => {
            let (rows, cols) = (shape[0], shape[1]);
            let row_fft = if inverse {
                planner.plan_fft_inverse(cols)
            } else {
                planner.plan_fft_forward(cols)
            };
            row_fft.process(buf);
            let col_fft = if inverse {
                planner.plan_fft_inverse(rows)
            } else {
                planner.plan_fft_forward(rows)
            };
            let mut column = vec![Complex::new(0.0, 0.0); rows];
            for c in 0..cols {
                for r in 0..rows {
                    column[r] = buf[r * cols + c];
                }
                col_fft.process(&mut column);
                for r in 0..rows {
                    buf[r * cols + c] = column[r];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Adaptive Simpson on [a, b]; independent of the closed forms above.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn step<F: Fn(f64) -> f64>(
            f: &F,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let diff = left + right - whole;
            if depth == 0 || diff.abs() <= 15.0 * tol {
                return left + right + diff / 15.0;
            }
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        step(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    /// (mass, second moment) by quadrature of the pointwise kernel.
    fn quadrature_moments<K: Kernel>(k: &K) -> (f64, f64) {
        let r = k.support_radius();
        match k.dim() {
            1 => {
                let mass = simpson(&|z| k.eval(&[z]), -r, r, 1e-14);
                let m2 = simpson(&|z| k.eval(&[z]) * z * z, -r, r, 1e-14);
                (mass, m2)
            }
            _ => {
                let mass = simpson(&|s| 2.0 * PI * s * k.eval_radial(s), 0.0, r, 1e-14);
                // ∫ z_2² J = ∫ r² sin²θ J(r) r dr dθ = π ∫ r³ J(r) dr
                let m2 = simpson(&|s| PI * s * s * s * k.eval_radial(s), 0.0, r, 1e-14);
                (mass, m2)
            }
        }
    }

    fn all_kernels(radius: f64) -> Vec<KernelSpec> {
        vec![
            make_kernel(Profile::Uniform, 1, radius).unwrap(),
            make_kernel(Profile::Uniform, 2, radius).unwrap(),
            make_kernel(Profile::PolynomialBump, 1, radius).unwrap(),
            make_kernel(Profile::PolynomialBump, 2, radius).unwrap(),
            make_kernel(Profile::Triangular, 1, radius).unwrap(),
        ]
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for k in all_kernels(1.3) {
            let (mass, m2) = quadrature_moments(&k);
            assert!((mass - 1.0).abs() < 1e-10, "{:?} mass {mass}", k.profile());
            let rel = (m2 - k.second_moment()).abs() / k.second_moment();
            assert!(rel < 1e-10, "{:?} dim {} m2 {m2}", k.profile(), k.dim());
        }
    }

    #[test]
    fn uniform_1d_examples() {
        let k = make_kernel(Profile::Uniform, 1, 1.0).unwrap();
        assert_eq!(k.eval(&[0.3]), 0.5);
        assert_eq!(k.eval(&[1.0]), 0.5);
        assert_eq!(k.eval(&[1.01]), 0.0);
        assert!((k.second_moment() - 1.0 / 3.0).abs() < 1e-15);

        let k2 = make_kernel(Profile::Uniform, 1, 2.0).unwrap();
        assert_eq!(k2.eval(&[-1.5]), 0.25);
        let (mass, _) = quadrature_moments(&k2);
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangular_1d_example() {
        let k = make_kernel(Profile::Triangular, 1, 1.0).unwrap();
        assert!((k.eval(&[0.25]) - 0.75).abs() < 1e-15);
        // 2∫₀¹(1-z)z² dz = 1/6
        assert!((k.second_moment() - 1.0 / 6.0).abs() < 1e-15);
        assert!(matches!(
            make_kernel(Profile::Triangular, 2, 1.0),
            Err(Error::UnsupportedProfile { .. })
        ));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            make_kernel(Profile::Uniform, 3, 1.0),
            Err(Error::UnsupportedDimension(3))
        ));
        assert!(matches!(
            make_kernel(Profile::Uniform, 1, 0.0),
            Err(Error::NonPositive { .. })
        ));
        let k = make_kernel(Profile::Uniform, 1, 1.0).unwrap();
        assert!(k.rescale(-1.0).is_err());
        assert!(k.rescale(0.0).is_err());
    }

    #[test]
    fn rescaling_examples() {
        let k = make_kernel(Profile::Uniform, 1, 1.0).unwrap();
        let id = k.rescale(1.0).unwrap();
        for z in [-1.2, -0.7, 0.0, 0.4, 1.0] {
            assert_eq!(id.eval(&[z]), k.eval(&[z]));
        }
        assert_eq!(id.second_moment(), k.second_moment());

        let small = k.rescale(0.1).unwrap();
        assert!((small.eval(&[0.05]) - 5.0).abs() < 1e-12);
        assert!((small.eval(&[-0.1]) - 5.0).abs() < 1e-12);
        assert_eq!(small.eval(&[0.11]), 0.0);

        let half = k.rescale(0.5).unwrap();
        assert!((half.second_moment() - 1.0 / 12.0).abs() < 1e-15);
        let (_, m2) = quadrature_moments(&half);
        assert!((m2 - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn rescaled_invariants_all_profiles() {
        for k in all_kernels(0.8) {
            for eps in [0.05, 0.3, 2.0] {
                let r = k.rescale(eps).unwrap();
                let (mass, m2) = quadrature_moments(&r);
                assert!((mass - 1.0).abs() < 1e-10);
                assert!((r.support_radius() - eps * 0.8).abs() < 1e-15);
                let want = eps * eps * k.second_moment();
                assert!((r.second_moment() - want).abs() / want < 1e-10);
                assert!((m2 - want).abs() / want < 1e-10);
            }
        }
    }

    #[test]
    fn discretize_uniform_raw_direct_sum() {
        let k = make_kernel(Profile::Uniform, 1, 1.0).unwrap();
        let dk = discretize(&k, 0.25, Renormalization::Raw).unwrap();
        assert_eq!(dk.len(), 9);
        // nine nodes, each 0.25 * 0.5 (endpoints use the closed-support value)
        assert!((dk.mass() - 1.125).abs() < 1e-15);
        let mass = discretize(&k, 0.25, Renormalization::Mass).unwrap();
        assert_eq!(mass.mass(), 1.0);
    }

    #[test]
    fn discretize_rejects_under_resolved() {
        let k = make_kernel(Profile::Uniform, 1, 1.0).unwrap();
        match discretize(&k, 0.3, Renormalization::Mass) {
            Err(Error::UnderResolved { required_h, .. }) => assert_eq!(required_h, 0.25),
            other => panic!("expected resolution error, got {other:?}"),
        }
        let r = k.rescale(0.1).unwrap();
        assert!(discretize(&r, 0.025, Renormalization::Mass).is_ok());
        assert!(discretize(&r, 0.03, Renormalization::Mass).is_err());
    }

    #[test]
    fn discrete_moment_uniform_converges_first_order() {
        // endpoint nodes carry the full value, so the uniform profile has an
        // O(h) moment error: exactly (1 + h)/3 in mass mode
        let k = make_kernel(Profile::Uniform, 1, 1.0).unwrap();
        let mut errs = Vec::new();
        for h in [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0] {
            let dk = discretize(&k, h, Renormalization::Mass).unwrap();
            assert!((dk.second_moment() - (1.0 + h) / 3.0).abs() < 1e-14);
            errs.push(dk.second_moment() - 1.0 / 3.0);
        }
        let order = (errs[1] / errs[2]).log2();
        assert!((order - 1.0).abs() < 1e-9);
    }

    #[test]
    fn discrete_moment_smooth_profiles_converge_second_order() {
        for profile in [Profile::Triangular, Profile::PolynomialBump] {
            let k = make_kernel(profile, 1, 1.0).unwrap();
            let err = |h: f64| {
                let dk = discretize(&k, h, Renormalization::Mass).unwrap();
                (dk.second_moment() - k.second_moment()).abs()
            };
            let order = (err(1.0 / 16.0) / err(1.0 / 32.0)).log2();
            assert!(order > 1.9, "{profile:?} order {order}");
        }
    }

    #[test]
    fn two_dimensional_stencil_is_symmetric() {
        let k = make_kernel(Profile::Uniform, 2, 1.0).unwrap();
        let dk = discretize(&k, 0.25, Renormalization::Mass).unwrap();
        // lattice points in the closed disc of radius 4
        assert_eq!(dk.len(), 49);
        assert_eq!(dk.mass(), 1.0);
        let m_x: f64 = dk
            .offsets()
            .iter()
            .zip(dk.weights())
            .map(|(o, w)| w * (f64::from(o[0]) * 0.25).powi(2))
            .sum();
        assert!((m_x - dk.second_moment()).abs() < 1e-15);
    }

    #[test]
    fn csv_dump_has_one_row_per_offset() {
        let k = make_kernel(Profile::Triangular, 1, 1.0).unwrap();
        let dk = discretize(&k, 0.25, Renormalization::Raw).unwrap();
        let csv = dk.to_csv();
        assert_eq!(csv.lines().count(), dk.len() + 1);
        assert!(csv.starts_with("offset,weight"));
    }

    #[test]
    fn symbol_basic_properties() {
        let k = make_kernel(Profile::PolynomialBump, 1, 1.0).unwrap();
        let dk = discretize(&k, 0.125, Renormalization::Mass).unwrap();
        let sym = fourier_symbol(&dk, &[64]).unwrap();
        assert!((sym[0] - 1.0).abs() < 1e-12);
        for (i, s) in sym.iter().enumerate() {
            assert!(s.abs() <= sym[0] + 1e-12);
            // even kernel: symbol symmetric in frequency
            assert!((s - sym[(64 - i) % 64]).abs() < 1e-12);
        }
        assert!(matches!(
            fourier_symbol(&dk, &[10]),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn symbol_is_real_for_radial_kernels() {
        let k = make_kernel(Profile::Uniform, 2, 1.0).unwrap();
        let dk = discretize(&k, 0.25, Renormalization::Mass).unwrap();
        let shape = [16, 16];
        let mut buf = vec![Complex::new(0.0, 0.0); 256];
        for (o, w) in dk.offsets().iter().zip(dk.weights()) {
            buf[periodic_index(o, &shape)].re += w;
        }
        fft_nd(&mut buf, &shape, false);
        for c in &buf {
            assert!(c.im.abs() < 1e-13);
        }
        let sym = fourier_symbol(&dk, &shape).unwrap();
        assert!((sym[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symbol_small_frequency_expansion() {
        // Ĵ(ξ) = 1 - ½ C_h(J) ξ² + O(ξ⁴): compare against the lattice moment
        let k = make_kernel(Profile::Uniform, 1, 1.0).unwrap();
        let h = 0.125;
        let dk = discretize(&k, h, Renormalization::Mass).unwrap();
        let n = 4096;
        let sym = fourier_symbol(&dk, &[n]).unwrap();
        for (m, &s) in sym.iter().enumerate().take(4).skip(1) {
            let xi = 2.0 * PI * m as f64 / (n as f64 * h);
            let predicted = 1.0 - 0.5 * dk.second_moment() * xi * xi;
            // remainder bounded by the fourth moment term ξ⁴ Σw z⁴ / 24
            assert!((s - predicted).abs() < xi.powi(4) / 24.0 + 1e-13);
        }
    }

    proptest! {
        #[test]
        fn mass_mode_sums_to_one_exactly(
            radius in 0.05f64..3.0,
            pts in 4.0f64..12.0,
            profile in prop_oneof![Just(Profile::Uniform), Just(Profile::PolynomialBump)],
            dim in 1usize..=2,
        ) {
            let k = make_kernel(profile, dim, radius).unwrap();
            let dk = discretize(&k, radius / pts, Renormalization::Mass).unwrap();
            prop_assert_eq!(dk.mass(), 1.0);
            prop_assert!(dk.weights().iter().all(|w| *w >= 0.0));
            prop_assert!(dk.second_moment() > 0.0);
        }
    }
}
