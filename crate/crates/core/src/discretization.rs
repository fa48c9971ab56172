//! Cartesian grids over a box Ω plus its collar, and the nonlocal operator
//! evaluated on them.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::DiscreteKernel;
use crate::nonlinearity::Nonlinearity;

/// Grids with at least this many nodes evaluate the operator in parallel.
const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Node of the closed box Ω̄.
    Interior,
    /// Node of Ω_J \ Ω̄, where exterior data is prescribed.
    Collar,
}

/// Uniform grid on a box Ω = Π(aᵢ, bᵢ) with a collar of `collar` nodes per
/// side. Nodes are stored row-major with x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    h: f64,
    lo: [f64; 2],
    hi: [f64; 2],
    interior_shape: [usize; 2],
    collar: usize,
    shape: [usize; 2],
    kinds: Vec<NodeKind>,
}

/// Builds the grid for box `bounds` (one `(a, b)` pair per axis) with
/// spacing `h` and a collar wide enough for a kernel of `kernel_radius`.
/// Box sides must be whole multiples of `h`.
pub fn build_grid(bounds: &[(f64, f64)], h: f64, kernel_radius: f64) -> Result<Grid> {
    let dim = bounds.len();
    if !(1..=2).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::NonPositive {
            what: "grid spacing",
            value: h,
        });
    }
    if !(kernel_radius > 0.0) {
        return Err(Error::NonPositive {
            what: "kernel radius",
            value: kernel_radius,
        });
    }
    let collar = ((kernel_radius / h) * (1.0 - 1e-12)).ceil() as usize;
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    let mut interior_shape = [1, 1];
    let mut shape = [1, 1];
    for (axis, &(a, b)) in bounds.iter().enumerate() {
        let length = b - a;
        if !(length > 0.0) {
            return Err(Error::NonPositive {
                what: "box side",
                value: length,
            });
        }
        let cells = length / h;
        let n = cells.round();
        if (cells - n).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::IncommensurateBox { length, h });
        }
        lo[axis] = a;
        hi[axis] = b;
        interior_shape[axis] = n as usize + 1;
        shape[axis] = interior_shape[axis] + 2 * collar;
    }
    let total = shape[0] * shape[1];
    let mut kinds = Vec::with_capacity(total);
    for j in 0..shape[1] {
        for i in 0..shape[0] {
            let inside_x = i >= collar && i < collar + interior_shape[0];
            let inside_y = dim == 1 || (j >= collar && j < collar + interior_shape[1]);
            kinds.push(if inside_x && inside_y {
                NodeKind::Interior
            } else {
                NodeKind::Collar
            });
        }
    }
    Ok(Grid {
        dim,
        h,
        lo,
        hi,
        interior_shape,
        collar,
        shape,
        kinds,
    })
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Nodes per axis including the collar.
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn interior_shape(&self) -> [usize; 2] {
        self.interior_shape
    }

    pub fn collar_nodes(&self) -> usize {
        self.collar
    }

    pub fn collar_width(&self) -> f64 {
        self.collar as f64 * self.h
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim).map(|a| (self.lo[a], self.hi[a])).collect()
    }

    /// `h^N`, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.kinds[node] == NodeKind::Interior
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_interior(i)).collect()
    }

    pub fn collar_node_list(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_interior(i)).collect()
    }

    pub fn interior_count(&self) -> usize {
        self.interior_shape[0] * self.interior_shape[1]
    }

    /// Integer lattice position `(i, j)` of a node.
    pub fn lattice(&self, node: usize) -> [usize; 2] {
        [node % self.shape[0], node / self.shape[0]]
    }

    /// Physical coordinates of a node; the second entry is 0 in 1D.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let [i, j] = self.lattice(node);
        let x = self.lo[0] + (i as f64 - self.collar as f64) * self.h;
        let y = if self.dim == 2 {
            self.lo[1] + (j as f64 - self.collar as f64) * self.h
        } else {
            0.0
        };
        [x, y]
    }

    /// Coordinates as a slice of length `dim`.
    pub fn point(&self, node: usize) -> Vec<f64> {
        let c = self.coords(node);
        c[..self.dim].to_vec()
    }

    /// Flat index displacement of a lattice offset.
    pub fn flat_offset(&self, o: &[i32; 2]) -> isize {
        o[0] as isize + o[1] as isize * self.shape[0] as isize
    }

    /// Interior nodes whose lattice distance to the box boundary is at most
    /// `width` (the outermost ring used for contamination monitoring).
    pub fn boundary_ring(&self, width: f64) -> Vec<usize> {
        let k = (width / self.h * (1.0 + 1e-12)).floor() as usize;
        (0..self.len())
            .filter(|&n| {
                if !self.is_interior(n) {
                    return false;
                }
                let [i, j] = self.lattice(n);
                let near = |p: usize, count: usize| {
                    let q = p - self.collar;
                    q.min(count - 1 - q) <= k
                };
                near(i, self.interior_shape[0])
                    || (self.dim == 2 && near(j, self.interior_shape[1]))
            })
            .collect()
    }

    /// Samples `f` at every node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .map(|n| f(&self.coords(n)[..self.dim]))
            .collect()
    }

    fn check_kernel(&self, dk: &DiscreteKernel) -> Result<()> {
        if dk.dim() != self.dim {
            return Err(Error::Mismatch(format!(
                "kernel dimension {} on a {}-dimensional grid",
                dk.dim(),
                self.dim
            )));
        }
        if (dk.spacing() - self.h).abs() > 1e-12 * self.h {
            return Err(Error::Mismatch(format!(
                "kernel sampled at h = {}, grid has h = {}",
                dk.spacing(),
                self.h
            )));
        }
        if dk.radius_nodes() > self.collar {
            return Err(Error::Mismatch(format!(
                "stencil radius {} nodes exceeds collar of {} nodes",
                dk.radius_nodes(),
                self.collar
            )));
        }
        Ok(())
    }
}

/// Nodal values of u on a grid at time `time`, collar included.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::new(vec![0.0; grid.len()], 0.0)
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: self.values.len(),
            });
        }
        if let Some(node) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { node });
        }
        Ok(())
    }

    /// CSV snapshot: node coordinates and value.
    pub fn to_csv(&self, grid: &Grid) -> String {
        let mut out = String::new();
        if grid.dim() == 1 {
            out.push_str("x,value\n");
        } else {
            out.push_str("x,y,value\n");
        }
        for (n, v) in self.values.iter().enumerate() {
            let c = grid.coords(n);
            if grid.dim() == 1 {
                let _ = writeln!(out, "{:e},{:e}", c[0], v);
            } else {
                let _ = writeln!(out, "{:e},{:e},{:e}", c[0], c[1], v);
            }
        }
        out
    }
}

/// Prefactor of the nonlocal integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OperatorScaling {
    /// Plain convolution equation.
    #[default]
    Unit,
    /// `C(x)/ε²` with `C(x)⁻¹ = ½ C(J) 𝒢(x, 0)`; the kernel passed in is the
    /// rescaled one, so `ε² C(J)` is its (physical) second moment.
    Diffusive,
}

/// The discrete right-hand side
/// `x ↦ scale(x) Σ_j w_j · flux(x, u(x + z_j) - u(x))` on interior nodes.
#[derive(Debug, Clone)]
pub struct NonlocalOperator {
    grid: Grid,
    offsets: Vec<isize>,
    weights: Vec<f64>,
    mass: f64,
    nonlinearity: Nonlinearity,
    scale: Vec<f64>,
    scale_max: f64,
}

impl NonlocalOperator {
    pub fn new(
        grid: &Grid,
        dk: &DiscreteKernel,
        nonlinearity: &Nonlinearity,
        scaling: OperatorScaling,
    ) -> Result<Self> {
        grid.check_kernel(dk)?;
        if let Some(n) = nonlinearity.node_count() {
            if n != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: n,
                });
            }
        }
        let scale: Vec<f64> = match scaling {
            OperatorScaling::Unit => vec![1.0; grid.len()],
            OperatorScaling::Diffusive => {
                let m2 = dk.operator_second_moment();
                (0..grid.len())
                    .map(|x| 2.0 / (m2 * nonlinearity.g(x, 0.0)))
                    .collect()
            }
        };
        let scale_max = (0..grid.len())
            .filter(|&n| grid.is_interior(n))
            .map(|n| scale[n])
            .fold(0.0, f64::max);
        Ok(Self {
            grid: grid.clone(),
            offsets: dk.offsets().iter().map(|o| grid.flat_offset(o)).collect(),
            weights: dk.weights().to_vec(),
            mass: dk.mass(),
            nonlinearity: nonlinearity.clone(),
            scale,
            scale_max,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn stencil_mass(&self) -> f64 {
        self.mass
    }

    pub fn scale(&self, node: usize) -> f64 {
        self.scale[node]
    }

    pub fn scale_max(&self) -> f64 {
        self.scale_max
    }

    /// Lipschitz bound of the right-hand side in the sup norm:
    /// `2 · alpha2 · max scale · stencil mass`.
    pub fn lipschitz_bound(&self) -> f64 {
        2.0 * self.nonlinearity.alpha2() * self.scale_max * self.mass
    }

    #[inline]
    fn node_rhs(&self, u: &[f64], x: usize) -> f64 {
        let ux = u[x];
        let mut acc = 0.0;
        for (off, w) in self.offsets.iter().zip(&self.weights) {
            let y = (x as isize + off) as usize;
            acc += w * self.nonlinearity.flux(x, u[y] - ux);
        }
        self.scale[x] * acc
    }

    /// Writes the right-hand side into `out`; collar entries are zeroed.
    /// `u` must cover every node, collar included.
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.grid.len();
        if u.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: u.len(),
            });
        }
        if out.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: out.len(),
            });
        }
        if let Some(node) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { node });
        }
        let kinds = self.grid.kinds();
        let eval = |(x, o): (usize, &mut f64)| {
            *o = match kinds[x] {
                NodeKind::Interior => self.node_rhs(u, x),
                NodeKind::Collar => 0.0,
            };
        };
        if n >= PARALLEL_THRESHOLD {
            out.par_iter_mut().enumerate().for_each(eval);
        } else {
            out.iter_mut().enumerate().for_each(eval);
        }
        Ok(())
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.grid.len()];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }
}

/// One-shot evaluation of the nonlocal right-hand side for field `u`, whose
/// collar entries hold the exterior data.
pub fn nonlocal_rhs(
    grid: &Grid,
    dk: &DiscreteKernel,
    nonlinearity: &Nonlinearity,
    u: &Field,
    scaling: OperatorScaling,
) -> Result<Field> {
    let op = NonlocalOperator::new(grid, dk, nonlinearity, scaling)?;
    Ok(Field::new(op.apply(&u.values)?, u.time))
}

/// The quadratic form `⟨Au, u⟩ = ½ ΣΣ w (u(y) - u(x))²` of the linear
/// nonlocal operator, with u extended by zero outside Ω̄. On interior nodes
/// `A = m·I - K`.
#[derive(Debug, Clone)]
pub struct DirichletForm {
    interior: Vec<usize>,
    mass: f64,
    /// Interior-index displacements and weights of the stencil, without the
    /// center.
    couplings: Vec<(isize, [i32; 2], f64)>,
    center_weight: f64,
    interior_shape: [usize; 2],
}

pub fn assemble_dirichlet_form(grid: &Grid, dk: &DiscreteKernel) -> Result<DirichletForm> {
    grid.check_kernel(dk)?;
    let ishape = grid.interior_shape();
    let mut couplings = Vec::new();
    let mut center_weight = 0.0;
    for (o, w) in dk.offsets().iter().zip(dk.weights()) {
        if *o == [0, 0] {
            center_weight = *w;
        } else {
            let d = o[0] as isize + o[1] as isize * ishape[0] as isize;
            couplings.push((d, *o, *w));
        }
    }
    Ok(DirichletForm {
        interior: grid.interior_nodes(),
        mass: dk.mass(),
        couplings,
        center_weight,
        interior_shape: ishape,
    })
}

impl DirichletForm {
    pub fn size(&self) -> usize {
        self.interior.len()
    }

    /// Grid indices of the unknowns, in order.
    pub fn nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn stencil_mass(&self) -> f64 {
        self.mass
    }

    /// Half-bandwidth of A in interior ordering.
    pub fn bandwidth(&self) -> usize {
        self.couplings
            .iter()
            .map(|(d, _, _)| d.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    fn neighbor(&self, k: usize, o: &[i32; 2]) -> Option<usize> {
        let [nx, ny] = self.interior_shape;
        let i = (k % nx) as i64 + i64::from(o[0]);
        let j = (k / nx) as i64 + i64::from(o[1]);
        if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
            return None;
        }
        Some(j as usize * nx + i as usize)
    }

    /// Diagonal entry `m - w_0`.
    pub fn diagonal(&self) -> f64 {
        self.mass - self.center_weight
    }

    /// `A v` for `v` over interior unknowns.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let diag = self.diagonal();
        (0..self.size())
            .map(|k| {
                let mut acc = diag * v[k];
                for (_, o, w) in &self.couplings {
                    if let Some(l) = self.neighbor(k, o) {
                        acc -= w * v[l];
                    }
                }
                acc
            })
            .collect()
    }

    /// `⟨Av, v⟩`.
    pub fn quadratic(&self, v: &[f64]) -> f64 {
        let av = self.apply(v);
        crate::sum::pairwise_sum_by(v.len(), |i| av[i] * v[i])
    }

    /// Dense row-major matrix.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.size();
        let mut a = vec![0.0; n * n];
        let diag = self.diagonal();
        for k in 0..n {
            a[k * n + k] = diag;
            for (_, o, w) in &self.couplings {
                if let Some(l) = self.neighbor(k, o) {
                    a[k * n + l] -= w;
                }
            }
        }
        a
    }

    /// Lower band storage: `band[k][d]` is `A[k][k - d]` for `d ≤ bandwidth`.
    pub fn lower_band(&self) -> Vec<Vec<f64>> {
        let n = self.size();
        let bw = self.bandwidth();
        let mut band = vec![vec![0.0; bw + 1]; n];
        let diag = self.diagonal();
        for (k, row) in band.iter_mut().enumerate() {
            row[0] = diag;
            for (_, o, w) in &self.couplings {
                if let Some(l) = self.neighbor(k, o) {
                    if l < k {
                        row[k - l] -= w;
                    }
                }
            }
        }
        band
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{discretize, make_kernel, Kernel, Profile, Renormalization};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_1d_enumeration() {
        let g = build_grid(&[(-1.0, 1.0)], 0.5, 1.0).unwrap();
        let xs = |kind: NodeKind| -> Vec<f64> {
            (0..g.len())
                .filter(|&n| g.kind(n) == kind)
                .map(|n| g.coords(n)[0])
                .collect()
        };
        assert_eq!(xs(NodeKind::Interior), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(xs(NodeKind::Collar), vec![-2.0, -1.5, 1.5, 2.0]);
        assert!(g.collar_width() >= 1.0);
    }

    #[test]
    fn grid_2d_single_ring() {
        let g = build_grid(&[(-1.0, 1.0), (-1.0, 1.0)], 0.5, 0.5).unwrap();
        assert_eq!(g.shape(), [7, 7]);
        assert_eq!(g.interior_count(), 25);
        assert_eq!(g.collar_node_list().len(), 49 - 25);
        for n in g.collar_node_list() {
            let [x, y] = g.coords(n);
            assert!(x.abs().max(y.abs()) == 1.5);
        }
    }

    #[test]
    fn collar_covers_radius() {
        for (h, r) in [(0.1, 0.25), (0.3, 1.0), (0.125, 1.0), (0.2, 0.6)] {
            let g = build_grid(&[(0.0, 3.0 * h)], h, r).unwrap();
            assert!(g.collar_width() >= r * (1.0 - 1e-12));
            assert!(g.collar_width() < r + h);
        }
    }

    #[test]
    fn grid_rejects_bad_boxes() {
        assert!(matches!(
            build_grid(&[(0.0, 1.0)], 0.3, 1.0),
            Err(Error::IncommensurateBox { .. })
        ));
        assert!(build_grid(&[(1.0, 0.0)], 0.1, 1.0).is_err());
        assert!(build_grid(&[(0.0, 1.0)], 0.0, 1.0).is_err());
    }

    fn setup(eps: f64, k_pts: f64) -> (Grid, DiscreteKernel) {
        let k = make_kernel(Profile::Uniform, 1, 1.0)
            .unwrap()
            .rescale(eps)
            .unwrap();
        let h = eps / k_pts;
        let dk = discretize(&k, h, Renormalization::MassMoment).unwrap();
        let g = build_grid(&[(-1.0, 1.0)], h, k.support_radius()).unwrap();
        (g, dk)
    }

    #[test]
    fn constant_field_has_zero_rhs() {
        let (g, dk) = setup(0.2, 8.0);
        let u = Field::new(vec![3.7; g.len()], 0.0);
        let nl = Nonlinearity::kpz_constant(1.0).unwrap();
        for scaling in [OperatorScaling::Unit, OperatorScaling::Diffusive] {
            let r = nonlocal_rhs(&g, &dk, &nl, &u, scaling).unwrap();
            assert!(r.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn rescaled_operator_exact_on_quadratics() {
        for eps in [0.2, 0.1] {
            let (g, dk) = setup(eps, 8.0);
            let u = Field::new(g.sample(|p| p[0] * p[0]), 0.0);
            let r = nonlocal_rhs(
                &g,
                &dk,
                &Nonlinearity::identity(),
                &u,
                OperatorScaling::Diffusive,
            )
            .unwrap();
            for n in g.interior_nodes() {
                assert!(
                    (r.values[n] - 2.0).abs() < 1e-8,
                    "x={} rhs={}",
                    g.coords(n)[0],
                    r.values[n]
                );
            }
            for n in g.collar_node_list() {
                assert_eq!(r.values[n], 0.0);
            }
        }
    }

    #[test]
    fn rescaled_operator_exact_on_quadratics_2d() {
        let eps = 0.25;
        let k = make_kernel(Profile::PolynomialBump, 2, 1.0)
            .unwrap()
            .rescale(eps)
            .unwrap();
        let h = eps / 5.0;
        let dk = discretize(&k, h, Renormalization::MassMoment).unwrap();
        let g = build_grid(&[(-0.5, 0.5), (-0.5, 0.5)], h, k.support_radius()).unwrap();
        let u = Field::new(
            g.sample(|p| p[0] * p[0] + p[1] * p[1] - 2.0 * p[0] * p[1]),
            0.0,
        );
        let r = nonlocal_rhs(
            &g,
            &dk,
            &Nonlinearity::identity(),
            &u,
            OperatorScaling::Diffusive,
        )
        .unwrap();
        // Δ(x² + y² - 2xy) = 4
        for n in g.interior_nodes() {
            assert!((r.values[n] - 4.0).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_rhs_matches_dense_matrix_product() {
        let k = make_kernel(Profile::Triangular, 1, 1.0).unwrap();
        let h = 0.25;
        let dk = discretize(&k, h, Renormalization::Mass).unwrap();
        // 64 nodes in total: 56 interior, 4 collar on each side
        let g = build_grid(&[(0.0, 55.0 * h)], h, 1.0).unwrap();
        assert_eq!(g.len(), 64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = nonlocal_rhs(
            &g,
            &dk,
            &Nonlinearity::identity(),
            &Field::new(u.clone(), 0.0),
            OperatorScaling::Unit,
        )
        .unwrap();
        // dense oracle: M[x][y] = J weight at y - x, minus the row mass on the diagonal
        let n = g.len();
        let mut m = vec![0.0; n * n];
        for x in g.interior_nodes() {
            for (o, w) in dk.offsets().iter().zip(dk.weights()) {
                let y = (x as isize + o[0] as isize) as usize;
                m[x * n + y] += w;
                m[x * n + x] -= w;
            }
        }
        for x in 0..n {
            let want: f64 = (0..n).map(|y| m[x * n + y] * u[y]).sum();
            assert!((r.values[x] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_invariance() {
        let (g, dk) = setup(0.2, 8.0);
        let nl = Nonlinearity::kpz_constant(0.8).unwrap();
        let op = NonlocalOperator::new(&g, &dk, &nl, OperatorScaling::Diffusive).unwrap();
        let u = g.sample(|p| (3.0 * p[0]).sin());
        let shifted: Vec<f64> = u.iter().map(|v| v + 0.75).collect();
        let a = op.apply(&u).unwrap();
        let b = op.apply(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn lipschitz_bound_holds() {
        let (g, dk) = setup(0.2, 8.0);
        let nl = Nonlinearity::kpz_constant(2.0).unwrap();
        let op = NonlocalOperator::new(&g, &dk, &nl, OperatorScaling::Diffusive).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = 1e-3;
            let v: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let fu = op.apply(&u).unwrap();
            let fv = op.apply(&v).unwrap();
            let num = fu
                .iter()
                .zip(&fv)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let den = t * d.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(num / den <= op.lipschitz_bound() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn rhs_errors() {
        let (g, dk) = setup(0.2, 8.0);
        let nl = Nonlinearity::identity();
        let mut u = vec![0.0; g.len()];
        assert!(matches!(
            nonlocal_rhs(
                &g,
                &dk,
                &nl,
                &Field::new(u[1..].to_vec(), 0.0),
                OperatorScaling::Unit
            ),
            Err(Error::LengthMismatch { .. })
        ));
        u[3] = f64::NAN;
        assert!(matches!(
            nonlocal_rhs(&g, &dk, &nl, &Field::new(u, 0.0), OperatorScaling::Unit),
            Err(Error::NonFiniteInput { node: 3 })
        ));
    }

    #[test]
    fn dirichlet_form_properties() {
        let k = make_kernel(Profile::Uniform, 1, 1.0).unwrap();
        let dk = discretize(&k, 0.25, Renormalization::Mass).unwrap();
        // 32 interior nodes
        let g = build_grid(&[(0.0, 31.0 * 0.25)], 0.25, 1.0).unwrap();
        let form = assemble_dirichlet_form(&g, &dk).unwrap();
        assert_eq!(form.size(), 32);
        let a = form.dense();
        let n = form.size();
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((a[i * n + j] - a[j * n + i]).abs());
            }
        }
        assert_eq!(asym, 0.0);
        // constants leak through the collar
        assert!(form.quadratic(&vec![1.0; n]) > 0.0);
        // Gershgorin discs sit inside [0, 2m]
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[i * n + j].abs()).sum();
            assert!(a[i * n + i] - off >= -1e-15);
            assert!(a[i * n + i] + off <= 2.0 * dk.mass() + 1e-15);
        }
        // ⟨Au,u⟩ equals half the double sum over zero-extended u
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut ext = vec![0.0; g.len()];
        for (k, &node) in form.nodes().iter().enumerate() {
            ext[node] = v[k];
        }
        let mut double = 0.0;
        let ext_at = |i: isize| {
            if i >= 0 && (i as usize) < ext.len() {
                ext[i as usize]
            } else {
                0.0
            }
        };
        // sum over a lattice wide enough that every pair touching Ω̄ appears
        for x in -8isize..(g.len() as isize + 8) {
            for (o, w) in dk.offsets().iter().zip(dk.weights()) {
                let y = x + o[0] as isize;
                double += w * (ext_at(y) - ext_at(x)).powi(2);
            }
        }
        assert!((form.quadratic(&v) - 0.5 * double).abs() < 1e-12);
    }

    #[test]
    fn band_storage_matches_dense() {
        let k = make_kernel(Profile::Uniform, 2, 1.0).unwrap();
        let dk = discretize(&k, 0.25, Renormalization::Mass).unwrap();
        let g = build_grid(&[(0.0, 1.5), (0.0, 1.0)], 0.25, 1.0).unwrap();
        let form = assemble_dirichlet_form(&g, &dk).unwrap();
        let n = form.size();
        let a = form.dense();
        let band = form.lower_band();
        for i in 0..n {
            for j in 0..=i {
                let d = i - j;
                let b = if d <= form.bandwidth() {
                    band[i][d]
                } else {
                    0.0
                };
                assert_eq!(a[i * n + j], b);
            }
        }
    }

    #[test]
    fn boundary_ring_width() {
        let g = build_grid(&[(-2.0, 2.0)], 0.25, 1.0).unwrap();
        let ring = g.boundary_ring(1.0);
        // five nodes per side within distance 1
        assert_eq!(ring.len(), 10);
        assert!(ring.iter().all(|&n| g.coords(n)[0].abs() >= 1.0 - 1e-12));
    }

    #[test]
    fn field_csv() {
        let g = build_grid(&[(-1.0, 1.0)], 0.5, 0.5).unwrap();
        let f = Field::zeros(&g);
        assert_eq!(f.to_csv(&g).lines().count(), g.len() + 1);
    }
}
