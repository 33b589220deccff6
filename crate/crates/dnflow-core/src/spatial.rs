//! Tensor grids, nodal fields, and discrete divergence-form operators.
//!
//! Discretization: finite differences on uniform grids with cell-corner
//! quadrature. The energy `Phi_h(u) = sum_cells sum_corners w_q phi(grad_q u)`
//! uses the two in-cell edges meeting at each corner, which makes `apply_b`
//! *exactly* the gradient of `phi_energy` with respect to the trapezoid-
//! weighted inner product. The energy ledger relies on that exactness.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::SparseSym;
use crate::math;

/// Homogeneous boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    Dirichlet0,
    Neumann0,
}

/// Uniform tensor grid in 1 or 2 dimensions (x runs fastest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: [usize; 2],
    pub len: [f64; 2],
    pub bc: Bc,
}

impl Grid {
    pub fn line(n: usize, len: f64, bc: Bc) -> Result<Self> {
        Self::new(1, [n, 1], [len, 0.0], bc)
    }

    pub fn rect(n: [usize; 2], len: [f64; 2], bc: Bc) -> Result<Self> {
        Self::new(2, n, len, bc)
    }

    pub fn new(dim: usize, n: [usize; 2], len: [f64; 2], bc: Bc) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Precondition(alloc::format!(
                "unsupported dimension {dim}"
            )));
        }
        let mut n = n;
        let mut len = len;
        if dim == 1 {
            n[1] = 1;
            len[1] = 0.0;
        }
        for ax in 0..dim {
            if n[ax] < 3 {
                return Err(Error::Precondition(alloc::format!(
                    "need at least 3 nodes per axis, got {}",
                    n[ax]
                )));
            }
            if !(len[ax] > 0.0) {
                return Err(Error::Precondition(alloc::format!(
                    "axis length must be positive, got {}",
                    len[ax]
                )));
            }
        }
        Ok(Self { dim, n, len, bc })
    }

    pub fn nodes(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.len[axis] / (self.n[axis] - 1) as f64
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n[0] + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n[0], idx / self.n[0])
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        let (ix, iy) = self.coords(idx);
        let x = ix as f64 * self.h(0);
        let y = if self.dim == 2 { iy as f64 * self.h(1) } else { 0.0 };
        [x, y]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (ix, iy) = self.coords(idx);
        if ix == 0 || ix == self.n[0] - 1 {
            return true;
        }
        if self.dim == 2 && (iy == 0 || iy == self.n[1] - 1) {
            return true;
        }
        false
    }

    /// Trapezoid quadrature mass of each node.
    pub fn weights(&self) -> Vec<f64> {
        let ax_w = |n: usize, h: f64| -> Vec<f64> {
            (0..n)
                .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                .collect()
        };
        let wx = ax_w(self.n[0], self.h(0));
        if self.dim == 1 {
            return wx;
        }
        let wy = ax_w(self.n[1], self.h(1));
        let mut w = Vec::with_capacity(self.nodes());
        for y in &wy {
            for x in &wx {
                w.push(x * y);
            }
        }
        w
    }

    /// Measure of the domain.
    pub fn measure(&self) -> f64 {
        if self.dim == 1 {
            self.len[0]
        } else {
            self.len[0] * self.len[1]
        }
    }

    /// Indices of the unconstrained nodes (all under Neumann).
    pub fn free_nodes(&self) -> Vec<usize> {
        match self.bc {
            Bc::Neumann0 => (0..self.nodes()).collect(),
            Bc::Dirichlet0 => (0..self.nodes()).filter(|&i| !self.is_boundary(i)).collect(),
        }
    }

    /// Weighted inner product of two nodal vectors.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = self.weights();
        let mut acc = 0.0;
        for i in 0..a.len() {
            acc += w[i] * a[i] * b[i];
        }
        acc
    }

    /// Discrete `L^2` (H) norm.
    pub fn h_norm(&self, a: &[f64]) -> f64 {
        math::sqrt(self.inner(a, a))
    }
}

/// Nodal state with a time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.nodes()],
            time: 0.0,
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.nodes())
            .map(|i| {
                let p = grid.position(i);
                f(p[0], p[1])
            })
            .collect();
        Self { values, time: 0.0 }
    }

    pub fn constant(grid: &Grid, v: f64) -> Self {
        Self {
            values: vec![v; grid.nodes()],
            time: 0.0,
        }
    }

    pub fn conforms(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.nodes() {
            return Err(Error::Shape {
                expected: grid.nodes(),
                got: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Safe expression catalog for initial data and forcing profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldExpr {
    Constant(f64),
    /// `amplitude * prod_axis sin(mode_axis * pi * x_axis / len_axis)`
    Sine { amplitude: f64, mode: [u32; 2] },
    /// polynomial in x: `sum_j coeffs[j] x^j`
    Polynomial { coeffs: Vec<f64> },
    Gaussian {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    /// externally supplied nodal values (e.g. from a CSV file)
    Nodal(Vec<f64>),
}

impl FieldExpr {
    pub fn eval(&self, grid: &Grid) -> Result<Field> {
        match self {
            FieldExpr::Constant(v) => Ok(Field::constant(grid, *v)),
            FieldExpr::Sine { amplitude, mode } => {
                let kx = mode[0] as f64 * core::f64::consts::PI / grid.len[0];
                let ky = if grid.dim == 2 {
                    mode[1] as f64 * core::f64::consts::PI / grid.len[1]
                } else {
                    0.0
                };
                Ok(Field::from_fn(grid, |x, y| {
                    let mut v = *amplitude * math::sin(kx * x);
                    if grid.dim == 2 {
                        v *= math::sin(ky * y);
                    }
                    v
                }))
            }
            FieldExpr::Polynomial { coeffs } => Ok(Field::from_fn(grid, |x, _| {
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * x + c;
                }
                acc
            })),
            FieldExpr::Gaussian {
                amplitude,
                center,
                width,
            } => Ok(Field::from_fn(grid, |x, y| {
                let dx = x - center[0];
                let dy = if grid.dim == 2 { y - center[1] } else { 0.0 };
                *amplitude * math::exp(-(dx * dx + dy * dy) / (2.0 * width * width))
            })),
            FieldExpr::Nodal(values) => {
                if values.len() != grid.nodes() {
                    return Err(Error::Shape {
                        expected: grid.nodes(),
                        got: values.len(),
                    });
                }
                Ok(Field {
                    values: values.clone(),
                    time: 0.0,
                })
            }
        }
    }
}

/// Diffusion coefficient of the linear operator: a symmetric matrix per
/// node stored as `[dxx, dxy, dyy]` (1d uses `dxx` only).
#[derive(Debug, Clone, PartialEq)]
pub enum DCoeff {
    Scalar(f64),
    Matrix([f64; 3]),
    NodalScalar(Vec<f64>),
    NodalMatrix(Vec<[f64; 3]>),
}

impl DCoeff {
    fn at(&self, idx: usize) -> [f64; 3] {
        match self {
            DCoeff::Scalar(v) => [*v, 0.0, *v],
            DCoeff::Matrix(m) => *m,
            DCoeff::NodalScalar(v) => [v[idx], 0.0, v[idx]],
            DCoeff::NodalMatrix(m) => m[idx],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// `phi(x, xi) = (D(x) xi) . xi / 2`, ellipticity constant `a`.
    Linear { d: DCoeff, a: f64 },
    /// `phi(xi) = |xi|^p / p`.
    PLaplace { p: f64 },
}

/// Growth constants `(kappa1, kappa2, kappa3)` of the energy density,
/// derived at construction and carried for reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    pub p: f64,
}

/// Regularization floor for the p-Laplacian Newton linearization; the
/// residual itself is never regularized.
pub const GRAD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticOperator {
    pub grid: Grid,
    pub kind: OperatorKind,
    pub growth: GrowthConstants,
}

/// Assembled Newton linearization (operator form on free nodes).
#[derive(Debug, Clone)]
pub struct Linearization {
    pub matrix: SparseSym,
    /// cells where `|grad u| < GRAD_FLOOR` met `p < 2` (degeneracy warning)
    pub degenerate_cells: usize,
}

impl EllipticOperator {
    pub fn linear(grid: Grid, d: DCoeff, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Precondition(alloc::format!(
                "ellipticity constant must be positive, got {a}"
            )));
        }
        // sampled ellipticity: smallest eigenvalue of D at every node
        let mut d_max = 0.0_f64;
        for i in 0..grid.nodes() {
            let m = d.at(i);
            let tr = m[0] + m[2];
            let det_part = math::sqrt((m[0] - m[2]) * (m[0] - m[2]) + 4.0 * m[1] * m[1]);
            let lam_min = if grid.dim == 1 { m[0] } else { 0.5 * (tr - det_part) };
            let lam_max = if grid.dim == 1 { m[0] } else { 0.5 * (tr + det_part) };
            if lam_min < a - 1e-12 {
                return Err(Error::Precondition(alloc::format!(
                    "D(x) xi . xi >= a |xi|^2 fails at node {i}: min eigenvalue {lam_min} < a = {a}"
                )));
            }
            d_max = d_max.max(lam_max);
        }
        let growth = GrowthConstants {
            kappa1: 0.5 * a,
            kappa2: 0.0,
            kappa3: d_max,
            p: 2.0,
        };
        Ok(Self {
            grid,
            kind: OperatorKind::Linear { d, a },
            growth,
        })
    }

    pub fn p_laplace(grid: Grid, p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::Precondition(alloc::format!(
                "p-Laplacian requires p > 1, got {p}"
            )));
        }
        let growth = GrowthConstants {
            kappa1: 1.0 / p,
            kappa2: 0.0,
            kappa3: 1.0,
            p,
        };
        Ok(Self {
            grid,
            kind: OperatorKind::PLaplace { p },
            growth,
        })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, OperatorKind::Linear { .. })
    }

    /// Whether the coefficient is the identity (the Laplacian), which the
    /// Lojasiewicz probe requires.
    pub fn is_identity_laplacian(&self) -> bool {
        match &self.kind {
            OperatorKind::Linear { d, .. } => match d {
                DCoeff::Scalar(v) => *v == 1.0,
                DCoeff::Matrix(m) => *m == [1.0, 0.0, 1.0],
                _ => false,
            },
            _ => false,
        }
    }

    pub fn p_exponent(&self) -> f64 {
        self.growth.p
    }

    fn flux(&self, node: usize, g: [f64; 2]) -> [f64; 2] {
        match &self.kind {
            OperatorKind::Linear { d, .. } => {
                let m = d.at(node);
                [m[0] * g[0] + m[1] * g[1], m[1] * g[0] + m[2] * g[1]]
            }
            OperatorKind::PLaplace { p } => {
                let mag = math::hypot(g[0], g[1]);
                if mag == 0.0 {
                    [0.0, 0.0]
                } else {
                    let s = math::powf(mag, p - 2.0);
                    [s * g[0], s * g[1]]
                }
            }
        }
    }

    fn density(&self, node: usize, g: [f64; 2]) -> f64 {
        match &self.kind {
            OperatorKind::Linear { d, .. } => {
                let m = d.at(node);
                0.5 * (m[0] * g[0] * g[0] + 2.0 * m[1] * g[0] * g[1] + m[2] * g[1] * g[1])
            }
            OperatorKind::PLaplace { p } => {
                let mag = math::hypot(g[0], g[1]);
                math::powf(mag, *p) / p
            }
        }
    }

    /// Flux Jacobian at a quadrature point (regularized for `p != 2`).
    fn flux_jacobian(&self, node: usize, g: [f64; 2]) -> ([[f64; 2]; 2], bool) {
        match &self.kind {
            OperatorKind::Linear { d, .. } => {
                let m = d.at(node);
                ([[m[0], m[1]], [m[1], m[2]]], false)
            }
            OperatorKind::PLaplace { p } => {
                let raw = math::hypot(g[0], g[1]);
                let degenerate = *p < 2.0 && raw < GRAD_FLOOR;
                let mag = math::sqrt(raw * raw + GRAD_FLOOR * GRAD_FLOOR);
                let s = math::powf(mag, p - 2.0);
                let t = (p - 2.0) * math::powf(mag, p - 4.0);
                (
                    [
                        [s + t * g[0] * g[0], t * g[0] * g[1]],
                        [t * g[0] * g[1], s + t * g[1] * g[1]],
                    ],
                    degenerate,
                )
            }
        }
    }

    /// Visit every quadrature point: corner node index, weight, gradient,
    /// and per-axis edge node pairs `(low, high)`.
    fn for_each_qpoint(
        &self,
        u: &[f64],
        mut visit: impl FnMut(usize, f64, [f64; 2], [(usize, usize); 2]),
    ) {
        let g = &self.grid;
        let nx = g.n[0];
        let hx = g.h(0);
        if g.dim == 1 {
            let w = 0.5 * hx;
            for i in 0..nx - 1 {
                let grad = [(u[i + 1] - u[i]) / hx, 0.0];
                let edges = [(i, i + 1), (0, 0)];
                visit(i, w, grad, edges);
                visit(i + 1, w, grad, edges);
            }
            return;
        }
        let ny = g.n[1];
        let hy = g.h(1);
        let w = 0.25 * hx * hy;
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                for (ci, cj) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
                    // x-edge along the corner's row, y-edge along its column
                    let xe = (g.index(i, cj), g.index(i + 1, cj));
                    let ye = (g.index(ci, j), g.index(ci, j + 1));
                    let grad = [(u[xe.1] - u[xe.0]) / hx, (u[ye.1] - u[ye.0]) / hy];
                    visit(g.index(ci, cj), w, grad, [xe, ye]);
                }
            }
        }
    }

    /// Nodal action approximating `-div(b(x, grad u))` (operator form):
    /// the gradient of [`phi_energy`](Self::phi_energy) in the weighted
    /// inner product. Dirichlet boundary rows are zero.
    pub fn apply_b(&self, u: &Field) -> Result<Field> {
        u.conforms(&self.grid)?;
        let mut out = vec![0.0; self.grid.nodes()];
        let hs = [self.grid.h(0), if self.grid.dim == 2 { self.grid.h(1) } else { 1.0 }];
        self.for_each_qpoint(&u.values, |node, w, grad, edges| {
            let flux = self.flux(node, grad);
            for ax in 0..self.grid.dim {
                let (n0, n1) = edges[ax];
                let c = w * flux[ax] / hs[ax];
                out[n1] += c;
                out[n0] -= c;
            }
        });
        let weights = self.grid.weights();
        for i in 0..out.len() {
            out[i] /= weights[i];
        }
        if self.grid.bc == Bc::Dirichlet0 {
            for i in 0..out.len() {
                if self.grid.is_boundary(i) {
                    out[i] = 0.0;
                }
            }
        }
        Ok(Field {
            values: out,
            time: u.time,
        })
    }

    /// `Phi(u) = int phi(x, grad u)` by cell-corner quadrature.
    pub fn phi_energy(&self, u: &Field) -> Result<f64> {
        u.conforms(&self.grid)?;
        let mut acc = 0.0;
        self.for_each_qpoint(&u.values, |node, w, grad, _| {
            acc += w * self.density(node, grad);
        });
        Ok(acc)
    }

    /// Variational pairing `(B u, z) = int b(x, grad u) . grad z`.
    pub fn b_form(&self, u: &Field, z: &Field) -> Result<f64> {
        u.conforms(&self.grid)?;
        z.conforms(&self.grid)?;
        let hs = [self.grid.h(0), if self.grid.dim == 2 { self.grid.h(1) } else { 1.0 }];
        let zv = &z.values;
        let mut acc = 0.0;
        self.for_each_qpoint(&u.values, |node, w, grad, edges| {
            let flux = self.flux(node, grad);
            for ax in 0..self.grid.dim {
                let (n0, n1) = edges[ax];
                let gz = (zv[n1] - zv[n0]) / hs[ax];
                acc += w * flux[ax] * gz;
            }
        });
        Ok(acc)
    }

    /// Energy Hessian `K = D^2 Phi_h(u)` restricted to free nodes
    /// (symmetric; the quadratic form of the Newton linearization).
    pub fn stiffness_free(&self, u: &[f64]) -> (SparseSym, usize) {
        let nodes = self.grid.nodes();
        let free = self.grid.free_nodes();
        let mut map = vec![usize::MAX; nodes];
        for (k, &i) in free.iter().enumerate() {
            map[i] = k;
        }
        let hs = [self.grid.h(0), if self.grid.dim == 2 { self.grid.h(1) } else { 1.0 }];
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(free.len() * 9);
        let mut degenerate = 0usize;
        self.for_each_qpoint(u, |node, w, grad, edges| {
            let (m, degn) = self.flux_jacobian(node, grad);
            if degn {
                degenerate += 1;
            }
            for a in 0..self.grid.dim {
                for b in 0..self.grid.dim {
                    let c = w * m[a][b] / (hs[a] * hs[b]);
                    if c == 0.0 {
                        continue;
                    }
                    let (a0, a1) = edges[a];
                    let (b0, b1) = edges[b];
                    for (na, sa) in [(a1, 1.0), (a0, -1.0)] {
                        let ra = map[na];
                        if ra == usize::MAX {
                            continue;
                        }
                        for (nb, sb) in [(b1, 1.0), (b0, -1.0)] {
                            let cb = map[nb];
                            if cb == usize::MAX {
                                continue;
                            }
                            triplets.push((ra, cb, c * sa * sb));
                        }
                    }
                }
            }
        });
        (SparseSym::from_triplets(free.len(), &mut triplets), degenerate)
    }

    /// Newton linearization of `apply_b` at `u` in operator form (rows
    /// scaled by the inverse node masses), on the free nodes. For the
    /// linear kind this is the constant stiffness matrix.
    pub fn assemble_linearization(&self, u: &Field) -> Result<Linearization> {
        u.conforms(&self.grid)?;
        let (mut k, degenerate_cells) = self.stiffness_free(&u.values);
        let weights = self.grid.weights();
        let free = self.grid.free_nodes();
        for (row, &node) in free.iter().enumerate() {
            let inv = 1.0 / weights[node];
            for idx in k.indptr[row]..k.indptr[row + 1] {
                k.data[idx] *= inv;
            }
        }
        Ok(Linearization {
            matrix: k,
            degenerate_cells,
        })
    }
}
