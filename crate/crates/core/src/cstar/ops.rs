//! Structured operators on the truncated polydisc space `H^2(D^n)`.
//!
//! Everything the C*-algebra module needs is built from one-variable
//! matrices acting along an axis (shifts, Toeplitz multipliers, projections
//! onto one-variable subspaces), low-rank pieces, products and sums. Tensor
//! products of one-variable subspaces are then products of axis projections,
//! so no operator is ever materialized on the full grid.

use std::sync::Arc;

use crate::coeffspace::DegreeGrid;
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, RankPolicy, C64, ONE, ZERO};
use crate::matpoly::{self, FiniteBlaschke, MatPoly};
use crate::par::{self, Execution};
use crate::report::Window;

#[derive(Clone, Debug)]
pub enum GridOp {
    Identity,
    Zero,
    /// One-variable matrix acting along `var`.
    Axis { var: usize, mat: Arc<CMat> },
    /// Projection onto the span of orthonormal columns.
    Span(Arc<CMat>),
    /// `left right^*`.
    LowRank { left: Arc<CMat>, right: Arc<CMat> },
    /// Product in written order: the last factor acts first.
    Product(Vec<GridOp>),
    Sum(Vec<(C64, GridOp)>),
}

impl GridOp {
    pub fn axis(var: usize, mat: CMat) -> GridOp {
        GridOp::Axis { var, mat: Arc::new(mat) }
    }

    pub fn span(basis: CMat) -> GridOp {
        if basis.ncols() == 0 {
            GridOp::Zero
        } else {
            GridOp::Span(Arc::new(basis))
        }
    }

    pub fn low_rank(left: CMat, right: CMat) -> GridOp {
        if left.ncols() == 0 {
            GridOp::Zero
        } else {
            GridOp::LowRank { left: Arc::new(left), right: Arc::new(right) }
        }
    }

    pub fn product(factors: impl IntoIterator<Item = GridOp>) -> GridOp {
        let mut out = Vec::new();
        for f in factors {
            match f {
                GridOp::Identity => {}
                GridOp::Zero => return GridOp::Zero,
                GridOp::Product(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => GridOp::Identity,
            1 => out.pop().unwrap(),
            _ => GridOp::Product(out),
        }
    }

    pub fn sum(terms: impl IntoIterator<Item = (C64, GridOp)>) -> GridOp {
        let terms: Vec<_> = terms.into_iter().filter(|(s, op)| *s != ZERO && !matches!(op, GridOp::Zero)).collect();
        if terms.is_empty() {
            GridOp::Zero
        } else {
            GridOp::Sum(terms)
        }
    }

    pub fn then(&self, other: &GridOp) -> GridOp {
        GridOp::product([self.clone(), other.clone()])
    }

    pub fn plus(&self, other: &GridOp) -> GridOp {
        GridOp::sum([(ONE, self.clone()), (ONE, other.clone())])
    }

    pub fn minus(&self, other: &GridOp) -> GridOp {
        GridOp::sum([(ONE, self.clone()), (-ONE, other.clone())])
    }

    pub fn adjoint(&self) -> GridOp {
        match self {
            GridOp::Identity | GridOp::Zero | GridOp::Span(_) => self.clone(),
            GridOp::Axis { var, mat } => GridOp::axis(*var, mat.adjoint()),
            GridOp::LowRank { left, right } => GridOp::LowRank { left: right.clone(), right: left.clone() },
            GridOp::Product(fs) => GridOp::Product(fs.iter().rev().map(GridOp::adjoint).collect()),
            GridOp::Sum(ts) => GridOp::Sum(ts.iter().map(|(s, op)| (s.conj(), op.adjoint())).collect()),
        }
    }

    fn apply_seq(&self, grid: &DegreeGrid, y: &CMat) -> CMat {
        match self {
            GridOp::Identity => y.clone(),
            GridOp::Zero => CMat::zeros(y.nrows(), y.ncols()),
            GridOp::Axis { var, mat } => apply_axis(grid, *var, mat, y),
            GridOp::Span(b) => b.as_ref() * (b.adjoint() * y),
            GridOp::LowRank { left, right } => left.as_ref() * (right.adjoint() * y),
            GridOp::Product(fs) => {
                let mut acc = y.clone();
                for f in fs.iter().rev() {
                    acc = f.apply_seq(grid, &acc);
                }
                acc
            }
            GridOp::Sum(ts) => {
                let mut acc = CMat::zeros(y.nrows(), y.ncols());
                for (s, op) in ts {
                    acc += op.apply_seq(grid, y) * *s;
                }
                acc
            }
        }
    }

    /// Apply to the columns of `y`, splitting the columns across threads.
    pub fn apply(&self, grid: &DegreeGrid, y: &CMat, exec: Execution) -> CMat {
        const CHUNK: usize = 16;
        let n = y.ncols();
        if !exec.is_parallel() || n <= CHUNK {
            return self.apply_seq(grid, y);
        }
        let chunks = n.div_ceil(CHUNK);
        let parts = par::map_range(exec, chunks, |k| {
            let lo = k * CHUNK;
            let w = CHUNK.min(n - lo);
            self.apply_seq(grid, &y.columns(lo, w).into_owned())
        });
        let mut out = CMat::zeros(y.nrows(), n);
        for (k, p) in parts.into_iter().enumerate() {
            out.columns_mut(k * CHUNK, p.ncols()).copy_from(&p);
        }
        out
    }

    /// Dense matrix on the whole grid.
    pub fn matrix(&self, grid: &DegreeGrid, exec: Execution) -> CMat {
        self.apply(grid, &linalg::identity(grid.dim()), exec)
    }
}

fn apply_axis(grid: &DegreeGrid, var: usize, mat: &CMat, y: &CMat) -> CMat {
    let s = grid.stride(var);
    let len = grid.trunc[var];
    let block = s * len;
    let mut out = CMat::zeros(y.nrows(), y.ncols());
    for j in 0..y.ncols() {
        let col = y.column(j);
        let mut oc = out.column_mut(j);
        for hi in (0..y.nrows()).step_by(block) {
            for lo in 0..s {
                let base = hi + lo;
                for l in 0..len {
                    let x = col[base + l * s];
                    if x == ZERO {
                        continue;
                    }
                    for k in 0..len {
                        let m = mat[(k, l)];
                        if m != ZERO {
                            oc[base + k * s] += m * x;
                        }
                    }
                }
            }
        }
    }
    out
}

/// One-variable shift matrix (`z^k -> z^{k+1}`, top degree dropped).
pub fn shift_matrix(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j + 1 { ONE } else { ZERO })
}

/// Lower-triangular Toeplitz matrix of a one-variable function.
pub fn toeplitz_matrix(phi: &FiniteBlaschke, n: usize) -> CMat {
    MatPoly::scalar(&phi.coefficients(n)).toeplitz(n)
}

/// A subspace of `C^N` (one variable, truncated) by orthonormal basis.
#[derive(Clone, Debug)]
pub struct Factor {
    pub basis: CMat,
}

impl Factor {
    pub fn full(n: usize) -> Factor {
        Factor { basis: linalg::identity(n) }
    }

    pub fn zero(n: usize) -> Factor {
        Factor { basis: CMat::zeros(n, 0) }
    }

    /// Span of `z^lo, ..., z^{hi-1}`.
    pub fn monomials(n: usize, lo: usize, hi: usize) -> Factor {
        let hi = hi.min(n);
        let lo = lo.min(hi);
        Factor { basis: CMat::from_fn(n, hi - lo, |i, j| if i == lo + j { ONE } else { ZERO }) }
    }

    pub fn constants(n: usize) -> Factor {
        Factor::monomials(n, 0, 1)
    }

    /// `z H^2`.
    pub fn nonconstants(n: usize) -> Factor {
        Factor::monomials(n, 1, n)
    }

    /// `Q_phi`, with the model-space residual.
    pub fn model(phi: &FiniteBlaschke, n: usize) -> Result<(Factor, f64)> {
        if phi.is_monomial() {
            return Ok((Factor::monomials(n, 0, phi.zeros.len()), 0.0));
        }
        let q = matpoly::qphi_basis(phi, n)?;
        Ok((Factor { basis: q.basis.basis }, q.residual))
    }

    /// `phi H^2`.
    pub fn range(phi: &FiniteBlaschke, n: usize) -> Result<Factor> {
        Ok(Factor::model(phi, n)?.0.complement())
    }

    /// `phi span{z^lo, ..., z^{hi-1}}`.
    pub fn phi_block(phi: &FiniteBlaschke, n: usize, lo: usize, hi: usize) -> Factor {
        if phi.is_monomial() {
            let d = phi.zeros.len();
            return Factor::monomials(n, lo + d, hi + d);
        }
        if hi <= lo || phi.zero_function {
            return Factor::zero(n);
        }
        let t = toeplitz_matrix(phi, n);
        let cols = t.columns(lo, hi.min(n) - lo).into_owned();
        Factor { basis: linalg::orthonormal_range(&cols, RankPolicy { rel: 1e-12, abs: 1e-300 }) }
    }

    pub fn complement(&self) -> Factor {
        Factor { basis: linalg::orth_complement(&self.basis) }
    }

    /// `self - other` for `other` contained in `self`.
    pub fn minus(&self, other: &Factor) -> Factor {
        if other.dim() == 0 {
            return self.clone();
        }
        let p = &self.basis * self.basis.adjoint() - &other.basis * other.basis.adjoint();
        let b = linalg::orthonormal_range(&p, RankPolicy { rel: 1e-8, abs: 1e-10 });
        Factor { basis: b }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn len(&self) -> usize {
        self.basis.nrows()
    }

    pub fn is_full(&self) -> bool {
        self.dim() == self.len()
    }

    pub fn projection(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }
}

/// A subspace of the truncated polydisc space, through its projection.
#[derive(Clone, Debug)]
pub struct Space {
    pub proj: GridOp,
    pub dim: usize,
}

impl Space {
    pub fn full(grid: &DegreeGrid) -> Space {
        Space { proj: GridOp::Identity, dim: grid.dim() }
    }

    pub fn zero() -> Space {
        Space { proj: GridOp::Zero, dim: 0 }
    }

    /// `F_1 ⊗ ... ⊗ F_n`.
    pub fn tensor(factors: &[Factor]) -> Space {
        let dim = factors.iter().map(Factor::dim).product();
        if dim == 0 {
            return Space::zero();
        }
        let ops = factors.iter().enumerate().filter(|(_, f)| !f.is_full()).map(|(v, f)| GridOp::axis(v, f.projection()));
        Space { proj: GridOp::product(ops), dim }
    }

    pub fn from_basis(basis: CMat) -> Space {
        let dim = basis.ncols();
        Space { proj: GridOp::span(basis), dim }
    }

    pub fn complement(&self, grid: &DegreeGrid) -> Space {
        Space { proj: GridOp::Identity.minus(&self.proj), dim: grid.dim() - self.dim }
    }

    /// Orthogonal direct sum (orthogonality is the caller's claim; layout
    /// checks verify it).
    pub fn direct_sum(parts: &[&Space]) -> Space {
        let proj = GridOp::sum(parts.iter().map(|s| (ONE, s.proj.clone())));
        Space { proj, dim: parts.iter().map(|s| s.dim).sum() }
    }

    /// `self - sub` for `sub` contained in `self`.
    pub fn minus(&self, sub: &Space) -> Space {
        Space { proj: self.proj.minus(&sub.proj), dim: self.dim - sub.dim }
    }

    /// `P_S M P_S`, the compression of `op` to this space.
    pub fn compress(&self, op: &GridOp) -> GridOp {
        GridOp::product([self.proj.clone(), op.clone(), self.proj.clone()])
    }
}

/// The standard operators of the truncated space.
#[derive(Clone, Debug)]
pub struct Hardy {
    pub grid: DegreeGrid,
    pub exec: Execution,
}

impl Hardy {
    pub fn new(grid: DegreeGrid, exec: Execution) -> Result<Hardy> {
        grid.validate()?;
        if grid.fiber_dim != 1 {
            return Err(Error::GridMismatch("the polydisc space is scalar valued".into()));
        }
        Ok(Hardy { grid, exec })
    }

    pub fn n(&self) -> usize {
        self.grid.nvars
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// `M_{z_i}` (0-based variable).
    pub fn shift(&self, var: usize) -> GridOp {
        GridOp::axis(var, shift_matrix(self.grid.trunc[var]))
    }

    /// `M_{phi(z_var)}`.
    pub fn mult(&self, var: usize, phi: &FiniteBlaschke) -> GridOp {
        GridOp::axis(var, toeplitz_matrix(phi, self.grid.trunc[var]))
    }

    pub fn apply(&self, op: &GridOp, y: &CMat) -> CMat {
        op.apply(&self.grid, y, self.exec)
    }

    /// Coordinate basis of the box `deg_v < bound_v`.
    pub fn window(&self, bound: &[usize]) -> (CMat, Window) {
        let w = crate::coeffspace::box_basis(&self.grid, bound);
        let win = Window::new(bound.to_vec(), w.ncols());
        (w, win)
    }

    /// Box `deg_v < N_v - margin_v`, or an error when it is empty.
    pub fn interior(&self, margin: &[usize]) -> Result<Vec<usize>> {
        let mut bound = Vec::with_capacity(self.n());
        for (v, &m) in margin.iter().enumerate() {
            let n = self.grid.trunc[v];
            if n <= m {
                return Err(Error::TruncationTooSmall { needed: m + 1, got: n });
            }
            bound.push(n - m);
        }
        Ok(bound)
    }

    /// `max |(a - b) x|` entrywise.
    pub fn difference(&self, a: &GridOp, b: &GridOp, x: &CMat) -> f64 {
        linalg::max_abs(&self.apply(&a.minus(b), x))
    }

    /// Largest entry of `(I - P_outer) P_inner x`.
    pub fn containment(&self, inner: &Space, outer: &Space, x: &CMat) -> f64 {
        let y = self.apply(&inner.proj, x);
        linalg::max_abs(&(&y - self.apply(&outer.proj, &y)))
    }
}

/// A residual operator evaluated on a window and split into low-rank
/// factors: `residual * window = left right^* * window`.
#[derive(Clone, Debug)]
pub struct FiniteRankResidual {
    pub rank: usize,
    pub bound: Option<usize>,
    /// `U_r Sigma_r`, one column per retained singular direction.
    pub left: CMat,
    /// Right singular vectors mapped back to grid coordinates.
    pub right: CMat,
    pub op_norm: f64,
    /// Largest entry of `residual * window - left right^* * window`.
    pub reconstruction: f64,
    pub window: Window,
}

impl FiniteRankResidual {
    /// `block` is the residual operator applied to the orthonormal window
    /// basis `w`. Singular values count towards the rank above
    /// `policy.threshold(max(sigma_max, 1))`.
    pub fn from_block(block: &CMat, w: &CMat, window: Window, bound: Option<usize>, policy: RankPolicy) -> Self {
        let d = linalg::svd(block);
        let smax = d.s.first().cloned().unwrap_or(0.0);
        let thr = policy.threshold(smax.max(1.0));
        let rank = d.s.iter().filter(|&&s| s > thr).count();
        let mut left = d.u.columns(0, rank).into_owned();
        for j in 0..rank {
            left.column_mut(j).scale_mut(d.s[j]);
        }
        let vr = d.v.columns(0, rank).into_owned();
        let right = w * &vr;
        let recon = &left * (right.adjoint() * w);
        let reconstruction = linalg::max_abs(&(block - recon));
        FiniteRankResidual { rank, bound, left, right, op_norm: smax, reconstruction, window }
    }

    pub fn within_bound(&self) -> bool {
        self.bound.is_none_or(|b| self.rank <= b)
    }
}

pub fn scalar(x: f64) -> C64 {
    c(x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_ops_match_kronecker_products() {
        let grid = DegreeGrid::new(vec![3, 4], 1).unwrap();
        let h = Hardy::new(grid.clone(), Execution::Sequential).unwrap();
        let s0 = shift_matrix(3);
        let s1 = shift_matrix(4);
        // variable 0 is the fastest index: full operator = I_4 ⊗ S_3
        let m0 = h.shift(0).matrix(&grid, Execution::Sequential);
        assert_eq!(m0, linalg::kron(&linalg::identity(4), &s0));
        let m1 = h.shift(1).matrix(&grid, Execution::Sequential);
        assert_eq!(m1, linalg::kron(&s1, &linalg::identity(3)));
    }

    #[test]
    fn adjoint_and_parallel_apply_agree() {
        let grid = DegreeGrid::polydisc(2, 6);
        let h = Hardy::new(grid.clone(), Execution::Parallel).unwrap();
        let phi = FiniteBlaschke::new(vec![c(0.3, 0.2)]).unwrap();
        let op = h.mult(0, &phi).then(&h.shift(1)).plus(&GridOp::span(linalg::identity(36).columns(0, 3).into_owned()));
        let m = op.matrix(&grid, Execution::Sequential);
        let madj = op.adjoint().matrix(&grid, Execution::Parallel);
        assert!(linalg::max_abs(&(m.adjoint() - madj)) < 1e-15);
    }

    #[test]
    fn tensor_space_of_monomials() {
        let grid = DegreeGrid::polydisc(2, 5);
        let s = Space::tensor(&[Factor::monomials(5, 0, 2), Factor::constants(5)]);
        assert_eq!(s.dim, 2);
        let p = s.proj.matrix(&grid, Execution::Sequential);
        assert_eq!(p[(0, 0)], ONE);
        assert_eq!(p[(1, 1)], ONE);
        assert_eq!(p[(5, 5)], ZERO);
    }

    #[test]
    fn finite_rank_factorization() {
        let grid = DegreeGrid::polydisc(2, 4);
        let w = linalg::identity(grid.dim());
        let a = linalg::identity(16).columns(0, 2).into_owned();
        let block = &a * a.adjoint() * c(2.0, 0.0);
        let f = FiniteRankResidual::from_block(&block, &w, Window::exact(16), Some(2), RankPolicy::default());
        assert_eq!(f.rank, 2);
        assert!(f.reconstruction < 1e-14 && (f.op_norm - 2.0).abs() < 1e-14);
        assert!(f.within_bound());
    }
}
