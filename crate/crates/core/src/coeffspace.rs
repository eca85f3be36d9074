//! Coefficient-space models of truncated Hardy spaces.
//!
//! A [`DegreeGrid`] describes `H^2_W(D^n)` truncated to degrees
//! `0..trunc[v]` in each variable, with a `fiber_dim`-dimensional
//! coefficient space `W`. The monomial basis is orthonormal, so the Hardy
//! inner product is the Euclidean one on coefficients.
//!
//! Flattened index: `fiber + fiber_dim * (k_1 + N_1 * (k_2 + N_2 * (...)))`,
//! i.e. the fiber index runs fastest, then variable 1, then variable 2.
//! Variables are 0-based in the API (`z_1` is variable `0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, RankPolicy, C64, ZERO};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DegreeGrid {
    pub nvars: usize,
    pub trunc: Vec<usize>,
    pub fiber_dim: usize,
}

impl DegreeGrid {
    pub fn new(trunc: Vec<usize>, fiber_dim: usize) -> Result<Self> {
        if trunc.is_empty() || fiber_dim == 0 || trunc.contains(&0) {
            return Err(Error::Malformed("grid needs at least one variable, positive truncations and fiber".into()));
        }
        Ok(DegreeGrid { nvars: trunc.len(), trunc, fiber_dim })
    }

    /// Scalar `H^2(D^n)` with the same truncation in every variable.
    pub fn polydisc(nvars: usize, trunc: usize) -> Self {
        DegreeGrid { nvars, trunc: vec![trunc; nvars], fiber_dim: 1 }
    }

    /// One-variable `H^2_W(D)` with `dim W = fiber_dim`.
    pub fn vector_disc(trunc: usize, fiber_dim: usize) -> Self {
        DegreeGrid { nvars: 1, trunc: vec![trunc], fiber_dim }
    }

    pub fn dim(&self) -> usize {
        self.fiber_dim * self.trunc.iter().product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nvars != self.trunc.len() || self.nvars == 0 || self.fiber_dim == 0 || self.trunc.contains(&0) {
            return Err(Error::Malformed(format!("inconsistent grid {self:?}")));
        }
        Ok(())
    }

    /// Stride of variable `v` in the flattened index.
    pub fn stride(&self, v: usize) -> usize {
        self.fiber_dim * self.trunc[..v].iter().product::<usize>()
    }

    pub fn index(&self, fiber: usize, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.nvars);
        let mut idx = 0;
        for v in (0..self.nvars).rev() {
            idx = idx * self.trunc[v] + multi[v];
        }
        fiber + self.fiber_dim * idx
    }

    pub fn multi_index(&self, flat: usize) -> (usize, Vec<usize>) {
        let fiber = flat % self.fiber_dim;
        let mut rest = flat / self.fiber_dim;
        let mut multi = Vec::with_capacity(self.nvars);
        for v in 0..self.nvars {
            multi.push(rest % self.trunc[v]);
            rest /= self.trunc[v];
        }
        (fiber, multi)
    }

    /// Flat indices sorted by total degree, ties broken by flat index.
    pub fn graded_order(&self) -> Vec<usize> {
        let mut idx: Vec<(usize, usize)> =
            (0..self.dim()).map(|i| (self.multi_index(i).1.iter().sum::<usize>(), i)).collect();
        idx.sort();
        idx.into_iter().map(|(_, i)| i).collect()
    }

    /// Flat indices whose multi-index lies in the box `deg_v < bound[v]`.
    pub fn box_indices(&self, bound: &[usize]) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| {
                let (_, m) = self.multi_index(i);
                m.iter().zip(bound).all(|(k, b)| k < b)
            })
            .collect()
    }

    /// Per-variable bound `trunc[v] - margin[v]` (saturating).
    pub fn interior(&self, margin: &[usize]) -> Vec<usize> {
        self.trunc.iter().zip(margin).map(|(t, m)| t.saturating_sub(*m)).collect()
    }

    pub fn full_box(&self) -> Vec<usize> {
        self.trunc.clone()
    }

    pub fn ensure_same(&self, other: &DegreeGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Overflow handling for operators that raise degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruncationMode {
    /// Coefficients leaving the grid are an error.
    #[default]
    Strict,
    /// Coefficients leaving the grid are dropped and the loss recorded.
    Lossy,
}

/// A value together with the norm of whatever was dropped producing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Truncated<T> {
    pub value: T,
    pub dropped: f64,
}

impl<T> Truncated<T> {
    pub fn truncated(&self) -> bool {
        self.dropped > 0.0
    }
}

/// A (truncated) element of `H^2_W(D^n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyVec {
    pub grid: DegreeGrid,
    pub coeffs: CVec,
}

impl PolyVec {
    pub fn zeros(grid: &DegreeGrid) -> Self {
        PolyVec { grid: grid.clone(), coeffs: CVec::zeros(grid.dim()) }
    }

    pub fn from_coeffs(grid: &DegreeGrid, coeffs: CVec) -> Result<Self> {
        if coeffs.len() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), found: coeffs.len() });
        }
        Ok(PolyVec { grid: grid.clone(), coeffs })
    }

    pub fn monomial(grid: &DegreeGrid, fiber: usize, multi: &[usize]) -> Self {
        let mut p = PolyVec::zeros(grid);
        p.coeffs[grid.index(fiber, multi)] = linalg::ONE;
        p
    }

    /// Scalar one-variable polynomial from real coefficients.
    pub fn from_real(grid: &DegreeGrid, coeffs: &[f64]) -> Result<Self> {
        let mut p = PolyVec::zeros(grid);
        if coeffs.len() > grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), found: coeffs.len() });
        }
        for (i, &x) in coeffs.iter().enumerate() {
            p.coeffs[i] = c(x, 0.0);
        }
        Ok(p)
    }

    pub fn coeff(&self, fiber: usize, multi: &[usize]) -> C64 {
        self.coeffs[self.grid.index(fiber, multi)]
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn scale(&self, s: C64) -> PolyVec {
        PolyVec { grid: self.grid.clone(), coeffs: &self.coeffs * s }
    }

    pub fn add(&self, other: &PolyVec) -> Result<PolyVec> {
        self.grid.ensure_same(&other.grid)?;
        Ok(PolyVec { grid: self.grid.clone(), coeffs: &self.coeffs + &other.coeffs })
    }

    pub fn sub(&self, other: &PolyVec) -> Result<PolyVec> {
        self.grid.ensure_same(&other.grid)?;
        Ok(PolyVec { grid: self.grid.clone(), coeffs: &self.coeffs - &other.coeffs })
    }

    /// Highest degree carrying a coefficient above `tol`, per variable.
    pub fn degree(&self, tol: f64) -> Vec<Option<usize>> {
        let mut deg = vec![None; self.grid.nvars];
        for (i, z) in self.coeffs.iter().enumerate() {
            if z.norm() > tol {
                let (_, m) = self.grid.multi_index(i);
                for v in 0..self.grid.nvars {
                    deg[v] = Some(deg[v].map_or(m[v], |d: usize| d.max(m[v])));
                }
            }
        }
        deg
    }
}

/// Hardy-space inner product, linear in the first argument.
pub fn inner_product(f: &PolyVec, g: &PolyVec) -> Result<C64> {
    f.grid.ensure_same(&g.grid)?;
    Ok(f.coeffs.iter().zip(g.coeffs.iter()).map(|(a, b)| a * b.conj()).sum())
}

/// `M_{z_var} f`. In strict mode coefficients leaving the grid are an error.
pub fn shift_apply(var: usize, f: &PolyVec, mode: TruncationMode) -> Result<Truncated<PolyVec>> {
    let g = &f.grid;
    if var >= g.nvars {
        return Err(Error::Malformed(format!("variable {var} out of range for {} variables", g.nvars)));
    }
    let mut out = PolyVec::zeros(g);
    let mut dropped = 0.0;
    for (i, z) in f.coeffs.iter().enumerate() {
        if *z == ZERO {
            continue;
        }
        let (fib, mut m) = g.multi_index(i);
        if m[var] + 1 >= g.trunc[var] {
            dropped += z.norm_sqr();
            continue;
        }
        m[var] += 1;
        out.coeffs[g.index(fib, &m)] = *z;
    }
    if dropped > 0.0 && mode == TruncationMode::Strict {
        return Err(Error::GridOverflow { variable: var });
    }
    Ok(Truncated { value: out, dropped: dropped.sqrt() })
}

/// `M_{z_var}^* f`, exact on the grid.
pub fn shift_adjoint_apply(var: usize, f: &PolyVec) -> Result<PolyVec> {
    let g = &f.grid;
    if var >= g.nvars {
        return Err(Error::Malformed(format!("variable {var} out of range for {} variables", g.nvars)));
    }
    let mut out = PolyVec::zeros(g);
    for (i, z) in f.coeffs.iter().enumerate() {
        let (fib, mut m) = g.multi_index(i);
        if m[var] == 0 {
            continue;
        }
        m[var] -= 1;
        out.coeffs[g.index(fib, &m)] = *z;
    }
    Ok(out)
}

/// `M_{z_var}` applied to every column of a coefficient block; coefficients
/// leaving the grid are dropped and their total norm returned.
pub fn shift_block(grid: &DegreeGrid, var: usize, x: &CMat) -> (CMat, f64) {
    let stride = grid.stride(var);
    let n = grid.trunc[var];
    let mut out = CMat::zeros(x.nrows(), x.ncols());
    let mut dropped = 0.0;
    for j in 0..x.ncols() {
        let src = x.column(j);
        let mut dst = out.column_mut(j);
        for i in 0..x.nrows() {
            let z = src[i];
            if (i / stride) % n + 1 < n {
                dst[i + stride] = z;
            } else {
                dropped += z.norm_sqr();
            }
        }
    }
    (out, dropped.sqrt())
}

/// `M_{z_var}^*` applied to every column of a coefficient block.
pub fn shift_adjoint_block(grid: &DegreeGrid, var: usize, x: &CMat) -> CMat {
    let stride = grid.stride(var);
    let n = grid.trunc[var];
    let mut out = CMat::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        let src = x.column(j);
        let mut dst = out.column_mut(j);
        for i in 0..x.nrows() {
            if !(i / stride).is_multiple_of(n) {
                dst[i - stride] = src[i];
            }
        }
    }
    out
}

/// Columns of the identity at the flat indices of the box `deg_v < bound[v]`.
pub fn box_basis(grid: &DegreeGrid, bound: &[usize]) -> CMat {
    let idx = grid.box_indices(bound);
    let mut m = CMat::zeros(grid.dim(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        m[(i, j)] = linalg::ONE;
    }
    m
}

/// Orthonormal spanning matrix of a subspace of a truncated Hardy space.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceBasis {
    pub grid: DegreeGrid,
    /// `grid.dim() x k`, orthonormal columns.
    pub basis: CMat,
    /// Exclusive per-variable degree bound within which membership is exact.
    pub window: Vec<usize>,
}

impl SubspaceBasis {
    /// Wrap a matrix already known to have orthonormal columns.
    pub fn from_orthonormal(grid: &DegreeGrid, basis: CMat) -> Result<Self> {
        if basis.nrows() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), found: basis.nrows() });
        }
        Ok(SubspaceBasis { grid: grid.clone(), basis, window: grid.full_box() })
    }

    pub fn full(grid: &DegreeGrid) -> Self {
        SubspaceBasis { grid: grid.clone(), basis: linalg::identity(grid.dim()), window: grid.full_box() }
    }

    pub fn zero(grid: &DegreeGrid) -> Self {
        SubspaceBasis { grid: grid.clone(), basis: CMat::zeros(grid.dim(), 0), window: grid.full_box() }
    }

    pub fn with_window(mut self, window: Vec<usize>) -> Self {
        self.window = window;
        self
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn columns(&self) -> Vec<PolyVec> {
        (0..self.dim())
            .map(|j| PolyVec { grid: self.grid.clone(), coeffs: self.basis.column(j).into_owned() })
            .collect()
    }

    pub fn projection(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    pub fn project_coeffs(&self, x: &CMat) -> CMat {
        &self.basis * (self.basis.adjoint() * x)
    }

    pub fn gram_residual(&self) -> f64 {
        linalg::gram_residual(&self.basis)
    }

    /// Orthonormal basis of the orthogonal complement in the grid.
    pub fn complement(&self) -> SubspaceBasis {
        SubspaceBasis { grid: self.grid.clone(), basis: linalg::orth_complement(&self.basis), window: self.window.clone() }
    }

    /// Re-express the basis in the canonical graded-lex form.
    pub fn canonical(&self) -> SubspaceBasis {
        let order = self.grid.graded_order();
        SubspaceBasis {
            grid: self.grid.clone(),
            basis: linalg::canonical_basis(&self.basis, &order, 1e-8),
            window: self.window.clone(),
        }
    }

    /// `max |(I - P) x|` over the columns of `x`.
    pub fn containment_residual(&self, x: &CMat) -> f64 {
        linalg::max_abs(&(x - self.project_coeffs(x)))
    }

    /// Basis of the subspace of elements supported in `deg_v < bound[v]`.
    pub fn restrict_to_box(&self, bound: &[usize], policy: RankPolicy) -> SubspaceBasis {
        let inside: std::collections::HashSet<usize> = self.grid.box_indices(bound).into_iter().collect();
        let outside: Vec<usize> = (0..self.grid.dim()).filter(|i| !inside.contains(i)).collect();
        let rows = self.basis.select_rows(outside.iter());
        let coeff = linalg::null_space(&rows, policy);
        SubspaceBasis { grid: self.grid.clone(), basis: &self.basis * coeff, window: bound.to_vec() }
    }
}

/// Orthonormalize a list of vectors; the numerical rank decides the dimension.
pub fn subspace_from_span(vectors: &[PolyVec], policy: RankPolicy) -> Result<SubspaceBasis> {
    let first = vectors.first().ok_or(Error::EmptySpan)?;
    let grid = &first.grid;
    let mut m = CMat::zeros(grid.dim(), vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        grid.ensure_same(&v.grid)?;
        m.set_column(j, &v.coeffs);
    }
    span_matrix(grid, &m, policy)
}

/// As [`subspace_from_span`], from the columns of a coefficient matrix.
pub fn span_matrix(grid: &DegreeGrid, m: &CMat, policy: RankPolicy) -> Result<SubspaceBasis> {
    if m.nrows() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), found: m.nrows() });
    }
    if linalg::max_abs(m) == 0.0 {
        return Err(Error::EmptySpan);
    }
    let basis = linalg::orthonormal_range(m, policy);
    Ok(SubspaceBasis { grid: grid.clone(), basis, window: grid.full_box() })
}

/// Orthogonal projection of `f` onto `s`.
pub fn project(s: &SubspaceBasis, f: &PolyVec) -> Result<PolyVec> {
    s.grid.ensure_same(&f.grid)?;
    let x = CMat::from_column_slice(f.coeffs.len(), 1, f.coeffs.as_slice());
    let y = s.project_coeffs(&x);
    Ok(PolyVec { grid: f.grid.clone(), coeffs: y.column(0).into_owned() })
}

#[derive(Serialize, Deserialize)]
struct PolyVecJson {
    grid: DegreeGrid,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for PolyVec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolyVecJson { grid: self.grid.clone(), coeffs: self.coeffs.iter().map(|z| [z.re, z.im]).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolyVec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PolyVecJson::deserialize(d)?;
        raw.grid.validate().map_err(serde::de::Error::custom)?;
        if raw.coeffs.len() != raw.grid.dim() {
            return Err(serde::de::Error::custom(format!(
                "expected {} coefficients, found {}",
                raw.grid.dim(),
                raw.coeffs.len()
            )));
        }
        let coeffs = CVec::from_iterator(raw.coeffs.len(), raw.coeffs.iter().map(|p| c(p[0], p[1])));
        Ok(PolyVec { grid: raw.grid, coeffs })
    }
}
