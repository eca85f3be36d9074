//! Matrix polynomials as multiplication operators on `H^2_W(D)`, finite
//! Blaschke products and bases of the model spaces `Q_phi`.

use serde::{Deserialize, Serialize};

use crate::coeffspace::{DegreeGrid, PolyVec, SubspaceBasis, Truncated, TruncationMode};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, RankPolicy, C64, ONE, ZERO};
use crate::report::{Check, VerificationReport, Window};
use crate::wire;

/// `Phi(z) = sum_k Phi_k z^k` with `rows x cols` coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MatPoly {
    pub rows: usize,
    pub cols: usize,
    pub coeffs: Vec<CMat>,
}

impl MatPoly {
    pub fn new(coeffs: Vec<CMat>) -> Result<Self> {
        let first = coeffs.first().ok_or_else(|| Error::Malformed("matrix polynomial without coefficients".into()))?;
        let (rows, cols) = first.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::Malformed("matrix polynomial with an empty dimension".into()));
        }
        if let Some(bad) = coeffs.iter().find(|m| m.shape() != (rows, cols)) {
            return Err(Error::Malformed(format!("coefficient of shape {:?} in a {rows}x{cols} polynomial", bad.shape())));
        }
        Ok(MatPoly { rows, cols, coeffs })
    }

    pub fn constant(m: CMat) -> Self {
        let (rows, cols) = m.shape();
        MatPoly { rows, cols, coeffs: vec![m] }
    }

    /// `z I_dim`.
    pub fn shift(dim: usize) -> Self {
        MatPoly { rows: dim, cols: dim, coeffs: vec![CMat::zeros(dim, dim), linalg::identity(dim)] }
    }

    /// Scalar polynomial from its coefficients.
    pub fn scalar(coeffs: &[C64]) -> Self {
        MatPoly { rows: 1, cols: 1, coeffs: coeffs.iter().map(|&z| CMat::from_element(1, 1, z)).collect() }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> CMat {
        self.coeffs.get(k).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols))
    }

    /// Drop trailing coefficients of modulus at most `tol`.
    pub fn trimmed(&self, tol: f64) -> MatPoly {
        let mut coeffs = self.coeffs.clone();
        while coeffs.len() > 1 && linalg::max_abs(coeffs.last().unwrap()) <= tol {
            coeffs.pop();
        }
        MatPoly { coeffs, ..self.clone() }
    }

    pub fn mul(&self, other: &MatPoly) -> Result<MatPoly> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let deg = self.degree() + other.degree();
        let mut out = vec![CMat::zeros(self.rows, other.cols); deg + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Ok(MatPoly { rows: self.rows, cols: other.cols, coeffs: out })
    }

    /// Right multiplication by a constant matrix.
    pub fn mul_const(&self, m: &CMat) -> MatPoly {
        MatPoly { rows: self.rows, cols: m.ncols(), coeffs: self.coeffs.iter().map(|a| a * m).collect() }
    }

    /// `max_k |Phi_k - Psi_k|` over the common support.
    pub fn distance(&self, other: &MatPoly) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return f64::INFINITY;
        }
        (0..n).map(|k| linalg::max_abs(&(self.coeff(k) - other.coeff(k)))).fold(0.0, f64::max)
    }

    /// Block lower-triangular Toeplitz matrix of `M_Phi` on a truncation of
    /// length `trunc`: `(rows*trunc) x (cols*trunc)`, fiber index fastest.
    pub fn toeplitz(&self, trunc: usize) -> CMat {
        let (r, cl) = (self.rows, self.cols);
        let mut t = CMat::zeros(r * trunc, cl * trunc);
        for (k, a) in self.coeffs.iter().enumerate() {
            for j in 0..trunc.saturating_sub(k) {
                t.view_mut(((j + k) * r, j * cl), (r, cl)).copy_from(a);
            }
        }
        t
    }

    /// The Toeplitz products `sum_k Phi_k^* Phi_{k+j}` for `j = 0..=deg`.
    pub fn toeplitz_moments(&self) -> Vec<CMat> {
        (0..=self.degree())
            .map(|j| {
                let mut s = CMat::zeros(self.cols, self.cols);
                for k in 0..self.coeffs.len() - j {
                    s += self.coeffs[k].adjoint() * &self.coeffs[k + j];
                }
                s
            })
            .collect()
    }
}

fn one_variable(f: &PolyVec, fiber: usize) -> Result<()> {
    if f.grid.nvars != 1 {
        return Err(Error::Malformed(format!("expected a one-variable grid, found {} variables", f.grid.nvars)));
    }
    if f.grid.fiber_dim != fiber {
        return Err(Error::DimensionMismatch { expected: fiber, found: f.grid.fiber_dim });
    }
    Ok(())
}

/// `M_Phi f` by coefficient convolution. The output keeps the truncation of `f`.
pub fn matpoly_apply(phi: &MatPoly, f: &PolyVec, mode: TruncationMode) -> Result<Truncated<PolyVec>> {
    one_variable(f, phi.cols)?;
    let n = f.grid.trunc[0];
    let grid = DegreeGrid::vector_disc(n, phi.rows);
    let mut out = PolyVec::zeros(&grid);
    let mut dropped = 0.0;
    for k in 0..n {
        let fk = f.coeffs.rows(k * phi.cols, phi.cols);
        if fk.iter().all(|z| *z == ZERO) {
            continue;
        }
        for (j, a) in phi.coeffs.iter().enumerate() {
            let y = a * fk;
            if k + j < n {
                let mut dst = out.coeffs.rows_mut((k + j) * phi.rows, phi.rows);
                dst += y;
            } else {
                dropped += y.norm_squared();
            }
        }
    }
    if dropped > 0.0 && mode == TruncationMode::Strict {
        return Err(Error::GridOverflow { variable: 0 });
    }
    Ok(Truncated { value: out, dropped: dropped.sqrt() })
}

/// `M_Phi^* f`, exact for polynomial `f`.
pub fn matpoly_adjoint_apply(phi: &MatPoly, f: &PolyVec) -> Result<PolyVec> {
    one_variable(f, phi.rows)?;
    let n = f.grid.trunc[0];
    let grid = DegreeGrid::vector_disc(n, phi.cols);
    let mut out = PolyVec::zeros(&grid);
    for k in 0..n {
        let mut acc = CVec::zeros(phi.cols);
        for (j, a) in phi.coeffs.iter().enumerate() {
            if k + j < n {
                acc += a.adjoint() * f.coeffs.rows((k + j) * phi.rows, phi.rows);
            }
        }
        out.coeffs.rows_mut(k * phi.cols, phi.cols).copy_from(&acc);
    }
    Ok(out)
}

/// Toeplitz innerness test: `sum_k Phi_k^* Phi_{k+j} = delta_{j0} I`.
pub fn is_inner(phi: &MatPoly, tol: f64) -> VerificationReport {
    let mut report = VerificationReport::new();
    if phi.rows < phi.cols {
        report.push(Check::flag("inner.shape", "rows >= cols", false));
        return report;
    }
    for (j, m) in phi.toeplitz_moments().into_iter().enumerate() {
        let target = if j == 0 { linalg::identity(phi.cols) } else { CMat::zeros(phi.cols, phi.cols) };
        report.push(Check::new(
            format!("inner.moment.j={j}"),
            "isometric multiplier (Toeplitz moment)",
            linalg::max_abs(&(m - target)),
            tol,
            Window::exact(phi.cols),
        ));
    }
    report
}

/// Finite Blaschke product `c prod_j (z - a_j) / (1 - conj(a_j) z)`, or the
/// zero function.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteBlaschke {
    pub zeros: Vec<C64>,
    pub c: C64,
    pub zero_function: bool,
}

impl FiniteBlaschke {
    pub fn new(zeros: Vec<C64>) -> Result<Self> {
        Self::with_constant(zeros, ONE)
    }

    pub fn with_constant(zeros: Vec<C64>, c: C64) -> Result<Self> {
        if let Some(a) = zeros.iter().find(|a| !(a.norm() < 1.0)) {
            return Err(Error::ZeroOutsideDisc { re: a.re, im: a.im });
        }
        if (c.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Malformed(format!("Blaschke constant {c} is not unimodular")));
        }
        Ok(FiniteBlaschke { zeros, c, zero_function: false })
    }

    /// `z^m`.
    pub fn monomial(m: usize) -> Self {
        FiniteBlaschke { zeros: vec![ZERO; m], c: ONE, zero_function: false }
    }

    pub fn zero() -> Self {
        FiniteBlaschke { zeros: vec![], c: ONE, zero_function: true }
    }

    /// Number of zeros; `None` for the zero function.
    pub fn degree(&self) -> Option<usize> {
        (!self.zero_function).then_some(self.zeros.len())
    }

    pub fn is_monomial(&self) -> bool {
        !self.zero_function && self.zeros.iter().all(|a| *a == ZERO)
    }

    pub fn max_modulus(&self) -> f64 {
        self.zeros.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Taylor coefficients `0..len`.
    pub fn coefficients(&self, len: usize) -> Vec<C64> {
        let mut out = vec![ZERO; len];
        if self.zero_function || len == 0 {
            return out;
        }
        out[0] = self.c;
        for a in &self.zeros {
            let factor = blaschke_factor(*a, len);
            out = convolve(&out, &factor, len);
        }
        out
    }
}

fn blaschke_factor(a: C64, len: usize) -> Vec<C64> {
    let mut f = vec![ZERO; len];
    f[0] = -a;
    let ac = a.conj();
    let w = 1.0 - a.norm_sqr();
    let mut p = ONE;
    for item in f.iter_mut().skip(1) {
        *item = p * w;
        p *= ac;
    }
    f
}

fn convolve(x: &[C64], y: &[C64], len: usize) -> Vec<C64> {
    let mut out = vec![ZERO; len];
    for (i, a) in x.iter().enumerate().filter(|(_, a)| **a != ZERO) {
        for (j, b) in y.iter().enumerate().take(len - i) {
            out[i + j] += a * b;
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BlaschkeJson {
    Zero { zero_function: bool },
    Product { zeros: Vec<wire::Pair>, #[serde(default = "unit_pair")] c: wire::Pair },
}

fn unit_pair() -> wire::Pair {
    [1.0, 0.0]
}

impl Serialize for FiniteBlaschke {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.zero_function {
            BlaschkeJson::Zero { zero_function: true }.serialize(s)
        } else {
            BlaschkeJson::Product { zeros: self.zeros.iter().map(|z| wire::pair(*z)).collect(), c: wire::pair(self.c) }
                .serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for FiniteBlaschke {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match BlaschkeJson::deserialize(d)? {
            BlaschkeJson::Zero { zero_function: true } => Ok(FiniteBlaschke::zero()),
            BlaschkeJson::Zero { zero_function: false } => Err(serde::de::Error::custom("zero_function must be true when given")),
            BlaschkeJson::Product { zeros, c } => {
                FiniteBlaschke::with_constant(zeros.into_iter().map(wire::complex).collect(), wire::complex(c))
                    .map_err(serde::de::Error::custom)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MatPolyJson {
    rows: usize,
    cols: usize,
    coeffs: Vec<wire::MatrixJson>,
}

impl Serialize for MatPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatPolyJson { rows: self.rows, cols: self.cols, coeffs: self.coeffs.iter().map(wire::matrix_to_json).collect() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MatPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatPolyJson::deserialize(d)?;
        let coeffs = raw
            .coeffs
            .iter()
            .map(|m| wire::matrix_from_json(m, Some((raw.rows, raw.cols))))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(serde::de::Error::custom)?;
        MatPoly::new(coeffs).map_err(serde::de::Error::custom)
    }
}

/// Truncated Taylor expansion of a Blaschke product.
#[derive(Clone, Debug)]
pub struct BlaschkeTaylor {
    pub poly: PolyVec,
    /// `max |a_j|^N`, the scale of the neglected tail.
    pub tail_scale: f64,
    /// Measured l2 norm of the coefficients of degree `>= N`.
    pub tail_norm: f64,
}

pub fn blaschke_taylor(phi: &FiniteBlaschke, trunc: usize) -> Result<BlaschkeTaylor> {
    if trunc == 0 {
        return Err(Error::TruncationTooSmall { needed: 1, got: 0 });
    }
    let grid = DegreeGrid::polydisc(1, trunc);
    let r = phi.max_modulus();
    let extra = if r == 0.0 || phi.zero_function {
        phi.zeros.len() + 1
    } else {
        ((-40.0 / r.log10()).ceil() as usize + 4 * phi.zeros.len()).min(8192)
    };
    let all = phi.coefficients(trunc + extra);
    let tail_norm = all[trunc..].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let coeffs = CVec::from_column_slice(&all[..trunc]);
    Ok(BlaschkeTaylor {
        poly: PolyVec { grid, coeffs },
        tail_scale: if phi.zero_function { 0.0 } else { r.powi(trunc as i32) },
        tail_norm,
    })
}

/// Orthonormal basis of `Q_phi` and the residual `|P_Q - (I - T T^*)|`
/// against the truncated Toeplitz matrix `T` of `phi`.
#[derive(Clone, Debug)]
pub struct ModelSpace {
    pub basis: SubspaceBasis,
    pub residual: f64,
}

/// Relative tail above which a kernel-derivative chain is rejected.
pub const CHAIN_TAIL_LIMIT: f64 = 1e-6;

pub fn qphi_basis(phi: &FiniteBlaschke, trunc: usize) -> Result<ModelSpace> {
    let grid = DegreeGrid::polydisc(1, trunc);
    if phi.zero_function {
        return Ok(ModelSpace { basis: SubspaceBasis::full(&grid), residual: 0.0 });
    }
    let d = phi.zeros.len();
    if trunc < d + 2 {
        return Err(Error::TruncationTooSmall { needed: d + 2, got: trunc });
    }
    if d == 0 {
        return Ok(ModelSpace { basis: SubspaceBasis::zero(&grid), residual: 0.0 });
    }
    let mut groups: Vec<(C64, usize)> = Vec::new();
    for a in &phi.zeros {
        match groups.iter_mut().find(|(b, _)| (b - a).norm() <= 1e-12) {
            Some(g) => g.1 += 1,
            None => groups.push((*a, 1)),
        }
    }
    let mut kernels = CMat::zeros(trunc, d);
    let mut col = 0;
    for (a, mult) in groups {
        for s in 0..mult {
            let (v, tail) = kernel_derivative(a, s, trunc);
            if mult > 1 && tail > CHAIN_TAIL_LIMIT {
                return Err(Error::ChainTruncation { tail });
            }
            kernels.set_column(col, &v);
            col += 1;
        }
    }
    let span = crate::coeffspace::span_matrix(&grid, &kernels, RankPolicy { rel: 1e-12, abs: 1e-300 })?;
    if span.dim() != d {
        return Err(Error::ChainTruncation { tail: f64::NAN });
    }
    let basis = span.canonical();
    let coeffs = phi.coefficients(trunc);
    let t = MatPoly::scalar(&coeffs).toeplitz(trunc);
    let defect = linalg::identity(trunc) - &t * t.adjoint();
    let residual = linalg::max_abs(&(basis.projection() - defect));
    Ok(ModelSpace { basis, residual })
}

/// `sum_k k(k-1)...(k-s+1) conj(a)^{k-s} z^k` truncated to `trunc`, with the
/// relative l2 norm of the neglected tail.
fn kernel_derivative(a: C64, s: usize, trunc: usize) -> (CVec, f64) {
    let ac = a.conj();
    let coef = |k: usize| -> C64 {
        if k < s {
            return ZERO;
        }
        let falling: f64 = (0..s).map(|t| (k - t) as f64).product();
        c(falling, 0.0) * ac.powu((k - s) as u32)
    };
    let v = CVec::from_fn(trunc, |k, _| coef(k));
    let r = a.norm();
    let tail = if r == 0.0 {
        0.0
    } else {
        let extra = ((-40.0 / r.log10()).ceil() as usize + 8 * (s + 1)).min(16384);
        (trunc..trunc + extra).map(|k| coef(k).norm_sqr()).sum::<f64>().sqrt()
    };
    let norm = v.norm();
    (v, if norm > 0.0 { tail / norm } else { f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn swap() -> CMat {
        CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    fn proj_e1() -> CMat {
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO])
    }

    fn model_symbol(u: &CMat, p: &CMat) -> MatPoly {
        let perp = linalg::identity(p.nrows()) - p;
        MatPoly::new(vec![u * perp, u * p]).unwrap()
    }

    #[test]
    fn shift_symbol_applies() {
        let g = DegreeGrid::vector_disc(4, 1);
        let one = PolyVec::monomial(&g, 0, &[0]);
        let out = matpoly_apply(&MatPoly::shift(1), &one, TruncationMode::Strict).unwrap();
        assert_eq!(out.value, PolyVec::monomial(&g, 0, &[1]));
    }

    #[test]
    fn constant_unitary_applies() {
        let g = DegreeGrid::vector_disc(3, 2);
        let e1 = PolyVec::monomial(&g, 0, &[0]);
        let out = matpoly_apply(&MatPoly::constant(swap()), &e1, TruncationMode::Strict).unwrap();
        assert_eq!(out.value, PolyVec::monomial(&g, 1, &[0]));
    }

    #[test]
    fn model_symbol_on_e1_is_z_e2() {
        let g = DegreeGrid::vector_disc(3, 2);
        let phi = model_symbol(&swap(), &proj_e1());
        let e1 = PolyVec::monomial(&g, 0, &[0]);
        let out = matpoly_apply(&phi, &e1, TruncationMode::Strict).unwrap().value;
        // convolution oracle: (Phi f)_k = sum_j Phi_j f_{k-j}
        let mut oracle = PolyVec::zeros(&g);
        for k in 0..3 {
            for j in 0..=k.min(1) {
                let fk = e1.coeffs.rows((k - j) * 2, 2).into_owned();
                let y = phi.coeff(j) * fk;
                let mut dst = oracle.coeffs.rows_mut(k * 2, 2);
                dst += y;
            }
        }
        assert_eq!(out, oracle);
        assert_eq!(out, PolyVec::monomial(&g, 1, &[1]));
    }

    #[test]
    fn adjoint_examples() {
        let g = DegreeGrid::vector_disc(4, 1);
        let z = MatPoly::shift(1);
        assert_eq!(matpoly_adjoint_apply(&z, &PolyVec::monomial(&g, 0, &[0])).unwrap(), PolyVec::zeros(&g));
        assert_eq!(
            matpoly_adjoint_apply(&z, &PolyVec::monomial(&g, 0, &[1])).unwrap(),
            PolyVec::monomial(&g, 0, &[0])
        );
        let f = PolyVec::from_real(&g, &[0.0, 0.0, 3.0]).unwrap();
        assert_eq!(matpoly_adjoint_apply(&z, &f).unwrap(), PolyVec::from_real(&g, &[0.0, 3.0]).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = DegreeGrid::vector_disc(3, 3);
        let f = PolyVec::zeros(&g);
        assert!(matches!(
            matpoly_apply(&MatPoly::shift(2), &f, TruncationMode::Strict),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn strict_overflow() {
        let g = DegreeGrid::vector_disc(2, 1);
        let f = PolyVec::monomial(&g, 0, &[1]);
        assert!(matches!(matpoly_apply(&MatPoly::shift(1), &f, TruncationMode::Strict), Err(Error::GridOverflow { .. })));
        assert!(matpoly_apply(&MatPoly::shift(1), &f, TruncationMode::Lossy).unwrap().truncated());
    }

    #[test]
    fn model_symbol_is_inner_exactly() {
        let r = is_inner(&model_symbol(&swap(), &proj_e1()), 0.0);
        assert!(r.all_pass());
        assert_eq!(r.max_residual("inner"), 0.0);
    }

    #[test]
    fn one_plus_z_is_not_inner() {
        let r = is_inner(&MatPoly::scalar(&[ONE, ONE]), 1e-10);
        assert!(!r.all_pass());
        assert_eq!(r.get("inner.moment.j=0").unwrap().residual, 1.0);
    }

    #[test]
    fn wide_symbol_is_not_inner() {
        let m = MatPoly::constant(CMat::from_element(1, 2, ONE));
        assert!(!is_inner(&m, 1e-10).all_pass());
    }

    #[test]
    fn taylor_of_z() {
        let t = blaschke_taylor(&FiniteBlaschke::monomial(1), 4).unwrap();
        assert_eq!(t.poly.coeffs.as_slice(), &[ZERO, ONE, ZERO, ZERO]);
        assert_eq!(t.tail_norm, 0.0);
    }

    #[test]
    fn taylor_of_half_matches_geometric_series() {
        let n = 20;
        let t = blaschke_taylor(&FiniteBlaschke::new(vec![c(0.5, 0.0)]).unwrap(), n).unwrap();
        // (z - 1/2) * sum_k (z/2)^k
        let geo: Vec<f64> = (0..n).map(|k| 0.5f64.powi(k as i32)).collect();
        for k in 0..n {
            let mut oracle = -0.5 * geo[k];
            if k >= 1 {
                oracle += geo[k - 1];
            }
            assert!((t.poly.coeffs[k] - c(oracle, 0.0)).norm() < 1e-15);
        }
        assert!((t.poly.coeffs[0].re + 0.5).abs() < 1e-15);
        assert!((t.poly.coeffs[1].re - 0.75).abs() < 1e-15);
        assert!((t.poly.coeffs[3].re - 3.0 / 16.0).abs() < 1e-15);
        assert!(t.tail_norm <= 10.0 * t.tail_scale);
    }

    #[test]
    fn taylor_of_product_is_convolution() {
        let n = 16;
        let half = FiniteBlaschke::new(vec![c(0.5, 0.0)]).unwrap();
        let both = FiniteBlaschke::new(vec![ZERO, c(0.5, 0.0)]).unwrap();
        let h = blaschke_taylor(&half, n).unwrap().poly;
        let b = blaschke_taylor(&both, n).unwrap().poly;
        assert_eq!(b.coeffs[0], ZERO);
        for k in 1..n {
            assert!((b.coeffs[k] - h.coeffs[k - 1]).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_outside_disc_rejected() {
        assert!(matches!(FiniteBlaschke::new(vec![c(1.0, 0.0)]), Err(Error::ZeroOutsideDisc { .. })));
    }

    #[test]
    fn qphi_of_monomials() {
        let q = qphi_basis(&FiniteBlaschke::monomial(1), 6).unwrap();
        assert_eq!(q.basis.basis, CMat::identity(6, 1));
        let q = qphi_basis(&FiniteBlaschke::monomial(3), 8).unwrap();
        assert_eq!(q.basis.dim(), 3);
        assert!(linalg::max_abs(&(q.basis.basis.clone() - CMat::identity(8, 3))) < 1e-14);
        assert!(q.residual < 1e-14);
    }

    #[test]
    fn qphi_of_half_is_normalized_kernel() {
        let q = qphi_basis(&FiniteBlaschke::new(vec![c(0.5, 0.0)]).unwrap(), 32).unwrap();
        assert_eq!(q.basis.dim(), 1);
        let s = 3f64.sqrt() / 2.0;
        for k in 0..32 {
            assert!((q.basis.basis[(k, 0)] - c(s * 0.5f64.powi(k as i32), 0.0)).norm() < 1e-12);
        }
        assert!(q.residual < 1e-15);
    }

    #[test]
    fn qphi_repeated_zero_chain() {
        let a = c(0.3, 0.2);
        let q = qphi_basis(&FiniteBlaschke::new(vec![a, a, c(-0.1, 0.0)]).unwrap(), 40).unwrap();
        assert_eq!(q.basis.dim(), 3);
        assert!(q.residual < 1e-8, "{}", q.residual);
    }

    #[test]
    fn qphi_repeated_chain_too_short() {
        let a = c(0.95, 0.0);
        assert!(matches!(qphi_basis(&FiniteBlaschke::new(vec![a, a]).unwrap(), 12), Err(Error::ChainTruncation { .. })));
    }

    #[test]
    fn qphi_zero_function_is_everything() {
        let q = qphi_basis(&FiniteBlaschke::zero(), 5).unwrap();
        assert_eq!(q.basis.dim(), 5);
    }

    #[test]
    fn json_formats() {
        let b: FiniteBlaschke = serde_json::from_str(r#"{"zeros":[[0.5,0.0]],"c":[1.0,0.0]}"#).unwrap();
        assert_eq!(b.zeros, vec![c(0.5, 0.0)]);
        let z: FiniteBlaschke = serde_json::from_str(r#"{"zero_function":true}"#).unwrap();
        assert!(z.zero_function);
        assert!(serde_json::from_str::<FiniteBlaschke>(r#"{"zeros":[[1.5,0.0]]}"#).is_err());
        let m = model_symbol(&swap(), &proj_e1());
        let back: MatPoly = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<MatPoly>(r#"{"rows":2,"cols":2,"coeffs":[[[[1,0]]]]}"#).is_err());
    }
}
