//! Dense complex linear algebra used throughout the crate.
//!
//! Everything is built on the SVD (`nalgebra`, with a Jacobi fallback); the helpers here add the
//! rank policy, null spaces, orthogonal complements, canonical bases and
//! polar factors that the operator-theoretic modules need.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Singular values below `max(rel * sigma_max, abs)` count as zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    pub rel: f64,
    pub abs: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy { rel: 1e-8, abs: 1e-11 }
    }
}

impl RankPolicy {
    pub fn threshold(&self, sigma_max: f64) -> f64 {
        (self.rel * sigma_max).max(self.abs)
    }

    pub fn rank(&self, sv: &[f64]) -> usize {
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let thr = self.threshold(smax);
        sv.iter().filter(|&&s| s > thr).count()
    }
}

/// Thin SVD with singular values sorted in decreasing order.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    /// Right singular vectors as columns.
    pub v: CMat,
}

pub fn svd(a: &CMat) -> Svd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Svd { u: CMat::zeros(m, 0), s: vec![], v: CMat::zeros(n, 0) };
    }
    let dec = a.clone().svd(true, true);
    let u = dec.u.expect("u requested");
    let vt = dec.v_t.expect("v_t requested");
    let d = sorted(u, dec.singular_values.iter().cloned().collect(), vt.adjoint());
    if svd_accurate(a, &d) {
        d
    } else {
        jacobi_svd(a)
    }
}

fn sorted(u: CMat, sv: Vec<f64>, v: CMat) -> Svd {
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut uu = CMat::zeros(u.nrows(), order.len());
    let mut vv = CMat::zeros(v.nrows(), order.len());
    let mut s = Vec::with_capacity(order.len());
    for (dst, &src) in order.iter().enumerate() {
        uu.set_column(dst, &u.column(src));
        vv.set_column(dst, &v.column(src));
        s.push(sv[src]);
    }
    Svd { u: uu, s, v: vv }
}

// nalgebra's complex bidiagonal SVD occasionally returns factors that do
// not reproduce a rank-deficient input; those get redone by Jacobi.
fn svd_accurate(a: &CMat, d: &Svd) -> bool {
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut rec = d.u.clone();
    for (j, s) in d.s.iter().enumerate() {
        rec.column_mut(j).scale_mut(*s);
    }
    let rec_err = (rec * d.v.adjoint() - a).norm();
    let k = d.s.len();
    let ortho = (d.u.adjoint() * &d.u - identity(k)).norm() + (d.v.adjoint() * &d.v - identity(k)).norm();
    rec_err.is_finite() && rec_err <= tol && ortho <= 1e-10
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn jacobi_svd(a: &CMat) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_svd(&a.adjoint());
        return Svd { u: t.v, s: t.s, v: t.u };
    }
    // tall: reduce to the square triangular factor first
    let qr = a.clone().qr();
    let (q, mut w) = (qr.q(), qr.r());
    let mut v = identity(n);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for r in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(r).norm_squared();
                let gamma = w.column(p).dotc(&w.column(r));
                let g = gamma.norm();
                if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, r)] * phase.conj();
                        mat[(i, p)] = xp * cs - xq * sn;
                        mat[(i, r)] = (xp * sn + xq * cs) * phase;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut u = CMat::zeros(n, n);
    let mut live = Vec::new();
    for j in 0..n {
        if sv[j] > f64::EPSILON * smax * n as f64 && sv[j] > 0.0 {
            u.set_column(j, &(w.column(j) / c(sv[j], 0.0)));
            live.push(j);
        }
    }
    if live.len() < n {
        let known = u.select_columns(live.iter());
        let fill = orth_complement(&known);
        let mut f = 0;
        for j in 0..n {
            if !live.contains(&j) {
                u.set_column(j, &fill.column(f));
                f += 1;
            }
        }
    }
    sorted(q * u, sv, v)
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    svd(a).s
}

/// Largest entry modulus; zero for empty matrices.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm estimate (largest singular value).
pub fn op_norm(a: &CMat) -> f64 {
    singular_values(a).first().cloned().unwrap_or(0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Orthonormal basis of the column space.
pub fn orthonormal_range(a: &CMat, policy: RankPolicy) -> CMat {
    let d = svd(a);
    let r = policy.rank(&d.s);
    d.u.columns(0, r).into_owned()
}

/// Orthonormal basis of the null space of `a`.
pub fn null_space(a: &CMat, policy: RankPolicy) -> CMat {
    let n = a.ncols();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return identity(n);
    }
    let d = svd(a);
    let r = policy.rank(&d.s);
    let row_space = d.v.columns(0, r).into_owned();
    orth_complement(&row_space)
}

/// Complex Householder reflector `H = I - 2 v v^* / (v^* v)` sending `x` to a multiple of `e_0`.
fn householder(x: &[C64]) -> Option<Vec<C64>> {
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { ONE };
    let mut v: Vec<C64> = x.to_vec();
    v[0] += phase * norm;
    Some(v)
}

fn apply_reflector(v: &[C64], offset: usize, col: &mut [C64]) {
    let vv: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    if vv == 0.0 {
        return;
    }
    let dot: C64 = v.iter().zip(&col[offset..]).map(|(a, b)| a.conj() * b).sum();
    let f = dot * (2.0 / vv);
    for (a, b) in v.iter().zip(col[offset..].iter_mut()) {
        *b -= a * f;
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns of `b`.
pub fn orth_complement(b: &CMat) -> CMat {
    let (m, k) = b.shape();
    if k == 0 {
        return identity(m);
    }
    let mut work = b.clone();
    let mut reflectors: Vec<(usize, Vec<C64>)> = Vec::with_capacity(k);
    for j in 0..k.min(m) {
        let x: Vec<C64> = (j..m).map(|i| work[(i, j)]).collect();
        if let Some(v) = householder(&x) {
            for col in j..k {
                let mut c: Vec<C64> = work.column(col).iter().cloned().collect();
                apply_reflector(&v, j, &mut c);
                work.set_column(col, &CVec::from_vec(c));
            }
            reflectors.push((j, v));
        }
    }
    let rank = reflectors.len();
    let mut out = CMat::zeros(m, m - rank.min(m));
    for (dst, e) in (rank..m).enumerate() {
        let mut c = vec![ZERO; m];
        c[e] = ONE;
        for (off, v) in reflectors.iter().rev() {
            apply_reflector(v, *off, &mut c);
        }
        out.set_column(dst, &CVec::from_vec(c));
    }
    out
}

/// Canonical orthonormal basis of the column span of the orthonormal `b`:
/// rows are visited in `order`; each time a row is not annihilated by the
/// remaining coefficient space, the vector spanning the removed direction is
/// emitted. Every emitted vector is zero on earlier pivot rows and has a real
/// positive entry on its own pivot.
pub fn canonical_basis(b: &CMat, order: &[usize], tol: f64) -> CMat {
    let k = b.ncols();
    let mut coeff = identity(k);
    let mut out: Vec<CVec> = Vec::with_capacity(k);
    for &row in order {
        if coeff.ncols() == 0 {
            break;
        }
        let a = b.row(row) * &coeff;
        let an = a.norm();
        if an <= tol {
            continue;
        }
        let dir = a.adjoint() / C64::new(an, 0.0);
        out.push(b * (&coeff * &dir));
        let rest = orth_complement(&CMat::from_column_slice(dir.len(), 1, dir.as_slice()));
        coeff = &coeff * rest;
    }
    let mut m = CMat::zeros(b.nrows(), out.len());
    for (j, v) in out.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

/// Unitary factor `Q` of the polar decomposition `X = Q |X|`.
pub fn polar_unitary(x: &CMat) -> CMat {
    let d = svd(x);
    &d.u * d.v.adjoint()
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &CMat, b: &CMat, policy: RankPolicy) -> CMat {
    let d = svd(a);
    let r = policy.rank(&d.s);
    let mut x = CMat::zeros(a.ncols(), b.ncols());
    for j in 0..r {
        let uj = d.u.column(j);
        let vj = d.v.column(j);
        let coef = uj.adjoint() * b / C64::new(d.s[j], 0.0);
        x += vj * coef;
    }
    x
}

/// Kronecker product, `a` carrying the slow index.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    out
}

pub fn hstack(blocks: &[CMat], nrows: usize) -> CMat {
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(nrows, total);
    let mut off = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), nrows);
        out.columns_mut(off, b.ncols()).copy_from(b);
        off += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[CMat], ncols: usize) -> CMat {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(total, ncols);
    let mut off = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), ncols);
        out.rows_mut(off, b.nrows()).copy_from(b);
        off += b.nrows();
    }
    out
}

/// `max |A^* A - I|` for a matrix with (supposedly) orthonormal columns.
pub fn gram_residual(a: &CMat) -> f64 {
    let g = a.adjoint() * a;
    max_abs(&(g - identity(a.ncols())))
}

pub fn is_unitary_residual(u: &CMat) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity(n))).max(max_abs(&(u * u.adjoint() - identity(n))))
}

pub fn is_projection_residual(p: &CMat) -> f64 {
    max_abs(&(p * p - p)).max(max_abs(&(p.adjoint() - p)))
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn max_eigenvalue_hermitian(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(m: usize, n: usize, seed: u64) -> CMat {
        // deterministic pseudo-random fill
        let mut s = seed;
        CMat::from_fn(m, n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            C64::new(a, b)
        })
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal() {
        let a = sample(9, 3, 1);
        let q = orthonormal_range(&a, RankPolicy::default());
        let c = orth_complement(&q);
        assert_eq!(c.ncols(), 6);
        assert!(gram_residual(&c) < 1e-13);
        assert!(max_abs(&(q.adjoint() * &c)) < 1e-13);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = sample(2, 5, 7);
        let n = null_space(&a, RankPolicy::default());
        assert_eq!(n.ncols(), 3);
        assert!(max_abs(&(&a * &n)) < 1e-13);
    }

    #[test]
    fn null_space_detects_dependent_rows() {
        let mut a = sample(3, 4, 3);
        let r0 = a.row(0).into_owned();
        a.set_row(2, &(r0 * C64::new(2.0, -1.0)));
        assert_eq!(null_space(&a, RankPolicy::default()).ncols(), 2);
    }

    #[test]
    fn canonical_basis_of_coordinate_span_is_coordinates() {
        let mut b = CMat::zeros(4, 2);
        b[(1, 0)] = C64::new(0.0, 1.0);
        b[(3, 1)] = C64::new(-1.0, 0.0);
        let q = orthonormal_range(&b, RankPolicy::default());
        let canon = canonical_basis(&q, &[0, 1, 2, 3], 1e-10);
        assert!((canon[(1, 0)] - ONE).norm() < 1e-14);
        assert!((canon[(3, 1)] - ONE).norm() < 1e-14);
    }

    #[test]
    fn canonical_basis_is_invariant_under_rotation() {
        let q = orthonormal_range(&sample(6, 3, 11), RankPolicy::default());
        let rot = polar_unitary(&sample(3, 3, 5));
        let order: Vec<usize> = (0..6).collect();
        let a = canonical_basis(&q, &order, 1e-10);
        let b = canonical_basis(&(&q * rot), &order, 1e-10);
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = sample(7, 3, 2);
        let x = sample(3, 2, 4);
        let b = &a * &x;
        assert!(max_abs(&(lstsq(&a, &b, RankPolicy::default()) - x)) < 1e-12);
    }

    #[test]
    fn polar_factor_is_unitary() {
        let u = polar_unitary(&sample(4, 4, 9));
        assert!(is_unitary_residual(&u) < 1e-13);
    }

    #[test]
    fn kron_orders_slow_index_first() {
        let a = CMat::from_row_slice(2, 1, &[ONE, c(2.0, 0.0)]);
        let b = CMat::from_row_slice(2, 1, &[ONE, c(3.0, 0.0)]);
        let k = kron(&a, &b);
        let expect = [1.0, 3.0, 2.0, 6.0];
        for (i, e) in expect.iter().enumerate() {
            assert_eq!(k[(i, 0)].re, *e);
        }
    }

    fn check_svd(a: &CMat, d: &Svd) {
        let mut rec = d.u.clone();
        for (j, s) in d.s.iter().enumerate() {
            rec.column_mut(j).scale_mut(*s);
        }
        assert!(max_abs(&(rec * d.v.adjoint() - a)) < 1e-12);
        assert!(gram_residual(&d.u) < 1e-12 && gram_residual(&d.v) < 1e-12);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn jacobi_svd_on_rank_deficient_shapes() {
        for (m, n, r) in [(40, 12, 5), (7, 19, 3), (9, 9, 9), (30, 10, 0)] {
            let a = if r == 0 { CMat::zeros(m, n) } else { sample(m, r, 3) * sample(r, n, 4) };
            let d = jacobi_svd(&a);
            check_svd(&a, &d);
            assert_eq!(RankPolicy::default().rank(&d.s), r);
            check_svd(&a, &svd(&a));
        }
    }
}
