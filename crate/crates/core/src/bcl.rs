//! Model n-isometry tuples `(E, U_i, P_i)` with symbols
//! `Phi_i(z) = U_i (P_i^perp + z P_i)`: validation of the four defining
//! conditions, symbol construction and a joint-intertwiner search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, RankPolicy, C64, ONE, ZERO};
use crate::matpoly::MatPoly;
use crate::report::{Check, Tolerances, VerificationReport, Window};
use crate::wire;

#[derive(Clone, Debug, PartialEq)]
pub struct BCLTuple {
    pub n: usize,
    pub e: usize,
    pub u: Vec<CMat>,
    pub p: Vec<CMat>,
}

impl BCLTuple {
    pub fn new(u: Vec<CMat>, p: Vec<CMat>) -> Result<Self> {
        let n = u.len();
        if n == 0 || p.len() != n {
            return Err(Error::Malformed(format!("need equally many unitaries and projections, got {} and {}", n, p.len())));
        }
        let e = u[0].nrows();
        if e == 0 {
            return Err(Error::Malformed("empty coefficient space".into()));
        }
        for m in u.iter().chain(p.iter()) {
            if m.shape() != (e, e) {
                return Err(Error::Malformed(format!("expected {e}x{e} matrices, found {:?}", m.shape())));
            }
        }
        Ok(BCLTuple { n, e, u, p })
    }

    /// Conjugate every matrix by the unitary `q`: `X -> q X q^*`.
    pub fn conjugate(&self, q: &CMat) -> BCLTuple {
        let conj = |m: &CMat| q * m * q.adjoint();
        BCLTuple { n: self.n, e: self.e, u: self.u.iter().map(conj).collect(), p: self.p.iter().map(conj).collect() }
    }

    /// Relabel the isometries: the new `i`-th entry is the old `perm[i]`-th.
    pub fn permuted(&self, perm: &[usize]) -> BCLTuple {
        BCLTuple {
            n: self.n,
            e: self.e,
            u: perm.iter().map(|&i| self.u[i].clone()).collect(),
            p: perm.iter().map(|&i| self.p[i].clone()).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BclJson {
    n: usize,
    e: usize,
    #[serde(rename = "U")]
    u: Vec<wire::MatrixJson>,
    #[serde(rename = "P")]
    p: Vec<wire::MatrixJson>,
}

impl Serialize for BCLTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BclJson {
            n: self.n,
            e: self.e,
            u: self.u.iter().map(wire::matrix_to_json).collect(),
            p: self.p.iter().map(wire::matrix_to_json).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BCLTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = BclJson::deserialize(d)?;
        if raw.u.len() != raw.n || raw.p.len() != raw.n {
            return Err(D::Error::custom(format!("n = {} but {} U and {} P matrices", raw.n, raw.u.len(), raw.p.len())));
        }
        let decode = |ms: &[wire::MatrixJson]| {
            ms.iter().map(|m| wire::matrix_from_json(m, Some((raw.e, raw.e)))).collect::<std::result::Result<Vec<_>, _>>()
        };
        let u = decode(&raw.u).map_err(D::Error::custom)?;
        let p = decode(&raw.p).map_err(D::Error::custom)?;
        BCLTuple::new(u, p).map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, Default)]
pub struct ValidateOptions {
    pub tol: Tolerances,
    /// Also check condition (d) in every order (only for `n <= 4`).
    pub all_orders: bool,
    /// Orthonormal columns (in `E` coordinates) spanning the subspace on which
    /// residuals are evaluated; `None` means all of `E`.
    pub window: Option<CMat>,
}

/// `Phi_i = U_i P_i^perp + z U_i P_i`.
pub fn bcl_symbols(t: &BCLTuple) -> Vec<MatPoly> {
    let id = linalg::identity(t.e);
    t.u.iter()
        .zip(&t.p)
        .map(|(u, p)| MatPoly { rows: t.e, cols: t.e, coeffs: vec![u * (&id - p), u * p] })
        .collect()
}

/// `Phi_1 Phi_2 ... Phi_n` in the stated order.
pub fn symbol_product(t: &BCLTuple) -> MatPoly {
    let syms = bcl_symbols(t);
    let mut acc = MatPoly::constant(linalg::identity(t.e));
    for s in &syms {
        acc = acc.mul(s).expect("square symbols");
    }
    acc
}

/// Sum of condition (d) in the given order of indices.
pub fn condition_d_sum(t: &BCLTuple, order: &[usize]) -> CMat {
    let mut sum = CMat::zeros(t.e, t.e);
    let mut acc = linalg::identity(t.e);
    for &k in order {
        sum += acc.adjoint() * &t.p[k] * &acc;
        acc = &t.u[k] * acc;
    }
    sum
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

pub fn bcl_validate(t: &BCLTuple, opts: &ValidateOptions) -> VerificationReport {
    let tol = &opts.tol;
    let id = linalg::identity(t.e);
    let x = opts.window.clone().unwrap_or_else(|| id.clone());
    let win = Window::exact(x.ncols());
    let on = |m: &CMat| linalg::max_abs(&(m * &x));
    let mut r = VerificationReport::new();

    for i in 0..t.n {
        let u = &t.u[i];
        let res = on(&(u.adjoint() * u - &id)).max(linalg::max_abs(&(x.adjoint() * (u * u.adjoint() - &id))));
        r.push(Check::new(format!("unitary.i={}", i + 1), "U_i unitary", res, tol.structural, win.clone()));
    }
    for i in 0..t.n {
        let p = &t.p[i];
        let res = on(&(p * p - p)).max(on(&(p.adjoint() - p)));
        r.push(Check::new(format!("projection.i={}", i + 1), "P_i orthogonal projection", res, tol.structural, win.clone()));
    }

    let mut a = 0.0f64;
    for i in 0..t.n {
        for j in i + 1..t.n {
            a = a.max(on(&(&t.u[i] * &t.u[j] - &t.u[j] * &t.u[i])));
        }
    }
    r.push(Check::new("condition_a", "(a) U_i U_j = U_j U_i", a, tol.structural, win.clone()));

    let mut prod = id.clone();
    for u in &t.u {
        prod *= u;
    }
    r.push(Check::new("condition_b", "(b) U_1 ... U_n = I", on(&(prod - &id)), tol.structural, win.clone()));

    let mut csym = 0.0f64;
    let mut cmax = f64::NEG_INFINITY;
    for i in 0..t.n {
        for j in i + 1..t.n {
            let lhs = &t.p[i] + t.u[i].adjoint() * &t.p[j] * &t.u[i];
            let rhs = &t.p[j] + t.u[j].adjoint() * &t.p[i] * &t.u[j];
            csym = csym.max(on(&(&lhs - rhs)));
            cmax = cmax.max(linalg::max_eigenvalue_hermitian(&(x.adjoint() * &lhs * &x)));
        }
    }
    r.push(Check::new("condition_c", "(c) P_i + U_i^* P_j U_i symmetric in i, j", csym, tol.structural, win.clone()));
    let excess = if cmax.is_finite() { (cmax - 1.0).max(0.0) } else { 0.0 };
    r.push(Check::new("condition_c_bound", "(c) P_i + U_i^* P_j U_i <= I", excess, tol.structural, win.clone()));

    let order: Vec<usize> = (0..t.n).collect();
    let d = condition_d_sum(t, &order);
    r.push(Check::new("condition_d", "(d) telescoping sum = I, order 1..n", on(&(d - &id)), tol.structural, win.clone()));
    if opts.all_orders && t.n <= 4 {
        for perm in permutations(t.n).into_iter().skip(1) {
            let name = perm.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join(",");
            let d = condition_d_sum(t, &perm);
            r.push(Check::new(
                format!("condition_d.order={name}"),
                "(d) telescoping sum = I, permuted order",
                on(&(d - &id)),
                tol.structural,
                win.clone(),
            ));
        }
    }

    let prod = symbol_product(t);
    let mut res = 0.0f64;
    for k in 0..prod.coeffs.len() {
        let target = if k == 1 { id.clone() } else { CMat::zeros(t.e, t.e) };
        res = res.max(on(&(prod.coeff(k) - target)));
    }
    if prod.coeffs.len() < 2 {
        res = res.max(on(&id));
    }
    r.push(Check::new("product", "Phi_1 ... Phi_n = z I", res, tol.structural, win));
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStatus {
    /// `w` is a verified joint intertwiner.
    Found,
    /// No certificate; the tuples may or may not be equivalent.
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct Intertwiner {
    pub status: SearchStatus,
    pub w: Option<CMat>,
    pub report: VerificationReport,
}

/// Seeded search for a unitary `W` with `W U_i = U~_i W` and `W P_i = P~_i W`.
pub fn bcl_intertwiner(t1: &BCLTuple, t2: &BCLTuple, tol: &Tolerances, seed: u64) -> Intertwiner {
    let mut report = VerificationReport::new();
    if t1.e != t2.e || t1.n != t2.n {
        report.push(Check::flag("intertwiner.shape", "equal dim E and n", false));
        return Intertwiner { status: SearchStatus::Inconclusive, w: None, report };
    }
    let e = t1.e;
    let id = linalg::identity(e);
    // vec(W X - Y W) = (X^T kron I - I kron Y) vec(W), column-major vec
    let mut blocks = Vec::with_capacity(2 * t1.n);
    for (x, y) in t1.u.iter().zip(&t2.u).chain(t1.p.iter().zip(&t2.p)) {
        blocks.push(linalg::kron(&x.transpose(), &id) - linalg::kron(&id, y));
    }
    let stacked = linalg::vstack(&blocks, e * e);
    let null = linalg::null_space(&stacked, RankPolicy { rel: 1e-8, abs: 1e-10 });
    report.push(Check::new("intertwiner.space_dim", "joint intertwiner space", 0.0, 0.0, Window::exact(null.ncols())));
    if null.ncols() == 0 {
        report.push(Check::flag("intertwiner.found", "joint intertwiner space is trivial", false));
        return Intertwiner { status: SearchStatus::Inconclusive, w: None, report };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeff = CMat::zeros(null.ncols(), 1);
    for z in coeff.iter_mut() {
        *z = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }
    let vecw = &null * coeff;
    let w0 = CMat::from_column_slice(e, e, vecw.as_slice());
    let w = linalg::polar_unitary(&w0);
    let unit = linalg::is_unitary_residual(&w);
    let mut worst = 0.0f64;
    for (i, (x, y)) in t1.u.iter().zip(&t2.u).enumerate() {
        let res = linalg::max_abs(&(&w * x - y * &w));
        worst = worst.max(res);
        report.push(Check::new(format!("intertwiner.U.i={}", i + 1), "W U_i = U~_i W", res, tol.equivalence, Window::exact(e)));
    }
    for (i, (x, y)) in t1.p.iter().zip(&t2.p).enumerate() {
        let res = linalg::max_abs(&(&w * x - y * &w));
        worst = worst.max(res);
        report.push(Check::new(format!("intertwiner.P.i={}", i + 1), "W P_i = P~_i W", res, tol.equivalence, Window::exact(e)));
    }
    report.push(Check::new("intertwiner.unitary", "W unitary", unit, tol.structural, Window::exact(e)));
    let ok = worst <= tol.equivalence && unit <= tol.structural && w0.norm() > 0.0;
    Intertwiner { status: if ok { SearchStatus::Found } else { SearchStatus::Inconclusive }, w: ok.then_some(w), report }
}

/// Random tuple generators for test suites.
pub mod random {
    use super::*;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn gaussian_matrix<R: Rng>(rng: &mut R, r: usize, cl: usize) -> CMat {
        CMat::from_fn(r, cl, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
    }

    pub fn unitary<R: Rng>(rng: &mut R, n: usize) -> CMat {
        linalg::polar_unitary(&gaussian_matrix(rng, n, n))
    }

    fn phase<R: Rng>(rng: &mut R) -> C64 {
        C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
    }

    /// A valid tuple: a random unitary conjugate of a direct sum of one-dimensional
    /// blocks (one `P_i = 1`, phases multiplying to one) and two-dimensional swap
    /// blocks coupling a pair `p < q`.
    pub fn valid_tuple<R: Rng>(rng: &mut R, n: usize, e: usize) -> BCLTuple {
        let mut u = vec![CMat::zeros(e, e); n];
        let mut p = vec![CMat::zeros(e, e); n];
        let mut at = 0;
        while at < e {
            if n >= 2 && e - at >= 2 && rng.random_bool(0.5) {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                let (pi, qi) = (a.min(b), a.max(b));
                let d = [phase(rng), phase(rng)];
                for i in 0..n {
                    let blk = if i == pi {
                        CMat::from_row_slice(2, 2, &[ZERO, d[0], d[1], ZERO])
                    } else if i == qi {
                        CMat::from_row_slice(2, 2, &[ZERO, d[1].conj(), d[0].conj(), ZERO])
                    } else {
                        linalg::identity(2)
                    };
                    u[i].view_mut((at, at), (2, 2)).copy_from(&blk);
                    if i == pi || i == qi {
                        p[i][(at, at)] = ONE;
                    }
                }
                at += 2;
            } else {
                let owner = rng.random_range(0..n);
                let mut prod = ONE;
                for i in 0..n {
                    let ph = if i + 1 == n { prod.conj() } else { phase(rng) };
                    prod *= ph;
                    u[i][(at, at)] = ph;
                }
                p[owner][(at, at)] = ONE;
                at += 1;
            }
        }
        let t = BCLTuple { n, e, u, p };
        t.conjugate(&unitary(rng, e))
    }

    /// Replace one projection by a Hermitian matrix that is not a projection.
    pub fn perturbed_tuple<R: Rng>(rng: &mut R, t: &BCLTuple) -> BCLTuple {
        let k = rng.random_range(0..t.n);
        let g = gaussian_matrix(rng, t.e, t.e);
        let h = (&g + g.adjoint()) * c(0.5, 0.0);
        let h = &h / c(linalg::op_norm(&h).max(1e-300), 0.0);
        let mut out = t.clone();
        out.p[k] = &t.p[k] + h * c(rng.random_range(0.05..0.5), 0.0);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x, 0.0))
    }

    fn scalar_pass() -> BCLTuple {
        BCLTuple::new(vec![scalar(1.0), scalar(1.0)], vec![scalar(1.0), scalar(0.0)]).unwrap()
    }

    fn swap() -> CMat {
        CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    #[test]
    fn scalar_tuple_passes() {
        let r = bcl_validate(&scalar_pass(), &ValidateOptions::default());
        assert!(r.all_pass(), "{}", r.render_text());
    }

    #[test]
    fn double_projection_fails_condition_d() {
        let t = BCLTuple::new(vec![scalar(1.0), scalar(1.0)], vec![scalar(1.0), scalar(1.0)]).unwrap();
        let r = bcl_validate(&t, &ValidateOptions::default());
        let d = r.get("condition_d").unwrap();
        assert!(!d.pass);
        assert_eq!(d.residual, 1.0);
    }

    #[test]
    fn scalar_symbols() {
        let s = bcl_symbols(&scalar_pass());
        assert_eq!(s[0], MatPoly::scalar(&[ZERO, ONE]));
        assert_eq!(s[1], MatPoly::scalar(&[ONE, ZERO]));
    }

    #[test]
    fn swap_symbol_coefficients() {
        let p = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
        let t = BCLTuple::new(vec![swap(), swap()], vec![p.clone(), p.clone()]).unwrap();
        let s = bcl_symbols(&t);
        let perp = linalg::identity(2) - &p;
        assert_eq!(s[0].coeffs[0], swap() * &perp);
        assert_eq!(s[0].coeffs[0], CMat::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]));
        assert_eq!(s[0].coeffs[1], swap() * &p);
        assert_eq!(s[0].coeffs[1], CMat::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO]));
    }

    #[test]
    fn random_valid_tuples_pass() {
        let mut rng = random::rng(7);
        for k in 0..40 {
            let n = 1 + k % 4;
            let e = 1 + k % 8;
            let t = random::valid_tuple(&mut rng, n, e);
            let r = bcl_validate(&t, &ValidateOptions::default());
            assert!(r.all_pass(), "n={n} e={e}\n{}", r.render_text());
            assert!(r.max_residual("") <= 1e-12);
        }
    }

    #[test]
    fn perturbed_tuples_fail() {
        let mut rng = random::rng(11);
        for k in 0..20 {
            let t = random::valid_tuple(&mut rng, 1 + k % 4, 1 + k % 8);
            let bad = random::perturbed_tuple(&mut rng, &t);
            assert!(!bcl_validate(&bad, &ValidateOptions::default()).all_pass());
        }
    }

    #[test]
    fn all_orders_names_the_order() {
        let mut rng = random::rng(3);
        let t = random::valid_tuple(&mut rng, 3, 4);
        let r = bcl_validate(&t, &ValidateOptions { all_orders: true, ..Default::default() });
        assert!(r.get("condition_d.order=2,1,3").is_some());
        assert_eq!(r.checks.iter().filter(|c| c.name.starts_with("condition_d")).count(), 6);
    }

    #[test]
    fn symbols_are_inner_and_multiply_to_z() {
        let mut rng = random::rng(5);
        let t = random::valid_tuple(&mut rng, 4, 6);
        for s in bcl_symbols(&t) {
            assert!(crate::matpoly::is_inner(&s, 1e-14).all_pass());
        }
        let prod = symbol_product(&t);
        assert!(prod.distance(&MatPoly::shift(6)) <= 1e-12);
    }

    #[test]
    fn identical_tuples_intertwine_with_identity() {
        let t = scalar_pass();
        let w = bcl_intertwiner(&t, &t, &Tolerances::default(), 0);
        assert_eq!(w.status, SearchStatus::Found);
        let w = w.w.unwrap();
        assert!((w[(0, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn conjugated_tuple_is_recovered() {
        let mut rng = random::rng(19);
        let t = random::valid_tuple(&mut rng, 3, 5);
        let q = random::unitary(&mut rng, 5);
        let t2 = t.conjugate(&q);
        let w = bcl_intertwiner(&t, &t2, &Tolerances::default(), 1);
        assert_eq!(w.status, SearchStatus::Found, "{}", w.report.render_text());
        assert!(w.report.max_residual("intertwiner.") <= 1e-8);
    }

    #[test]
    fn swapped_scalar_orders_are_inconclusive() {
        let t1 = scalar_pass();
        let t2 = BCLTuple::new(vec![scalar(1.0), scalar(1.0)], vec![scalar(0.0), scalar(1.0)]).unwrap();
        let w = bcl_intertwiner(&t1, &t2, &Tolerances::default(), 0);
        assert_eq!(w.status, SearchStatus::Inconclusive);
        assert!(w.w.is_none());
    }

    #[test]
    fn json_roundtrip() {
        let t = scalar_pass();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"U\""));
        let back: BCLTuple = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<BCLTuple>(r#"{"n":2,"e":1,"U":[[[[1,0]]]],"P":[[[[1,0]]]]}"#).is_err());
    }
}
