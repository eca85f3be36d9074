//! Factorization `S = Theta H^2_{W_*}(D)` of joint invariant subspaces of a
//! model n-isometry on `H^2_W(D)`, with `Phi_j Theta = Theta Psi_j`.
//!
//! A subspace given by polynomial generators is closed under `z` and the
//! `Phi_i` on the part of the grid where these raise degrees without
//! overflow (`deg < N - 1`). The wandering subspace `W_* = S - z S` is then
//! read off as the columns of `Theta`.

use serde::{Deserialize, Serialize};

use crate::bcl::{self, BCLTuple, ValidateOptions};
use crate::coeffspace::{self, DegreeGrid, PolyVec, SubspaceBasis};
use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, RankPolicy};
use crate::matpoly::{self, MatPoly};
use crate::report::{Check, Tolerances, VerificationReport, Window};

#[derive(Clone, Debug, PartialEq)]
pub enum SubspaceSource {
    Generators(Vec<PolyVec>),
    Theta(MatPoly),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantSubspaceSpec {
    pub ambient: BCLTuple,
    pub source: SubspaceSource,
    /// Truncation for a `Theta` source (generators carry their own grid).
    pub trunc: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct SpecJson {
    ambient: BCLTuple,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    generators: Option<Vec<PolyVec>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    theta: Option<MatPoly>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    trunc: Option<usize>,
}

impl Serialize for InvariantSubspaceSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (generators, theta) = match &self.source {
            SubspaceSource::Generators(g) => (Some(g.clone()), None),
            SubspaceSource::Theta(t) => (None, Some(t.clone())),
        };
        SpecJson { ambient: self.ambient.clone(), generators, theta, trunc: self.trunc }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for InvariantSubspaceSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = SpecJson::deserialize(d)?;
        let source = match (raw.generators, raw.theta) {
            (Some(g), None) => SubspaceSource::Generators(g),
            (None, Some(t)) => SubspaceSource::Theta(t),
            _ => return Err(D::Error::custom("give exactly one of `generators` and `theta`")),
        };
        Ok(InvariantSubspaceSpec { ambient: raw.ambient, source, trunc: raw.trunc })
    }
}

/// How the columns of `Theta` are chosen inside `W_*`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Graded-lex pivots, each pivot coefficient real positive.
    #[default]
    Canonical,
    /// Gram-Schmidt of the projected generators, in the order given.
    GeneratorOrder,
}

#[derive(Clone, Debug, Default)]
pub struct BlhOptions {
    pub tol: Tolerances,
    pub normalization: Normalization,
}

#[derive(Clone, Debug)]
pub struct ThetaResult {
    pub theta: MatPoly,
    pub subspace: SubspaceBasis,
    pub wandering: SubspaceBasis,
    pub report: VerificationReport,
}

fn ambient_ops(t: &BCLTuple) -> Vec<MatPoly> {
    let mut ops = vec![MatPoly::shift(t.e)];
    ops.extend(bcl::bcl_symbols(t));
    ops
}

fn apply_block(phi: &MatPoly, x: &CMat, trunc: usize) -> CMat {
    phi.toeplitz(trunc) * x
}

fn generators_of(spec: &InvariantSubspaceSpec) -> Result<(DegreeGrid, CMat)> {
    let e = spec.ambient.e;
    match &spec.source {
        SubspaceSource::Generators(gens) => {
            let first = gens.first().ok_or(Error::EmptySpan)?;
            let grid = first.grid.clone();
            if grid.nvars != 1 || grid.fiber_dim != e {
                return Err(Error::GridMismatch(format!("generators must live on H^2_W(D) with dim W = {e}")));
            }
            let mut m = CMat::zeros(grid.dim(), gens.len());
            for (j, g) in gens.iter().enumerate() {
                grid.ensure_same(&g.grid)?;
                m.set_column(j, &g.coeffs);
            }
            Ok((grid, m))
        }
        SubspaceSource::Theta(theta) => {
            if theta.rows != e {
                return Err(Error::DimensionMismatch { expected: e, found: theta.rows });
            }
            let n = spec.trunc.unwrap_or(4 * (theta.degree() + 1)).max(theta.degree() + 2);
            let grid = DegreeGrid::vector_disc(n, e);
            let m = theta.toeplitz(n).columns(0, theta.cols).into_owned();
            Ok((grid, m))
        }
    }
}

/// Invariant closure on the window: returns the basis and the number of sweeps.
fn closure(grid: &DegreeGrid, gens: &CMat, ops: &[MatPoly], policy: RankPolicy) -> Result<(SubspaceBasis, usize)> {
    let n = grid.trunc[0];
    let mut s = coeffspace::span_matrix(grid, gens, policy)?;
    let cap = grid.dim();
    for sweep in 1..=cap {
        let inner = s.restrict_to_box(&[n.saturating_sub(1)], policy);
        let mut blocks = vec![s.basis.clone()];
        blocks.extend(ops.iter().map(|op| apply_block(op, &inner.basis, n)));
        let next = coeffspace::span_matrix(grid, &linalg::hstack(&blocks, grid.dim()), policy)?;
        if next.dim() == s.dim() {
            return Ok((s, sweep));
        }
        s = next;
    }
    Ok((s, cap))
}

/// Columns of an orthonormal `x` (`e*N` rows) read as a `W`-valued polynomial.
fn as_matpoly(x: &CMat, e: usize, trunc: usize) -> MatPoly {
    let coeffs = (0..trunc).map(|k| x.rows(k * e, e).into_owned()).collect();
    MatPoly { rows: e, cols: x.ncols(), coeffs }
}

pub fn blh_theta(spec: &InvariantSubspaceSpec, opts: &BlhOptions) -> Result<ThetaResult> {
    let tol = &opts.tol;
    let policy = tol.rank;
    let e = spec.ambient.e;
    let (grid, gens) = generators_of(spec)?;
    let n = grid.trunc[0];
    if n < 3 {
        return Err(Error::TruncationTooSmall { needed: 3, got: n });
    }
    let ops = ambient_ops(&spec.ambient);
    let (s, sweeps) = closure(&grid, &gens, &ops, policy)?;
    let mut report = VerificationReport::new();
    let inner = s.restrict_to_box(&[n - 1], policy);
    let iw = Window::new(vec![n - 1], inner.dim());
    for (k, op) in ops.iter().enumerate() {
        let name = if k == 0 { "invariance.z".to_string() } else { format!("invariance.Phi.i={k}") };
        let img = apply_block(op, &inner.basis, n);
        report.push(Check::new(name, "M S contained in S", s.containment_residual(&img), tol.structural, iw.clone()));
    }
    report.push(Check::new("closure.sweeps", "invariant closure saturation", 0.0, 0.0, Window::exact(sweeps)));

    // W_* = S - z (S on the window)
    let zs = apply_block(&MatPoly::shift(e), &inner.basis, n);
    let zs = linalg::orthonormal_range(&zs, policy);
    let resid = &s.basis - &zs * (zs.adjoint() * &s.basis);
    let wstar = linalg::orthonormal_range(&resid, policy);
    if wstar.ncols() == 0 {
        return Err(Error::EmptyWanderingSubspace);
    }
    let wstar = match opts.normalization {
        Normalization::Canonical => linalg::canonical_basis(&wstar, &grid.graded_order(), 1e-8),
        Normalization::GeneratorOrder => {
            let proj = &wstar * (wstar.adjoint() * &gens);
            gram_schmidt(&proj, wstar.ncols(), policy)
        }
    };
    let wandering = SubspaceBasis::from_orthonormal(&grid, wstar.clone())?;
    let theta = as_matpoly(&wstar, e, n);

    let t = theta.toeplitz(n);
    let cov = linalg::max_abs(&(s.projection() - &t * t.adjoint()));
    report.push(Check::new("coverage", "P_S = M_Theta M_Theta^*", cov, tol.identity, Window::new(vec![n], grid.dim())));
    report.extend_prefixed("theta", matpoly::is_inner(&theta, tol.identity));
    let tail_from = n - n / 4;
    let tail: f64 = (tail_from..n).map(|k| theta.coeffs[k].norm_squared()).sum::<f64>().sqrt();
    report.push(Check::new("theta.tail_mass", "coefficient mass in the top quarter of the grid", tail, 1.0, Window::new(vec![n], tail_from)));
    Ok(ThetaResult { theta, subspace: s, wandering, report })
}

fn gram_schmidt(x: &CMat, want: usize, policy: RankPolicy) -> CMat {
    let mut out: Vec<linalg::CVec> = Vec::with_capacity(want);
    let scale = linalg::max_abs(x).max(1e-300);
    for j in 0..x.ncols() {
        if out.len() == want {
            break;
        }
        let mut v = x.column(j).into_owned();
        for _ in 0..2 {
            for q in &out {
                let d = q.dotc(&v);
                v -= q * d;
            }
        }
        let nv = v.norm();
        if nv > policy.threshold(scale) {
            out.push(v / c(nv, 0.0));
        }
    }
    let mut m = CMat::zeros(x.nrows(), out.len());
    for (j, v) in out.iter().enumerate() {
        m.set_column(j, v);
    }
    m
}

#[derive(Clone, Debug)]
pub struct PsiResult {
    pub psi: MatPoly,
    /// Largest coefficient of `Theta Psi - Phi Theta`.
    pub residual: f64,
    pub report: VerificationReport,
}

/// Solve `Theta Psi = Phi Theta` for `Psi` of degree at most one.
pub fn psi_from_theta(theta: &MatPoly, phi: &MatPoly, tol: &Tolerances) -> Result<PsiResult> {
    if phi.rows != theta.rows || phi.cols != theta.rows {
        return Err(Error::DimensionMismatch { expected: theta.rows, found: phi.cols });
    }
    let (e, k) = (theta.rows, theta.cols);
    let target = phi.mul(theta)?;
    let len = target.coeffs.len().max(theta.coeffs.len() + 1);
    let mut a = CMat::zeros(e * len, 2 * k);
    let mut b = CMat::zeros(e * len, k);
    for m in 0..len {
        a.view_mut((m * e, 0), (e, k)).copy_from(&theta.coeff(m));
        if m > 0 {
            a.view_mut((m * e, k), (e, k)).copy_from(&theta.coeff(m - 1));
        }
        b.view_mut((m * e, 0), (e, k)).copy_from(&target.coeff(m));
    }
    let x = linalg::lstsq(&a, &b, RankPolicy { rel: 1e-12, abs: 1e-300 });
    let residual = linalg::max_abs(&(&a * &x - &b));
    let psi = MatPoly { rows: k, cols: k, coeffs: vec![x.rows(0, k).into_owned(), x.rows(k, k).into_owned()] };
    if residual > tol.identity {
        return Err(Error::NotInvariant { residual });
    }
    let mut report = VerificationReport::new();
    report.push(Check::new("match", "Phi Theta = Theta Psi", residual, tol.identity, Window::new(vec![len], e * len)));
    report.extend_prefixed("psi", matpoly::is_inner(&psi, tol.identity));
    Ok(PsiResult { psi, residual, report })
}

/// Read `(U, P)` off a degree-one model symbol `U P^perp + z U P`.
pub fn model_data(psi: &MatPoly) -> (CMat, CMat) {
    let u = psi.coeff(0) + psi.coeff(1);
    let p = u.adjoint() * psi.coeff(1);
    (u, p)
}

#[derive(Clone, Debug)]
pub struct Factorization {
    pub theta: ThetaResult,
    pub psi: Vec<MatPoly>,
    pub model: BCLTuple,
    pub report: VerificationReport,
}

/// `Theta`, every `Psi_j`, the product identity and validation of the
/// model read off the `Psi_j`.
pub fn factor(spec: &InvariantSubspaceSpec, opts: &BlhOptions) -> Result<Factorization> {
    let tol = &opts.tol;
    let theta = blh_theta(spec, opts)?;
    let mut report = theta.report.clone();
    let symbols = bcl::bcl_symbols(&spec.ambient);
    let mut psi = Vec::with_capacity(symbols.len());
    for (j, phi) in symbols.iter().enumerate() {
        let r = psi_from_theta(&theta.theta, phi, tol)?;
        report.extend_prefixed(&format!("psi.j={}", j + 1), r.report);
        psi.push(r.psi);
    }
    let k = theta.theta.cols;
    let mut prod = MatPoly::constant(linalg::identity(k));
    for p in &psi {
        prod = prod.mul(p)?;
    }
    report.push(Check::new("psi.product", "Psi_1 ... Psi_n = z I", prod.distance(&MatPoly::shift(k)), tol.identity, Window::exact(k)));
    let (u, p): (Vec<CMat>, Vec<CMat>) = psi.iter().map(model_data).unzip();
    let model = BCLTuple::new(u, p)?;
    let vt = Tolerances { structural: tol.identity, ..*tol };
    report.extend_prefixed("psi_model", bcl::bcl_validate(&model, &ValidateOptions { tol: vt, ..Default::default() }));
    Ok(Factorization { theta, psi, model, report })
}

#[derive(Clone, Debug)]
pub struct TauResult {
    pub tau: Option<CMat>,
    /// `max |Theta1 - Theta2 tau|` over coefficients.
    pub residual: f64,
    pub report: VerificationReport,
}

/// Constant unitary `tau` with `Theta1 = Theta2 tau`; each supplied pair
/// `(Psi1_j, Psi2_j)` is checked for `tau Psi1_j = Psi2_j tau`.
pub fn uniqueness_tau(theta1: &MatPoly, theta2: &MatPoly, psi_pairs: &[(MatPoly, MatPoly)], tol: &Tolerances) -> TauResult {
    let mut report = VerificationReport::new();
    if theta1.rows != theta2.rows || theta1.cols != theta2.cols {
        report.push(Check::flag("tau.shape", "Theta1 and Theta2 have equal shapes", false));
        return TauResult { tau: None, residual: f64::INFINITY, report };
    }
    let (e, k) = (theta1.rows, theta1.cols);
    let len = theta1.coeffs.len().max(theta2.coeffs.len());
    let a = linalg::vstack(&(0..len).map(|m| theta2.coeff(m)).collect::<Vec<_>>(), k);
    let b = linalg::vstack(&(0..len).map(|m| theta1.coeff(m)).collect::<Vec<_>>(), k);
    let tau = linalg::lstsq(&a, &b, RankPolicy::default());
    let residual = linalg::max_abs(&(&a * &tau - &b));
    let unit = linalg::is_unitary_residual(&tau);
    report.push(Check::new("tau.match", "Theta1 = Theta2 tau", residual, tol.identity, Window::exact(e * len)));
    report.push(Check::new("tau.unitary", "tau unitary", unit, tol.identity, Window::exact(k)));
    for (j, (p1, p2)) in psi_pairs.iter().enumerate() {
        let lhs = MatPoly::constant(tau.clone()).mul(p1);
        let rhs = p2.mul_const(&tau);
        let res = lhs.map(|l| l.distance(&rhs)).unwrap_or(f64::INFINITY);
        report.push(Check::new(format!("tau.psi.j={}", j + 1), "tau Psi1 = Psi2 tau", res, tol.identity, Window::exact(k)));
    }
    let ok = residual <= tol.identity && unit <= tol.identity;
    TauResult { tau: ok.then_some(tau), residual, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{C64, ONE, ZERO};
    use crate::matpoly::{blaschke_taylor, FiniteBlaschke};

    fn scalar_model(p1: f64, p2: f64) -> BCLTuple {
        let s = |x: f64| CMat::from_element(1, 1, c(x, 0.0));
        BCLTuple::new(vec![s(1.0), s(1.0)], vec![s(p1), s(p2)]).unwrap()
    }

    fn shift_model(e: usize) -> BCLTuple {
        BCLTuple::new(vec![linalg::identity(e)], vec![linalg::identity(e)]).unwrap()
    }

    /// Polynomial generator `prod (z - a_j)` of `phi H^2`.
    fn zero_polynomial(zeros: &[C64], trunc: usize) -> PolyVec {
        let mut p = vec![ONE];
        for a in zeros {
            let mut q = vec![ZERO; p.len() + 1];
            for (k, x) in p.iter().enumerate() {
                q[k] -= a * x;
                q[k + 1] += x;
            }
            p = q;
        }
        let grid = DegreeGrid::vector_disc(trunc, 1);
        let mut v = PolyVec::zeros(&grid);
        for (k, x) in p.into_iter().enumerate() {
            v.coeffs[k] = x;
        }
        v
    }

    fn spec(ambient: BCLTuple, gens: Vec<PolyVec>) -> InvariantSubspaceSpec {
        InvariantSubspaceSpec { ambient, source: SubspaceSource::Generators(gens), trunc: None }
    }

    #[test]
    fn z_h2_gives_theta_z() {
        let g = DegreeGrid::vector_disc(12, 1);
        let r = blh_theta(&spec(scalar_model(1.0, 0.0), vec![PolyVec::monomial(&g, 0, &[1])]), &BlhOptions::default()).unwrap();
        assert!(r.theta.distance(&MatPoly::shift(1)) < 1e-14);
        assert!(r.report.all_pass(), "{}", r.report.render_text());
    }

    #[test]
    fn blaschke_half_gives_theta_phi() {
        let a = c(0.5, 0.0);
        let n = 32;
        let r = blh_theta(&spec(shift_model(1), vec![zero_polynomial(&[a], n)]), &BlhOptions::default()).unwrap();
        let phi = blaschke_taylor(&FiniteBlaschke::new(vec![a]).unwrap(), n).unwrap().poly;
        // Gram-Schmidt of {phi z^k}: the first vector is phi itself; fix the phase
        let th = r.theta.toeplitz(n).column(0).into_owned();
        let phase = phi.coeffs.dotc(&th);
        let phase = phase / c(phase.norm(), 0.0);
        assert!((th - &phi.coeffs * phase).norm() <= 1e-7);
        assert!(r.report.all_pass(), "{}", r.report.render_text());
        assert!(matpoly::is_inner(&r.theta, 1e-8).all_pass());
    }

    #[test]
    fn two_dimensional_wandering_space() {
        let g = DegreeGrid::vector_disc(16, 2);
        let gens = vec![PolyVec::monomial(&g, 0, &[0]), PolyVec::monomial(&g, 1, &[1])];
        let r = blh_theta(&spec(shift_model(2), gens), &BlhOptions::default()).unwrap();
        assert_eq!(r.theta.cols, 2);
        let expected = MatPoly::new(vec![
            CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]),
            CMat::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]),
        ])
        .unwrap();
        assert!(r.theta.distance(&expected) < 1e-12);
        assert!(r.report.get("coverage").unwrap().residual <= 1e-8);
    }

    #[test]
    fn psi_for_z_and_scalar_pair() {
        let theta = MatPoly::shift(1);
        let t = scalar_model(1.0, 0.0);
        let syms = bcl::bcl_symbols(&t);
        let p1 = psi_from_theta(&theta, &syms[0], &Tolerances::default()).unwrap();
        let p2 = psi_from_theta(&theta, &syms[1], &Tolerances::default()).unwrap();
        assert!(p1.psi.distance(&MatPoly::shift(1)) < 1e-14);
        assert!(p2.psi.distance(&MatPoly::scalar(&[ONE, ZERO])) < 1e-14);
    }

    #[test]
    fn psi_for_blaschke_theta() {
        let a = c(0.5, 0.0);
        let n = 32;
        let f = factor(&spec(shift_model(1), vec![zero_polynomial(&[a], n)]), &BlhOptions::default()).unwrap();
        assert!(f.psi[0].distance(&MatPoly::shift(1)) < 1e-8);
        assert!(f.report.all_pass(), "{}", f.report.render_text());
    }

    #[test]
    fn non_invariant_theta_is_rejected() {
        // range of Theta = 1 + z is not invariant under Phi = swap-type symbols on C^1? use C^2
        let e = 2;
        let theta = MatPoly::new(vec![CMat::from_row_slice(2, 1, &[ONE, ZERO]), CMat::from_row_slice(2, 1, &[ZERO, ZERO])]).unwrap();
        let swap = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let phi = MatPoly::constant(swap);
        assert_eq!(theta.rows, e);
        assert!(matches!(psi_from_theta(&theta, &phi, &Tolerances::default()), Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn tau_for_right_unitary_factor() {
        let mut rng = bcl::random::rng(2);
        let q = bcl::random::unitary(&mut rng, 2);
        let theta1 = MatPoly::new(vec![
            CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]),
            CMat::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, ONE]),
        ])
        .unwrap();
        let theta2 = theta1.mul_const(&q);
        let r = uniqueness_tau(&theta1, &theta2, &[], &Tolerances::default());
        let tau = r.tau.expect("tau found");
        assert!(linalg::max_abs(&(tau - q.adjoint())) < 1e-12);
    }

    #[test]
    fn tau_for_sign_flip() {
        let phi = MatPoly::scalar(&[c(-0.5, 0.0), c(0.75, 0.0), c(0.375, 0.0)]);
        let neg = MatPoly::scalar(&[c(0.5, 0.0), c(-0.75, 0.0), c(-0.375, 0.0)]);
        let r = uniqueness_tau(&phi, &neg, &[], &Tolerances::default());
        assert!((r.tau.unwrap()[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn different_ranges_have_no_tau() {
        let r = uniqueness_tau(&MatPoly::shift(1), &MatPoly::scalar(&[ONE]), &[], &Tolerances::default());
        assert!(r.tau.is_none());
    }

    #[test]
    fn permuted_generators_are_linked() {
        let n = 32;
        let g = DegreeGrid::vector_disc(n, 2);
        let lift = |p: &PolyVec, fiber: usize| {
            let mut v = PolyVec::zeros(&g);
            for k in 0..n {
                v.coeffs[g.index(fiber, &[k])] = p.coeffs[k];
            }
            v
        };
        let g1 = lift(&zero_polynomial(&[c(0.3, 0.4)], n), 0);
        let g2 = lift(&zero_polynomial(&[c(-0.5, 0.1)], n), 1);
        let opts = BlhOptions { normalization: Normalization::GeneratorOrder, ..Default::default() };
        let f1 = factor(&spec(shift_model(2), vec![g1.clone(), g2.clone()]), &opts).unwrap();
        let f2 = factor(&spec(shift_model(2), vec![g2, g1]), &opts).unwrap();
        let pairs: Vec<_> = f1.psi.iter().cloned().zip(f2.psi.iter().cloned()).collect();
        let r = uniqueness_tau(&f1.theta.theta, &f2.theta.theta, &pairs, &Tolerances::default());
        assert!(r.report.all_pass(), "{}", r.report.render_text());
        let tau = r.tau.unwrap();
        assert!(tau[(0, 0)].norm() < 1e-8 && (tau[(1, 0)].norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn spec_json_requires_one_source() {
        let t = shift_model(1);
        let s = spec(t, vec![PolyVec::monomial(&DegreeGrid::vector_disc(4, 1), 0, &[1])]);
        let back: InvariantSubspaceSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let ambient = serde_json::to_string(&shift_model(1)).unwrap();
        assert!(serde_json::from_str::<InvariantSubspaceSpec>(&format!(r#"{{"ambient":{ambient}}}"#)).is_err());
    }
}
