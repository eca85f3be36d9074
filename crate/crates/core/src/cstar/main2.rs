//! `T(S)` and `T(S_Phi)` agree modulo finite rank for `S_Phi ⊆ S`, through an
//! explicit unitary `S_Phi -> S` built around variable 1 and variable `n`.

use super::ops::scalar;
use super::{kron_bases, CStarOptions, CoDoublyCommutingSpec, Factor, FiniteRankResidual, GridOp, Hardy, InvariantSubspace, SPhi, Space};
use crate::coeffspace::SubspaceBasis;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::report::{Check, VerificationReport};

/// Subspaces of the main2 decomposition, `m = dim(S - S_Phi)`.
#[derive(Clone, Debug)]
pub struct Main2Layout {
    pub m: usize,
    /// `S - S_Phi`, canonical graded-lex basis.
    pub difference: CMat,
    /// `phi_1 Q_{z^m} ⊗ H_{n-1}` with `H_k` the constants in `k` variables.
    pub f1: Space,
    /// `phi_1 Q_{z^m} ⊗ H_{n-2} ⊗ z H^2`.
    pub m1: Space,
    pub k1: Space,
    pub k1t: Space,
    /// `phi_1 Q_{z^m} ⊗ H_{n-2} ⊗ H^2`.
    pub s1: Space,
    pub s1p: Space,
    pub s1pp: Space,
    /// `S_{z^m phi_1} ⊗ H_{n-2} ⊗ H^2`.
    pub s2: Space,
    /// `S_phi_1 ⊗ (H_{n-2} ⊗ H^2)^perp`.
    pub s3: Space,
    /// `Q_phi_1 ⊗ Q[2, n]^perp`.
    pub nn: Space,
    /// `S_2 ⊕ S_3 ⊕ N`.
    pub l: Space,
}

#[derive(Clone, Debug)]
pub struct Main2 {
    pub hardy: Hardy,
    /// Unitary `S_Phi -> S`.
    pub u: GridOp,
    /// Pairing `F_1 -> S - S_Phi` in canonical coordinates.
    pub v: CMat,
    pub layout: Main2Layout,
    pub s: Space,
    pub s_phi: Space,
    pub window: Vec<usize>,
    /// Right-hand sides of the forward identities, without the finite rank
    /// term, composed with `P_{M_1 ⊕ L}`.
    pub forward: Vec<GridOp>,
    pub finite_rank: Vec<(String, FiniteRankResidual)>,
    pub report: VerificationReport,
}

impl Main2 {
    pub fn forward_expression(&self, i: usize) -> GridOp {
        self.forward[i].clone()
    }
}

pub fn main2_unitary(s: &InvariantSubspace, spec: &CoDoublyCommutingSpec, opts: &CStarOptions) -> Result<Main2> {
    let mut out = build(s, spec, opts)?;
    if opts.permuted_variants {
        let n = spec.n;
        for k in 1..n {
            let perm: Vec<usize> = (0..n).map(|j| (j + k) % n).collect();
            let ps = s.permuted(&perm)?;
            let pspec = CoDoublyCommutingSpec { n, grid: ps.grid.clone(), phis: perm.iter().map(|&p| spec.phis[p].clone()).collect() };
            let sub = build(&ps, &pspec, &CStarOptions { v_override: None, ..opts.clone() })?;
            for mut c in sub.report.checks {
                c.name = c.name.replacen("main2.", &format!("main2.perm={k}."), 1);
                out.report.push(c);
            }
        }
    }
    Ok(out)
}

fn build(s: &InvariantSubspace, spec: &CoDoublyCommutingSpec, opts: &CStarOptions) -> Result<Main2> {
    let sp = SPhi::new(spec, opts.exec)?;
    sp.require_blaschke()?;
    s.grid.ensure_same(&spec.grid)?;
    let n = sp.n();
    if n < 2 {
        return Err(Error::Precondition("main2 needs at least two variables".into()));
    }
    let h = sp.hardy.clone();
    let tol = &opts.tol;
    let exact = sp.exact_tol(tol);
    let inv = s.invariance_residual(&h);
    if inv > tol.identity {
        return Err(Error::NotInvariant { residual: inv });
    }
    let s_space = s.space();
    let s_phi = sp.space.clone();
    let nested = linalg::max_abs(&h.apply(&s_phi.proj, &s.perp));
    if nested > tol.identity {
        return Err(Error::NotNested { residual: nested });
    }

    let qb = sp.perp_basis();
    let diff = linalg::orthonormal_range(&h.apply(&s_space.proj, &qb), tol.rank);
    let m = diff.ncols();
    let diff = SubspaceBasis::from_orthonormal(&spec.grid, diff)?.canonical().basis;
    let mut report = VerificationReport::new();
    report.push(Check::integer("main2.m", "m = codim S_Phi - codim S", m, sp.perp.dim - s.codim()));

    let margin = sp.max_degree() + m + 2 + sp.tail_margin(tol.identity);
    let window = h.interior(&vec![margin; n])?;
    let (w, win) = h.window(&window);

    let trunc = &spec.grid.trunc;
    let last = n - 1;
    let n0 = trunc[0];
    let phi1 = &sp.phis[0];
    let r1 = Factor::range(phi1, n0)?;
    let fq_m = Factor::phi_block(phi1, n0, 0, m);
    let fq_m1 = Factor::phi_block(phi1, n0, 0, m.saturating_sub(1));
    let fz = if m > 0 { Factor::phi_block(phi1, n0, m - 1, m) } else { Factor::zero(n0) };
    let s_zm = r1.minus(&fq_m);
    if fq_m.dim() != m {
        return Err(Error::Layout(format!("phi_1 Q_{{z^{m}}} has dimension {} on the grid", fq_m.dim())));
    }

    let shape = |first: &Factor, lastf: Factor| -> Space {
        let mut fs = vec![first.clone()];
        fs.extend((1..last).map(|v| Factor::constants(trunc[v])));
        fs.push(lastf);
        Space::tensor(&fs)
    };
    let with_full = |first: &Factor| -> Space {
        let mut fs = vec![first.clone()];
        fs.extend((1..n).map(|v| Factor::full(trunc[v])));
        Space::tensor(&fs)
    };
    let nl = trunc[last];
    let f1 = shape(&fq_m, Factor::constants(nl));
    let m1 = shape(&fq_m, Factor::nonconstants(nl));
    let k1 = shape(&fq_m1, Factor::nonconstants(nl));
    let k1t = shape(&fz, Factor::nonconstants(nl));
    let s1 = shape(&fq_m, Factor::full(nl));
    let s1p = shape(&fq_m1, Factor::full(nl));
    let s1pp = shape(&fz, Factor::full(nl));
    let s2 = shape(&s_zm, Factor::full(nl));
    let sphi1_h = with_full(&r1);
    let sphi1_mid = shape(&r1, Factor::full(nl));
    let s3 = sphi1_h.minus(&sphi1_mid);
    let nn = with_full(&sp.q[0]).minus(&sp.perp);
    let l = Space::direct_sum(&[&s2, &s3, &nn]);
    let s23 = Space::direct_sum(&[&s2, &s3]);

    let mut e0: Vec<CMat> = vec![fq_m.basis.clone()];
    e0.extend((1..n).map(|v| Factor::constants(trunc[v]).basis));
    let bf = SubspaceBasis::from_orthonormal(&spec.grid, kron_bases(&e0))?.canonical().basis;
    let v = match &opts.v_override {
        Some(v) => {
            if v.nrows() != m || v.ncols() != m {
                return Err(Error::DimensionMismatch { expected: m, found: v.nrows().max(v.ncols()) });
            }
            let r = linalg::is_unitary_residual(v);
            if r > 1e-10 {
                return Err(Error::Precondition(format!("V is not unitary (residual {r:.2e})")));
            }
            v.clone()
        }
        None => linalg::identity(m),
    };
    let zn = h.shift(last);
    let u = GridOp::sum([
        (scalar(1.0), GridOp::low_rank(&diff * &v, bf)),
        (scalar(1.0), zn.adjoint().then(&m1.proj)),
        (scalar(1.0), l.proj.clone()),
    ]);
    let ua = u.adjoint();

    let d = |a: &GridOp, b: &GridOp| h.difference(a, b, &w);
    let sum = |ops: Vec<GridOp>| GridOp::sum(ops.into_iter().map(|o| (scalar(1.0), o)));
    macro_rules! push {
        ($name:expr, $anchor:expr, $r:expr $(,)?) => {
            report.push(Check::new($name, $anchor, $r, exact, win.clone()))
        };
    }

    push!("main2.layout.S_Phi=F1+M1+L", "S_Phi = F1 ⊕ M1 ⊕ L", d(&s_phi.proj, &sum(vec![f1.proj.clone(), m1.proj.clone(), l.proj.clone()])));
    push!(
        "main2.layout.S=(S-S_Phi)+S1+L",
        "S = (S - S_Phi) ⊕ S1 ⊕ L",
        d(&s_space.proj, &sum(vec![GridOp::span(diff.clone()), s1.proj.clone(), l.proj.clone()])),
    );
    push!("main2.layout.S1=F1+M1", "S1 = F1 ⊕ M1", d(&s1.proj, &f1.proj.plus(&m1.proj)));
    push!("main2.layout.M1=K1+K~1", "M1 = K1 ⊕ K~1", d(&m1.proj, &k1.proj.plus(&k1t.proj)));
    push!("main2.layout.S1=S1'+S1''", "S1 = S1' ⊕ S1''", d(&s1.proj, &s1p.proj.plus(&s1pp.proj)));
    push!(
        "main2.layout.S_phi1(x)H=S1+S2+S3",
        "S_phi_1 ⊗ H^2 = S1 ⊕ S2 ⊕ S3",
        d(&sphi1_h.proj, &sum(vec![s1.proj.clone(), s2.proj.clone(), s3.proj.clone()])),
    );
    push!("main2.layout.S_Phi=S_phi1(x)H+N", "S_Phi = (S_phi_1 ⊗ H^2) ⊕ N", d(&s_phi.proj, &sphi1_h.proj.plus(&nn.proj)));

    let rs = |x: &GridOp| s_space.compress(x);
    let rp = |x: &GridOp| s_phi.compress(x);
    let mut finite_rank = Vec::new();

    let t1 = h.mult(0, phi1);
    let rt1 = rs(&t1);
    let block = h.apply(&sphi1_h.proj.minus(&rt1.then(&rt1.adjoint())).then(&s_space.proj), &w);
    let frr = FiniteRankResidual::from_block(&block, &w, win.clone(), Some(s.codim()), tol.rank);
    report.push(
        Check::new("main2.projection1", "P_{S_phi_1 ⊗ H^2} = R_phi_1 R_phi_1^* + F on S", frr.reconstruction, exact, win.clone())
            .with_rank(frr.rank, s.codim()),
    );
    finite_rank.push(("main2.projection1".to_string(), frr));

    // X = sum over nonempty subsets A of the middle variables of
    // (-1)^{|A|+1} prod_{j in A} R_j R_j^*
    let middle: Vec<usize> = (1..last).collect();
    let mut x_terms = Vec::new();
    for mask in 1u32..(1u32 << middle.len()) {
        let picked: Vec<usize> = middle.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &v)| v).collect();
        let sign = if picked.len() % 2 == 1 { 1.0 } else { -1.0 };
        let op = GridOp::product(picked.iter().map(|&v| {
            let r = rs(&h.shift(v));
            r.then(&r.adjoint())
        }));
        x_terms.push((scalar(sign), op));
    }
    let xop = GridOp::sum(x_terms);
    let p = &sphi1_h.proj;
    let formula = GridOp::product([p.clone(), GridOp::Identity.minus(&xop), p.clone()]);
    push!(
        "main2.projection2.middle",
        "P_{S_phi_1 ⊗ H_{n-2} ⊗ H^2} = P (I - X) P",
        d(&sphi1_mid.proj.then(&s_space.proj), &formula.then(&s_space.proj)),
    );
    let r1s = rs(&h.shift(0));
    let pow = GridOp::product(std::iter::repeat_n(r1s.clone(), m));
    let pow_adj = GridOp::product(std::iter::repeat_n(r1s.adjoint(), m));
    push!(
        "main2.projection2.S2",
        "P_S2 = R_1^m P_{S_phi_1 ⊗ H_{n-2} ⊗ H^2} R_1^{*m}",
        d(&s2.proj.then(&s_space.proj), &GridOp::product([pow, sphi1_mid.proj.clone(), pow_adj, s_space.proj.clone()])),
    );

    push!("main2.isometry", "U^* U = P_{S_Phi}", d(&ua.then(&u).then(&s_phi.proj), &s_phi.proj));
    push!("main2.onto", "U U^* = P_S", d(&u.then(&ua).then(&s_space.proj), &s_space.proj));
    if m == 0 {
        push!("main2.identity", "m = 0: U = I on S_Phi", d(&u.then(&s_phi.proj), &s_phi.proj));
    }

    let dom_f = m1.proj.plus(&l.proj);
    let dom_r = s1.proj.plus(&l.proj);
    let rn = rp(&zn);
    let rsn = rs(&zn);
    let mut forward = Vec::with_capacity(n);
    let mut finite = |name: String, anchor: &str, lhs: GridOp, rhs: GridOp, bound: usize, report: &mut VerificationReport| {
        let block = h.apply(&lhs.minus(&rhs), &w);
        let frr = FiniteRankResidual::from_block(&block, &w, win.clone(), Some(bound), tol.rank);
        report.push(Check::new(name.clone(), anchor, frr.reconstruction, exact, win.clone()).with_rank(frr.rank, bound));
        finite_rank.push((name, frr));
    };
    for i in 0..n {
        let zi = h.shift(i);
        let ri = rp(&zi);
        let rsi = rs(&zi);
        let tag = i + 1;

        let f_rhs = if i == last {
            sum(vec![GridOp::product([rn.clone(), rn.clone(), rn.adjoint(), m1.proj.clone()]), rn.then(&l.proj)])
        } else if i > 0 {
            sum(vec![GridOp::product([ri.clone(), rn.adjoint(), m1.proj.clone()]), ri.then(&l.proj)])
        } else {
            sum(vec![
                GridOp::product([rn.clone(), ri.clone(), rn.adjoint(), k1.proj.clone()]),
                GridOp::product([ri.clone(), rn.adjoint(), k1t.proj.clone()]),
                ri.then(&s23.proj),
                GridOp::product([l.proj.clone(), ri.clone(), nn.proj.clone()]),
                GridOp::product([rn.clone(), s1.proj.clone(), ri.clone(), nn.proj.clone()]),
            ])
        };
        let f_lhs = GridOp::product([ua.clone(), rsi.clone(), u.clone(), dom_f.clone()]);
        let f_rhs = f_rhs.then(&dom_f);
        let name = format!("main2.forward.i={tag}");
        if i == 0 {
            finite(name, "U^* R^S_{z_1} U = (displayed expression) + F on M1 ⊕ L", f_lhs, f_rhs.clone(), m, &mut report);
        } else {
            report.push(Check::new(name, "U^* R^S_{z_i} U = (displayed expression) on M1 ⊕ L", d(&f_lhs, &f_rhs), exact, win.clone()));
        }
        forward.push(f_rhs);

        let r_rhs = if i == last {
            rsn.then(&dom_r)
        } else if i > 0 {
            sum(vec![GridOp::product([rsi.clone(), rsn.clone(), s1.proj.clone()]), rsi.then(&l.proj)])
        } else {
            sum(vec![
                rsi.then(&s1p.proj),
                GridOp::product([rsi.clone(), rsn.clone(), s1pp.proj.clone()]),
                rsi.then(&s23.proj),
                GridOp::product([rsn.adjoint(), m1.proj.clone(), zi.clone(), nn.proj.clone()]),
                GridOp::product([l.proj.clone(), rsi.clone(), nn.proj.clone()]),
            ])
        };
        let r_lhs = GridOp::product([u.clone(), ri.clone(), ua.clone(), dom_r.clone()]);
        let r_rhs = r_rhs.then(&dom_r);
        let name = format!("main2.reverse.i={tag}");
        if i == 0 {
            finite(name, "U R_{z_1} U^* = (displayed expression) + F on S1 ⊕ L", r_lhs, r_rhs, m, &mut report);
        } else {
            report.push(Check::new(name, "U R_{z_i} U^* = (displayed expression) on S1 ⊕ L", d(&r_lhs, &r_rhs), exact, win.clone()));
        }
    }

    let layout = Main2Layout { m, difference: diff, f1, m1, k1, k1t, s1, s1p, s1pp, s2, s3, nn, l };
    Ok(Main2 { hardy: h, u, v, layout, s: s_space, s_phi, window, forward, finite_rank, report })
}
