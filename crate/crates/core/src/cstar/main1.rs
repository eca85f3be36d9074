//! `T(S_Phi)` is unitarily equivalent to `T(H^2(D^n))`.

use super::{CStarOptions, CoDoublyCommutingSpec, Factor, FiniteRankResidual, GridOp, Hardy, SPhi, Space};
use crate::error::{Error, Result};
use crate::matpoly::FiniteBlaschke;
use crate::report::{Check, VerificationReport};

/// Subspaces of the main1 decomposition (`Q[1, n-1] = Q_phi_1 ⊗ ... ⊗ Q_phi_{n-1}`).
#[derive(Clone, Debug)]
pub struct Main1Layout {
    /// `(Q[1, n-1] ⊗ H^2)^perp`.
    pub l1: Space,
    /// `Q[1, n-1] ⊗ S_phi_n`.
    pub l2: Space,
    /// `Q[1, n-1] ⊗ S_{phi_n^2}`.
    pub l2p: Space,
    /// `Q[1, n-1] ⊗ (Q_{phi_n^2} - Q_phi_n)`.
    pub l2pp: Space,
    /// `Q[1, n-1] ⊗ H^2`.
    pub l3: Space,
}

#[derive(Clone, Debug)]
pub struct Main1 {
    pub hardy: Hardy,
    /// `U = P_L1 + M_phi_n P_L3`, mapping `H^2` onto `S_Phi`.
    pub u: GridOp,
    pub layout: Main1Layout,
    pub s_phi: Space,
    pub window: Vec<usize>,
    pub finite_rank: Vec<(String, FiniteRankResidual)>,
    pub report: VerificationReport,
}

fn squared(phi: &FiniteBlaschke) -> FiniteBlaschke {
    let mut zeros = phi.zeros.clone();
    zeros.extend(phi.zeros.iter().cloned());
    FiniteBlaschke { zeros, c: phi.c * phi.c, zero_function: false }
}

pub fn main1_unitary(spec: &CoDoublyCommutingSpec, opts: &CStarOptions) -> Result<Main1> {
    let sp = SPhi::new(spec, opts.exec)?;
    sp.require_blaschke()?;
    let h = sp.hardy.clone();
    let n = sp.n();
    let last = n - 1;
    let nl = spec.grid.trunc[last];
    let phin = &sp.phis[last];
    let dn = phin.degree().unwrap_or(0);
    if nl < 2 * dn + 2 {
        return Err(Error::TruncationTooSmall { needed: 2 * dn + 2, got: nl });
    }
    let tol = &opts.tol;
    let exact = sp.exact_tol(tol);

    let with_last = |f: Factor| -> Space {
        let mut fs: Vec<Factor> = sp.q[..last].to_vec();
        fs.push(f);
        Space::tensor(&fs)
    };
    let l3 = with_last(Factor::full(nl));
    let l1 = l3.complement(&spec.grid);
    let r = Factor::range(phin, nl)?;
    let r2 = Factor::range(&squared(phin), nl)?;
    let l2 = with_last(r.clone());
    let l2p = with_last(r2.clone());
    let l2pp = with_last(r.minus(&r2));
    let s_phi = sp.space.clone();

    let t = h.mult(last, phin);
    let u = l1.proj.plus(&t.then(&l3.proj));
    let ua = u.adjoint();

    let margin = sp.max_degree() + 2 + sp.tail_margin(tol.identity);
    let window = h.interior(&vec![margin; n])?;
    let (w, win) = h.window(&window);
    let mut report = VerificationReport::new();
    let mut finite_rank = Vec::new();

    let diff = |a: &GridOp, b: &GridOp| h.difference(a, b, &w);
    report.push(Check::new("main1.layout.S_Phi=L1+L2", "S_Phi = L1 ⊕ L2", diff(&s_phi.proj, &l1.proj.plus(&l2.proj)), exact, win.clone()));
    report.push(Check::new("main1.layout.H2=L1+L3", "H^2 = L1 ⊕ L3", diff(&GridOp::Identity, &l1.proj.plus(&l3.proj)), exact, win.clone()));
    report.push(Check::new("main1.layout.L2=L2'+L2''", "L2 = L2' ⊕ L2''", diff(&l2.proj, &l2p.proj.plus(&l2pp.proj)), exact, win.clone()));

    let defect = |v: usize| {
        let tv = h.mult(v, &sp.phis[v]);
        tv.then(&tv.adjoint())
    };
    let lemma = GridOp::product((0..last).map(|v| GridOp::Identity.minus(&defect(v))).chain([defect(last)]));
    report.push(Check::new(
        "main1.lemma_projection.L2",
        "P_L2 = prod_{i<n} (I - T_i T_i^*) T_n T_n^*",
        diff(&l2.proj, &lemma),
        exact,
        win.clone(),
    ));

    report.push(Check::new("main1.isometry", "U^* U = I", diff(&ua.then(&u), &GridOp::Identity), exact, win.clone()));
    report.push(Check::new("main1.onto", "U U^* = P_{S_Phi}", diff(&u.then(&ua), &s_phi.proj), exact, win.clone()));

    let rphi = |x: &GridOp| s_phi.compress(x);
    let zn = h.shift(last);
    report.push(Check::new(
        format!("main1.conjugation.i={n}"),
        "U^* R_{z_n} U = M_{z_n}",
        diff(&GridOp::product([ua.clone(), rphi(&zn), u.clone()]), &zn),
        exact,
        win.clone(),
    ));

    let tl3 = t.then(&l3.proj);
    let rn = rphi(&t);
    for i in 0..n {
        let zi = h.shift(i);
        if i < last {
            let lhs = GridOp::product([ua.clone(), rphi(&zi), u.clone()]);
            let rhs = GridOp::sum([
                (super::ops::scalar(1.0), zi.then(&l1.proj)),
                (super::ops::scalar(1.0), GridOp::product([l1.proj.clone(), zi.clone(), tl3.clone()])),
                (super::ops::scalar(1.0), GridOp::product([t.adjoint(), l2.proj.clone(), zi.clone(), tl3.clone()])),
            ]);
            report.push(Check::new(
                format!("main1.expansion.i={}", i + 1),
                "U^* R_{z_i} U = M_i P_L1 + P_L1 M_i T P_L3 + T^* P_L2 M_i T P_L3",
                diff(&lhs, &rhs),
                exact,
                win.clone(),
            ));
        }
        let ri = rphi(&zi);
        let lhs = GridOp::product([u.clone(), zi.clone(), ua.clone(), s_phi.proj.clone()]);
        let rhs = GridOp::sum([
            (super::ops::scalar(1.0), ri.then(&l1.proj)),
            (super::ops::scalar(1.0), GridOp::product([l1.proj.clone(), ri.clone(), rn.adjoint(), l2p.proj.clone()])),
            (super::ops::scalar(1.0), GridOp::product([rn.clone(), l2.proj.clone(), ri.clone(), rn.adjoint(), l2p.proj.clone()])),
        ]);
        let block = h.apply(&lhs.minus(&rhs), &w);
        let frr = FiniteRankResidual::from_block(&block, &w, win.clone(), Some(l2pp.dim), tol.rank);
        report.push(
            Check::new(
                format!("main1.reverse.i={}", i + 1),
                "U M_{z_i} U^* = R_i P_L1 + P_L1 R_i R_n^* P_L2' + R_n P_L2 R_i R_n^* P_L2' + F",
                frr.reconstruction,
                exact,
                win.clone(),
            )
            .with_rank(frr.rank, l2pp.dim),
        );
        finite_rank.push((format!("main1.reverse.i={}", i + 1), frr));
    }

    Ok(Main1 { hardy: h, u, layout: Main1Layout { l1, l2, l2p, l2pp, l3 }, s_phi, window, finite_rank, report })
}
