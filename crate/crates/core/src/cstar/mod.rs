//! Toeplitz C*-algebras of finite-codimensional invariant subspaces of
//! `H^2(D^n)`: co-doubly commuting subspaces `S_Phi`, compressions of the
//! shifts, and the explicit unitaries relating `T(S)`, `T(S_Phi)` and
//! `T(H^2(D^n))`.
//!
//! Identities are verified on the coordinate basis of an interior degree
//! box, where no shift in the identity pushes coefficients off the grid.
//! Residual operators that the constructions only determine up to a finite
//! rank term are factored by SVD on the same box.

mod main1;
mod main2;
pub mod ops;

use serde::{Deserialize, Serialize};

use crate::coeffspace::{DegreeGrid, SubspaceBasis, TruncationMode};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, RankPolicy};
use crate::matpoly::FiniteBlaschke;
use crate::par::Execution;
use crate::report::{Check, Tolerances, VerificationReport};
use crate::wire;

pub use main1::{main1_unitary, Main1, Main1Layout};
pub use main2::{main2_unitary, Main2, Main2Layout};
pub use ops::{Factor, FiniteRankResidual, GridOp, Hardy, Space};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoDoublyCommutingSpec {
    pub n: usize,
    pub grid: DegreeGrid,
    pub phis: Vec<FiniteBlaschke>,
}

#[derive(Clone, Debug)]
#[derive(Default)]
pub struct CStarOptions {
    pub tol: Tolerances,
    pub exec: Execution,
    /// Also run the main2 construction with the variables cyclically relabeled.
    pub permuted_variants: bool,
    /// Unitary `m x m` matrix replacing the graded-lex pairing `F_1 -> S - S_Phi`.
    pub v_override: Option<CMat>,
}


/// Kronecker product of one-variable bases, variable 0 fastest.
pub fn kron_bases(bases: &[CMat]) -> CMat {
    let mut acc = bases[0].clone();
    for b in &bases[1..] {
        acc = linalg::kron(b, &acc);
    }
    acc
}

/// `S_Phi` and the one-variable model spaces it is built from.
#[derive(Clone, Debug)]
pub struct SPhi {
    pub hardy: Hardy,
    pub phis: Vec<FiniteBlaschke>,
    pub q: Vec<Factor>,
    pub model_residual: Vec<f64>,
    /// `Q_phi_1 ⊗ ... ⊗ Q_phi_n`.
    pub perp: Space,
    pub space: Space,
}

impl SPhi {
    pub fn new(spec: &CoDoublyCommutingSpec, exec: Execution) -> Result<SPhi> {
        let hardy = Hardy::new(spec.grid.clone(), exec)?;
        if spec.grid.nvars != spec.n {
            return Err(Error::DimensionMismatch { expected: spec.n, found: spec.grid.nvars });
        }
        if spec.phis.len() != spec.n {
            return Err(Error::DimensionMismatch { expected: spec.n, found: spec.phis.len() });
        }
        let mut q = Vec::with_capacity(spec.n);
        let mut model_residual = Vec::with_capacity(spec.n);
        for (v, phi) in spec.phis.iter().enumerate() {
            let n = spec.grid.trunc[v];
            let need = phi.degree().unwrap_or(0) + 2;
            if n < need {
                return Err(Error::TruncationTooSmall { needed: need, got: n });
            }
            if phi.zero_function {
                q.push(Factor::full(n));
                model_residual.push(0.0);
            } else {
                let (f, r) = Factor::model(phi, n)?;
                q.push(f);
                model_residual.push(r);
            }
        }
        let perp = Space::tensor(&q);
        let space = perp.complement(&spec.grid);
        Ok(SPhi { hardy, phis: spec.phis.clone(), q, model_residual, perp, space })
    }

    pub fn n(&self) -> usize {
        self.phis.len()
    }

    pub fn grid(&self) -> &DegreeGrid {
        &self.hardy.grid
    }

    /// Orthonormal basis of `S_Phi^perp`.
    pub fn perp_basis(&self) -> CMat {
        kron_bases(&self.q.iter().map(|f| f.basis.clone()).collect::<Vec<_>>())
    }

    pub fn max_degree(&self) -> usize {
        self.phis.iter().filter_map(FiniteBlaschke::degree).max().unwrap_or(0)
    }

    pub fn all_monomial(&self) -> bool {
        self.phis.iter().all(|p| p.zero_function || p.is_monomial())
    }

    /// Extra degrees kept free so that the neglected Taylor tails of the
    /// Blaschke factors stay below `tol / 10` on the window.
    pub fn tail_margin(&self, tol: f64) -> usize {
        let r = self.phis.iter().filter(|p| !p.is_monomial()).map(FiniteBlaschke::max_modulus).fold(0.0, f64::max);
        if r == 0.0 {
            0
        } else {
            ((tol * 0.1).ln() / r.ln()).ceil().max(0.0) as usize
        }
    }

    /// Tolerance for identities that are exact for monomial symbols.
    pub fn exact_tol(&self, tol: &Tolerances) -> f64 {
        if self.all_monomial() {
            tol.structural
        } else {
            tol.identity
        }
    }

    pub fn require_blaschke(&self) -> Result<()> {
        if let Some(v) = self.phis.iter().position(|p| p.zero_function) {
            return Err(Error::Precondition(format!("phi_{} is the zero function; S_Phi has infinite codimension", v + 1)));
        }
        Ok(())
    }
}

/// Basis of `S_Phi` with the checks of its projection formula.
pub fn sphi_build(spec: &CoDoublyCommutingSpec, opts: &CStarOptions) -> Result<(SubspaceBasis, VerificationReport)> {
    let sp = SPhi::new(spec, opts.exec)?;
    let h = &sp.hardy;
    let tol = &opts.tol;
    let mut report = VerificationReport::new();
    let (w, win) = h.window(&spec.grid.trunc);

    let defects: Vec<GridOp> = (0..sp.n())
        .map(|v| {
            let t = h.mult(v, &sp.phis[v]);
            t.then(&t.adjoint())
        })
        .collect();
    let formula = GridOp::Identity.minus(&GridOp::product(defects.iter().map(|d| GridOp::Identity.minus(d))));
    let exact = sp.exact_tol(tol);
    report.push(Check::new(
        "sphi.projection_formula",
        "P_{S_Phi} = I - prod (I - M_phi_i M_phi_i^*)",
        h.difference(&sp.space.proj, &formula, &w),
        exact,
        win.clone(),
    ));
    for p in 0..sp.n() {
        for q in p + 1..sp.n() {
            let r = h.difference(&defects[p].then(&defects[q]), &defects[q].then(&defects[p]), &w);
            report.push(Check::new(
                format!("sphi.defects_commute.p={},q={}", p + 1, q + 1),
                "(M_phi_p M_phi_p^*)(M_phi_q M_phi_q^*) symmetric in p, q",
                r,
                exact,
                win.clone(),
            ));
        }
    }
    for (v, r) in sp.model_residual.iter().enumerate() {
        report.push(Check::new(format!("sphi.model_space.i={}", v + 1), "P_Q = I - T T^*", *r, tol.identity, win.clone()));
    }
    let expected: usize = sp.phis.iter().zip(&spec.grid.trunc).map(|(p, n)| p.degree().unwrap_or(*n)).product();
    report.push(Check::integer("sphi.codim", "codim S_Phi = prod deg phi_i", sp.perp.dim, expected));
    let perp = sp.perp_basis();
    let basis = linalg::orth_complement(&perp);
    Ok((SubspaceBasis::from_orthonormal(&spec.grid, basis)?, report))
}

/// A finite-codimensional invariant subspace, stored through an orthonormal
/// basis of its orthogonal complement in the grid.
#[derive(Clone, Debug)]
pub struct InvariantSubspace {
    pub grid: DegreeGrid,
    pub perp: CMat,
}

impl InvariantSubspace {
    pub fn full(grid: &DegreeGrid) -> Self {
        InvariantSubspace { grid: grid.clone(), perp: CMat::zeros(grid.dim(), 0) }
    }

    /// `S = (span of the columns)^perp`.
    pub fn from_complement(grid: &DegreeGrid, vectors: &CMat) -> Result<Self> {
        if vectors.nrows() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), found: vectors.nrows() });
        }
        let perp = linalg::orthonormal_range(vectors, RankPolicy::default());
        Ok(InvariantSubspace { grid: grid.clone(), perp })
    }

    /// Smallest invariant subspace containing the generators, read on the
    /// grid: the span of all truncated `z^alpha g_j`.
    pub fn from_generators(h: &Hardy, gens: &CMat) -> Result<Self> {
        let g = h.dim();
        if gens.nrows() != g {
            return Err(Error::DimensionMismatch { expected: g, found: gens.nrows() });
        }
        let mut basis = CMat::zeros(g, 0);
        let mut frontier = gens.clone();
        let shifts: Vec<GridOp> = (0..h.n()).map(|v| h.shift(v)).collect();
        let mut first = true;
        while frontier.ncols() > 0 {
            let candidates = if first {
                first = false;
                frontier.clone()
            } else {
                linalg::hstack(&shifts.iter().map(|s| h.apply(s, &frontier)).collect::<Vec<_>>(), g)
            };
            let mut fresh: Vec<CVec> = Vec::new();
            for j in 0..candidates.ncols() {
                let mut v = candidates.column(j).into_owned();
                for _ in 0..2 {
                    let proj = basis.adjoint() * &v;
                    v -= &basis * proj;
                    for f in &fresh {
                        let d = f.dotc(&v);
                        v -= f * d;
                    }
                }
                let nv = v.norm();
                if nv > 1e-9 {
                    fresh.push(v / linalg::c(nv, 0.0));
                }
            }
            let mut f = CMat::zeros(g, fresh.len());
            for (j, v) in fresh.iter().enumerate() {
                f.set_column(j, v);
            }
            basis = linalg::hstack(&[basis, f.clone()], g);
            frontier = f;
        }
        if basis.ncols() == 0 {
            return Err(Error::EmptySpan);
        }
        Ok(InvariantSubspace { grid: h.grid.clone(), perp: linalg::orth_complement(&basis) })
    }

    pub fn codim(&self) -> usize {
        self.perp.ncols()
    }

    pub fn space(&self) -> Space {
        let perp = Space::from_basis(self.perp.clone());
        perp.complement(&self.grid)
    }

    /// `max_i |P_S M_{z_i}^* P_{S^perp}|`: zero iff `S` is invariant.
    pub fn invariance_residual(&self, h: &Hardy) -> f64 {
        (0..h.n())
            .map(|v| {
                let y = h.apply(&h.shift(v).adjoint(), &self.perp);
                linalg::max_abs(&(&y - &self.perp * (self.perp.adjoint() * &y)))
            })
            .fold(0.0, f64::max)
    }

    /// Relabel variables: new variable `j` is old variable `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let (grid, map) = permute_grid(&self.grid, perm)?;
        let mut perp = CMat::zeros(grid.dim(), self.perp.ncols());
        for (new, old) in map.iter().enumerate() {
            perp.set_row(new, &self.perp.row(*old));
        }
        Ok(InvariantSubspace { grid, perp })
    }
}

/// Permuted grid and, for each new flat index, the old flat index.
fn permute_grid(grid: &DegreeGrid, perm: &[usize]) -> Result<(DegreeGrid, Vec<usize>)> {
    let trunc: Vec<usize> = perm.iter().map(|&p| grid.trunc[p]).collect();
    let new = DegreeGrid::new(trunc, grid.fiber_dim)?;
    let map = (0..new.dim())
        .map(|flat| {
            let (fiber, multi) = new.multi_index(flat);
            let mut old = vec![0; grid.nvars];
            for (j, &p) in perm.iter().enumerate() {
                old[p] = multi[j];
            }
            grid.index(fiber, &old)
        })
        .collect();
    Ok((new, map))
}

/// Commutators `[R_i^*, R_j]` of the compressed shifts, for each `i < j`.
#[derive(Clone, Debug)]
pub struct CommutatorCheck {
    pub pairs: Vec<((usize, usize), FiniteRankResidual)>,
    pub report: VerificationReport,
}

pub fn commutator_check(s: &InvariantSubspace, opts: &CStarOptions) -> Result<CommutatorCheck> {
    let h = Hardy::new(s.grid.clone(), opts.exec)?;
    let tol = &opts.tol;
    let inv = s.invariance_residual(&h);
    if inv > tol.identity {
        return Err(Error::NotInvariant { residual: inv });
    }
    let sp = s.space();
    let perp = Space::from_basis(s.perp.clone());
    let bound = h.interior(&vec![1; h.n()])?;
    let (w, win) = h.window(&bound);
    let mut report = VerificationReport::new();
    let mut pairs = Vec::new();
    for i in 0..h.n() {
        for j in i + 1..h.n() {
            let ri = sp.compress(&h.shift(i));
            let rj = sp.compress(&h.shift(j));
            let direct = ri.adjoint().then(&rj).minus(&rj.then(&ri.adjoint())).then(&sp.proj);
            let factored = GridOp::product([sp.proj.clone(), h.shift(j), perp.proj.clone(), h.shift(i).adjoint(), sp.proj.clone()]);
            let tag = format!("i={},j={}", i + 1, j + 1);
            report.push(Check::new(
                format!("commutator.factorization.{tag}"),
                "[R_i^*, R_j] = P_S M_j P_{S^perp} M_i^* |_S",
                h.difference(&direct, &factored, &w),
                tol.structural,
                win.clone(),
            ));
            let frr = FiniteRankResidual::from_block(&h.apply(&direct, &w), &w, win.clone(), Some(s.codim()), tol.rank);
            report.push(
                Check::new(format!("commutator.rank.{tag}"), "rank [R_i^*, R_j] <= dim S^perp", frr.reconstruction, tol.structural, win.clone())
                    .with_rank(frr.rank, s.codim()),
            );
            pairs.push(((i, j), frr));
        }
    }
    if s.codim() > 0 && h.n() > 1 {
        let nonzero = pairs.iter().any(|(_, f)| f.rank >= 1);
        report.push(Check::flag("commutator.nonzero", "some [R_i^*, R_j] is nonzero for proper S", nonzero));
    }
    Ok(CommutatorCheck { pairs, report })
}

/// One letter of a word in the compressed shifts: `(variable, adjoint)`.
pub type Letter = (usize, bool);

/// Parse `R_{z1} R*_{z2}`-style words (variables 1-based, subscript digits
/// accepted) into 0-based letters.
pub fn parse_word(word: &str, n: usize) -> Result<Vec<Letter>> {
    let mut out = Vec::new();
    let chars: Vec<char> = word.chars().collect();
    let mut i = 0;
    let digit = |ch: char| -> Option<u32> {
        ch.to_digit(10).or_else(|| ('₀'..='₉').contains(&ch).then(|| ch as u32 - '₀' as u32))
    };
    while i < chars.len() {
        if chars[i] != 'R' {
            if chars[i].is_whitespace() || chars[i] == '·' {
                i += 1;
                continue;
            }
            return Err(Error::Malformed(format!("unexpected '{}' in word {word:?}", chars[i])));
        }
        i += 1;
        let mut adjoint = false;
        let mut var: Option<usize> = None;
        while i < chars.len() && chars[i] != 'R' && !chars[i].is_whitespace() {
            let ch = chars[i];
            if ch == '*' {
                adjoint = true;
            } else if let Some(d) = digit(ch) {
                var = Some(var.unwrap_or(0) * 10 + d as usize);
            } else if !matches!(ch, '_' | '{' | '}' | 'z' | '^') {
                return Err(Error::Malformed(format!("unexpected '{ch}' in word {word:?}")));
            }
            i += 1;
        }
        match var {
            Some(v) if (1..=n).contains(&v) => out.push((v - 1, adjoint)),
            _ => return Err(Error::Malformed(format!("letter without a valid variable in word {word:?}"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Malformed("empty word".into()));
    }
    Ok(out)
}

fn word_op(h: &Hardy, space: &Space, word: &[Letter]) -> GridOp {
    GridOp::product(word.iter().map(|&(v, adj)| {
        let r = space.compress(&h.shift(v));
        if adj {
            r.adjoint()
        } else {
            r
        }
    }))
}

/// `T_1 - P_{M_1} T_2 |_{M_1}` for the word `T` over the compressed shifts of
/// `M_1 ⊆ M_2`, with rank bound `(#adjacent pairs) * dim(M_2 - M_1)`.
pub fn word_compress_check(h: &Hardy, m1: &Space, m2: &Space, word: &str, opts: &CStarOptions) -> Result<(FiniteRankResidual, Check)> {
    let letters = parse_word(word, h.n())?;
    let raises = letters.iter().filter(|(_, adj)| !adj).count();
    let bound = h.interior(&vec![raises + 1; h.n()])?;
    let (w, win) = h.window(&bound);
    let nested = h.containment(m1, m2, &w);
    if nested > opts.tol.identity {
        return Err(Error::NotNested { residual: nested });
    }
    let t1 = word_op(h, m1, &letters);
    let t2 = word_op(h, m2, &letters);
    let resid = t1.minus(&GridOp::product([m1.proj.clone(), t2])).then(&m1.proj);
    let rank_bound = (letters.len() - 1) * (m2.dim - m1.dim);
    let frr = FiniteRankResidual::from_block(&h.apply(&resid, &w), &w, win.clone(), Some(rank_bound), opts.tol.rank);
    let check = Check::new(
        format!("compress.word={}", word.split_whitespace().collect::<Vec<_>>().join("")),
        "T_1 = P_{M_1} T_2 |_{M_1} + F",
        frr.reconstruction,
        opts.tol.structural,
        win,
    )
    .with_rank(frr.rank, rank_bound);
    Ok((frr, check))
}

/// Exponents `m_i` minimal with `z_i^{m_i} H^2 ⊆ S`.
pub fn monomial_exponents(s: &InvariantSubspace) -> Result<Vec<usize>> {
    let grid = &s.grid;
    let mut m = vec![0; grid.nvars];
    for flat in 0..grid.dim() {
        let row_mass = s.perp.row(flat).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if row_mass > 1e-12 {
            let (_, multi) = grid.multi_index(flat);
            for (v, &a) in multi.iter().enumerate() {
                m[v] = m[v].max(a + 1);
            }
        }
    }
    for (v, &mv) in m.iter().enumerate() {
        if mv >= grid.trunc[v] {
            return Err(Error::Precondition(format!(
                "no monomial S_Phi inside S within the grid: S^perp reaches the top degree of variable {}",
                v + 1
            )));
        }
    }
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct FullEquivalence {
    pub phis: Vec<FiniteBlaschke>,
    pub main1: Main1,
    pub main2: Main2,
    /// `U_2 U_1`: `H^2(D^n) -> S`.
    pub w: GridOp,
    pub report: VerificationReport,
}

/// Compose main2 and main1 into a unitary `H^2(D^n) -> S`. Without explicit
/// `phis`, `S_Phi` is found by the monomial exponent search.
pub fn full_equivalence(s: &InvariantSubspace, phis: Option<Vec<FiniteBlaschke>>, opts: &CStarOptions) -> Result<FullEquivalence> {
    let n = s.grid.nvars;
    let phis = match phis {
        Some(p) => p,
        None => monomial_exponents(s)?.into_iter().map(FiniteBlaschke::monomial).collect(),
    };
    let spec = CoDoublyCommutingSpec { n, grid: s.grid.clone(), phis: phis.clone() };
    let m1 = main1_unitary(&spec, opts)?;
    let m2 = main2_unitary(s, &spec, opts)?;
    let h = &m2.hardy;
    let tol = &opts.tol;
    let mut report = VerificationReport::new();
    report.extend(m1.report.clone());
    report.extend(m2.report.clone());

    let w_op = m2.u.then(&m1.u);
    let w_adj = w_op.adjoint();
    let (wb, win) = h.window(&m2.window);
    let sp = &m2.s;
    report.push(Check::new("full.isometry", "W^* W = I", h.difference(&w_adj.then(&w_op), &GridOp::Identity, &wb), tol.structural, win.clone()));
    report.push(Check::new(
        "full.onto",
        "W W^* = P_S",
        h.difference(&w_op.then(&w_adj).then(&sp.proj), &sp.proj, &wb),
        tol.structural,
        win.clone(),
    ));
    let m = m2.layout.m;
    for i in 0..n {
        let rs = sp.compress(&h.shift(i));
        let lhs = GridOp::product([w_adj.clone(), rs.clone(), w_op.clone()]);
        let target = GridOp::product([m1.u.adjoint(), m2.forward_expression(i), m1.u.clone()]);
        let block = h.apply(&lhs.minus(&target), &wb);
        let frr = FiniteRankResidual::from_block(&block, &wb, win.clone(), Some(2 * m), tol.rank);
        report.push(
            Check::new(
                format!("full.generator.i={}", i + 1),
                "W^* R_{z_i} W = U_1^* (displayed T(S_Phi) expression) U_1 + F",
                frr.reconstruction,
                tol.structural,
                win.clone(),
            )
            .with_rank(frr.rank, 2 * m),
        );
        if i == n - 1 {
            let block = h.apply(&lhs.minus(&h.shift(i)), &wb);
            let frr = FiniteRankResidual::from_block(&block, &wb, win.clone(), Some(m), tol.rank);
            report.push(
                Check::new(format!("full.target.i={}", i + 1), "W^* R_{z_n} W = M_{z_n} + F", frr.reconstruction, tol.structural, win.clone())
                    .with_rank(frr.rank, m),
            );
        }
    }
    let full = Space::full(&h.grid);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let word = format!("R_{{z{}}} R*_{{z{}}}", i + 1, j + 1);
            let (_, c) = word_compress_check(h, &m2.s_phi, &full, &word, opts)?;
            report.push(Check { name: format!("full.compress.S_Phi<H2.{}", c.name), ..c });
            let (_, c) = word_compress_check(h, &m2.s_phi, sp, &word, opts)?;
            report.push(Check { name: format!("full.compress.S_Phi<S.{}", c.name), ..c });
        }
    }
    Ok(FullEquivalence { phis, main1: m1, main2: m2, w: w_op, report })
}

/// A polynomial as a list of monomial terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exp: Vec<usize>,
    #[serde(default = "one_pair")]
    pub c: wire::Pair,
}

fn one_pair() -> wire::Pair {
    [1.0, 0.0]
}

pub type SparsePoly = Vec<Term>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceSpec {
    Generators(Vec<SparsePoly>),
    CodimComplementBasis(Vec<SparsePoly>),
}

/// Dense coefficient columns of sparse polynomials.
pub fn sparse_columns(grid: &DegreeGrid, polys: &[SparsePoly]) -> Result<CMat> {
    let mut m = CMat::zeros(grid.dim(), polys.len());
    for (j, p) in polys.iter().enumerate() {
        for t in p {
            if t.exp.len() != grid.nvars {
                return Err(Error::DimensionMismatch { expected: grid.nvars, found: t.exp.len() });
            }
            if t.exp.iter().zip(&grid.trunc).any(|(e, n)| e >= n) {
                return Err(Error::GridOverflow { variable: t.exp.iter().zip(&grid.trunc).position(|(e, n)| e >= n).unwrap() });
            }
            m[(grid.index(0, &t.exp), j)] += wire::complex(t.c);
        }
    }
    Ok(m)
}

impl SubspaceSpec {
    pub fn build(&self, h: &Hardy) -> Result<InvariantSubspace> {
        match self {
            SubspaceSpec::Generators(g) => InvariantSubspace::from_generators(h, &sparse_columns(&h.grid, g)?),
            SubspaceSpec::CodimComplementBasis(b) => InvariantSubspace::from_complement(&h.grid, &sparse_columns(&h.grid, b)?),
        }
    }
}

/// Truncation given as one bound for every variable, one bound per variable,
/// or a full grid object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Uniform(usize),
    PerVariable(Vec<usize>),
    Grid(DegreeGrid),
}

/// Input of the `cstar-check` and `full-equivalence` tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CStarSpec {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phis: Option<Vec<FiniteBlaschke>>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<SubspaceSpec>,
    /// Words checked for compression from `H^2(D^n)` onto `S` (or `S_Phi`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub words: Vec<String>,
    #[serde(default)]
    pub permuted_variants: bool,
}

impl CStarSpec {
    /// Check every sparse term against the grid. In lossy mode terms outside
    /// it are removed and the norm of the removed coefficients is returned.
    pub fn clip_to(&mut self, grid: &DegreeGrid, mode: TruncationMode) -> Result<f64> {
        let mut dropped = 0.0;
        let polys = match &mut self.s {
            Some(SubspaceSpec::Generators(p)) | Some(SubspaceSpec::CodimComplementBasis(p)) => p,
            None => return Ok(0.0),
        };
        for p in polys.iter_mut() {
            for t in p.iter() {
                if t.exp.len() != grid.nvars {
                    return Err(Error::DimensionMismatch { expected: grid.nvars, found: t.exp.len() });
                }
            }
            let outside = |t: &Term| t.exp.iter().zip(&grid.trunc).position(|(e, n)| e >= n);
            if mode == TruncationMode::Strict {
                if let Some(variable) = p.iter().find_map(outside) {
                    return Err(Error::GridOverflow { variable });
                }
            }
            dropped += p.iter().filter(|t| outside(t).is_some()).map(|t| wire::complex(t.c).norm_sqr()).sum::<f64>();
            p.retain(|t| outside(t).is_none());
        }
        Ok(dropped.sqrt())
    }

    pub fn grid(&self, trunc: Option<usize>) -> Result<DegreeGrid> {
        match (trunc, &self.grid) {
            (Some(t), _) => Ok(DegreeGrid::polydisc(self.n, t)),
            (None, Some(g)) => {
                let g = match g {
                    GridSpec::Uniform(t) => DegreeGrid::polydisc(self.n, *t),
                    GridSpec::PerVariable(t) => DegreeGrid::new(t.clone(), 1)?,
                    GridSpec::Grid(g) => g.clone(),
                };
                g.validate()?;
                if g.nvars != self.n {
                    return Err(Error::DimensionMismatch { expected: self.n, found: g.nvars });
                }
                Ok(g)
            }
            (None, None) => Err(Error::Malformed("give `grid` in the spec or a truncation".into())),
        }
    }
}

/// Everything the spec asks for: `S_Phi`, commutators, main1, main2 and the
/// listed word compressions.
pub fn run_cstar_check(spec: &CStarSpec, trunc: Option<usize>, opts: &CStarOptions) -> Result<VerificationReport> {
    let grid = spec.grid(trunc)?;
    let h = Hardy::new(grid.clone(), opts.exec)?;
    let opts = CStarOptions { permuted_variants: opts.permuted_variants || spec.permuted_variants, ..opts.clone() };
    let mut report = VerificationReport::new();
    let s = spec.s.as_ref().map(|s| s.build(&h)).transpose()?;
    let co = spec.phis.as_ref().map(|phis| CoDoublyCommutingSpec { n: spec.n, grid: grid.clone(), phis: phis.clone() });
    if let Some(co) = &co {
        report.extend(sphi_build(co, &opts)?.1);
        if co.phis.iter().all(|p| !p.zero_function) {
            report.extend(main1_unitary(co, &opts)?.report);
        }
    }
    if let Some(s) = &s {
        report.extend(commutator_check(s, &opts)?.report);
        if let Some(co) = &co {
            report.extend(main2_unitary(s, co, &opts)?.report);
        }
    }
    let target = match (&s, &co) {
        (Some(s), _) => Some(s.space()),
        (None, Some(co)) => Some(SPhi::new(co, opts.exec)?.space),
        _ => None,
    };
    if !spec.words.is_empty() {
        let target = target.ok_or_else(|| Error::Malformed("words need `S` or `phis`".into()))?;
        let full = Space::full(&grid);
        for word in &spec.words {
            report.push(word_compress_check(&h, &target, &full, word, &opts)?.1);
        }
    }
    Ok(report)
}

pub fn run_full_equivalence(spec: &CStarSpec, trunc: Option<usize>, opts: &CStarOptions) -> Result<VerificationReport> {
    let grid = spec.grid(trunc)?;
    let h = Hardy::new(grid, opts.exec)?;
    let opts = CStarOptions { permuted_variants: opts.permuted_variants || spec.permuted_variants, ..opts.clone() };
    let s = match &spec.s {
        Some(s) => s.build(&h)?,
        None => InvariantSubspace::full(&h.grid),
    };
    Ok(full_equivalence(&s, spec.phis.clone(), &opts)?.report)
}
