//! Wandering subspaces, the Wold-von Neumann map and extraction of the
//! canonical model tuple from a concretely given n-isometry.
//!
//! Operators are supplied as [`IsometryOracle`]s acting on blocks of
//! coefficient columns over a fixed [`DegreeGrid`]. Identities are asserted
//! on an interior window: the degree box `deg_v < N_v - 2 n S_v`, where `S_v`
//! is the degree raised by `V = V_1 ... V_n` in variable `v`.

use std::sync::Arc;

use crate::bcl::{self, BCLTuple, ValidateOptions};
use crate::coeffspace::{self, DegreeGrid, SubspaceBasis};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RankPolicy};
use crate::matpoly::MatPoly;
use crate::par::{self, Execution};
use crate::report::{Check, Tolerances, VerificationReport, Window};

/// An isometry given by its action on coefficient blocks (`grid.dim() x k`).
pub trait IsometryOracle: Send + Sync {
    fn grid(&self) -> &DegreeGrid;
    /// `V x`; coefficients leaving the grid are dropped.
    fn apply(&self, x: &CMat) -> CMat;
    /// `V^* x`, exact on the grid.
    fn adjoint(&self, x: &CMat) -> CMat;
    /// Degree raised in each variable.
    fn shift(&self) -> Vec<usize>;
    fn tag(&self) -> String;
    /// The Hilbert space the isometry acts on; `None` is the whole grid.
    fn space(&self) -> Option<&SubspaceBasis> {
        None
    }
}

pub type Oracle = Arc<dyn IsometryOracle>;

/// `M_{z_var}` on `H^2(D^n)`, or on an invariant subspace of it.
pub struct PolydiscShift {
    grid: DegreeGrid,
    var: usize,
    space: Option<SubspaceBasis>,
}

impl PolydiscShift {
    pub fn new(grid: &DegreeGrid, var: usize) -> Self {
        PolydiscShift { grid: grid.clone(), var, space: None }
    }

    /// Restriction to the invariant subspace `s`; the adjoint is `P_S M^*`.
    pub fn restricted(s: &SubspaceBasis, var: usize) -> Self {
        PolydiscShift { grid: s.grid.clone(), var, space: Some(s.clone()) }
    }

    /// The coordinate shifts `(M_{z_1}, ..., M_{z_n})`.
    pub fn tuple(grid: &DegreeGrid) -> Vec<Oracle> {
        (0..grid.nvars).map(|v| Arc::new(PolydiscShift::new(grid, v)) as Oracle).collect()
    }

    pub fn restricted_tuple(s: &SubspaceBasis) -> Vec<Oracle> {
        (0..s.grid.nvars).map(|v| Arc::new(PolydiscShift::restricted(s, v)) as Oracle).collect()
    }
}

impl IsometryOracle for PolydiscShift {
    fn grid(&self) -> &DegreeGrid {
        &self.grid
    }

    fn apply(&self, x: &CMat) -> CMat {
        coeffspace::shift_block(&self.grid, self.var, x).0
    }

    fn adjoint(&self, x: &CMat) -> CMat {
        let y = coeffspace::shift_adjoint_block(&self.grid, self.var, x);
        match &self.space {
            Some(s) => s.project_coeffs(&y),
            None => y,
        }
    }

    fn shift(&self) -> Vec<usize> {
        let mut s = vec![0; self.grid.nvars];
        s[self.var] = 1;
        s
    }

    fn tag(&self) -> String {
        match self.space {
            Some(_) => format!("M_z{} restricted to S", self.var + 1),
            None => format!("M_z{}", self.var + 1),
        }
    }

    fn space(&self) -> Option<&SubspaceBasis> {
        self.space.as_ref()
    }
}

/// `M_Phi` on `H^2_E(D)` for a matrix polynomial with square coefficients.
pub struct Multiplier {
    grid: DegreeGrid,
    phi: MatPoly,
    label: String,
}

impl Multiplier {
    pub fn new(phi: MatPoly, trunc: usize, label: impl Into<String>) -> Result<Self> {
        if phi.rows != phi.cols {
            return Err(Error::Malformed("multiplier oracles need square coefficients".into()));
        }
        Ok(Multiplier { grid: DegreeGrid::vector_disc(trunc, phi.rows), phi, label: label.into() })
    }

    /// Oracles for the symbols of a model tuple.
    pub fn model_tuple(t: &BCLTuple, trunc: usize) -> Vec<Oracle> {
        bcl::bcl_symbols(t)
            .into_iter()
            .enumerate()
            .map(|(i, phi)| Arc::new(Multiplier::new(phi, trunc, format!("M_Phi{} for BCL tuple", i + 1)).unwrap()) as Oracle)
            .collect()
    }
}

impl IsometryOracle for Multiplier {
    fn grid(&self) -> &DegreeGrid {
        &self.grid
    }

    fn apply(&self, x: &CMat) -> CMat {
        let (r, n) = (self.phi.rows, self.grid.trunc[0]);
        let mut out = CMat::zeros(x.nrows(), x.ncols());
        for (j, a) in self.phi.coeffs.iter().enumerate() {
            for k in 0..n.saturating_sub(j) {
                let y = a * x.rows(k * r, r);
                let mut dst = out.rows_mut((k + j) * r, r);
                dst += y;
            }
        }
        out
    }

    fn adjoint(&self, x: &CMat) -> CMat {
        let (r, n) = (self.phi.rows, self.grid.trunc[0]);
        let mut out = CMat::zeros(x.nrows(), x.ncols());
        for (j, a) in self.phi.coeffs.iter().enumerate() {
            let ah = a.adjoint();
            for k in 0..n.saturating_sub(j) {
                let y = &ah * x.rows((k + j) * r, r);
                let mut dst = out.rows_mut(k * r, r);
                dst += y;
            }
        }
        out
    }

    fn shift(&self) -> Vec<usize> {
        vec![self.phi.degree()]
    }

    fn tag(&self) -> String {
        self.label.clone()
    }
}

/// Composition `V_1 V_2 ... V_k` (the empty product is the identity).
pub struct Product {
    grid: DegreeGrid,
    factors: Vec<Oracle>,
}

impl Product {
    pub fn new(grid: &DegreeGrid, factors: Vec<Oracle>) -> Self {
        Product { grid: grid.clone(), factors }
    }
}

impl IsometryOracle for Product {
    fn grid(&self) -> &DegreeGrid {
        &self.grid
    }

    fn apply(&self, x: &CMat) -> CMat {
        self.factors.iter().rev().fold(x.clone(), |acc, f| f.apply(&acc))
    }

    fn adjoint(&self, x: &CMat) -> CMat {
        self.factors.iter().fold(x.clone(), |acc, f| f.adjoint(&acc))
    }

    fn shift(&self) -> Vec<usize> {
        let mut s = vec![0; self.grid.nvars];
        for f in &self.factors {
            for (a, b) in s.iter_mut().zip(f.shift()) {
                *a += b;
            }
        }
        s
    }

    fn tag(&self) -> String {
        if self.factors.is_empty() {
            "I".into()
        } else {
            self.factors.iter().map(|f| f.tag()).collect::<Vec<_>>().join(" * ")
        }
    }

    fn space(&self) -> Option<&SubspaceBasis> {
        self.factors.first().and_then(|f| f.space())
    }
}

fn space_basis(v: &dyn IsometryOracle) -> CMat {
    match v.space() {
        Some(s) => s.basis.clone(),
        None => linalg::identity(v.grid().dim()),
    }
}

/// `ker V^*` on the truncated space, in canonical graded-lex form, with the
/// largest `|V^* b|` over its basis.
pub fn wandering_subspace(v: &dyn IsometryOracle, policy: RankPolicy) -> Result<(SubspaceBasis, f64)> {
    let grid = v.grid();
    let h = space_basis(v);
    let coeff = linalg::null_space(&v.adjoint(&h), policy);
    if coeff.ncols() == 0 {
        return Err(Error::EmptyWanderingSubspace);
    }
    let w = SubspaceBasis::from_orthonormal(grid, &h * coeff)?.canonical();
    let residual = linalg::max_abs(&v.adjoint(&w.basis));
    Ok((w, residual))
}

/// `Pi_V x = sum_m z^m P_W V^{*m} x` for the columns of `x`, as coefficient
/// columns on `H^2_W(D)` truncated to `depth`.
pub fn wold_map(v: &dyn IsometryOracle, w: &SubspaceBasis, x: &CMat, depth: usize) -> CMat {
    let e = w.dim();
    let mut out = CMat::zeros(e * depth, x.ncols());
    let mut y = x.clone();
    for m in 0..depth {
        out.rows_mut(m * e, e).copy_from(&(w.basis.adjoint() * &y));
        y = v.adjoint(&y);
    }
    out
}

/// Smallest `m` with `V^{*m} x = 0`, capped at `cap`.
pub fn vanishing_depth(v: &dyn IsometryOracle, x: &CMat, cap: usize) -> usize {
    let scale = x.norm().max(1.0);
    let mut y = x.clone();
    for m in 0..cap {
        if y.norm() <= 1e-13 * scale {
            return m;
        }
        y = v.adjoint(&y);
    }
    cap
}

/// Powers of `V^*` guaranteed to annihilate every grid vector when `V`
/// raises the degree of each variable by exactly `shift`.
pub fn wold_depth(grid: &DegreeGrid, shift: &[usize]) -> Option<usize> {
    grid.trunc
        .iter()
        .zip(shift)
        .filter(|(_, &s)| s > 0)
        .map(|(&n, &s)| n.div_ceil(s))
        .min()
}

#[derive(Clone, Debug)]
pub struct ExtractOptions {
    pub tol: Tolerances,
    /// Largest `|I|` for which the le-UW identity is checked.
    pub leuw_max_card: usize,
    pub exec: Execution,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { tol: Tolerances::default(), leuw_max_card: usize::MAX, exec: Execution::default() }
    }
}

/// Wandering data of the tuple, in coordinates of the canonical basis of `W`.
#[derive(Clone, Debug)]
pub struct WanderingData {
    pub w: SubspaceBasis,
    /// Coordinates of `W_i = ker V_i^*` in `W`.
    pub w_i: Vec<CMat>,
    /// Coordinates of `W~_i = ker V~_i^*` in `W`.
    pub w_tilde: Vec<CMat>,
}

pub struct ExtractedModel {
    pub tuple: BCLTuple,
    pub wandering: WanderingData,
    pub oracles: Vec<Oracle>,
    /// Interior window of the ambient space (orthonormal grid columns).
    pub window: CMat,
    pub window_bound: Vec<usize>,
    /// Interior window of `E = W` in `W` coordinates.
    pub e_window: CMat,
    pub wold_depth: usize,
    pub report: VerificationReport,
}

fn product_of(grid: &DegreeGrid, oracles: &[Oracle], idx: impl Iterator<Item = usize>) -> Product {
    Product::new(grid, idx.map(|i| oracles[i].clone()).collect())
}

fn subset_label(set: &[usize]) -> String {
    format!("{{{}}}", set.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(","))
}

/// Canonical model `(W, U_i, P_i)` with `U_i = (P_W V_i + V~_i^*)|_W` and
/// `P_i = P_{W~_i}^perp`.
pub fn extract_model(oracles: &[Oracle], opts: &ExtractOptions) -> Result<ExtractedModel> {
    let n = oracles.len();
    let first = oracles.first().ok_or_else(|| Error::Malformed("empty oracle tuple".into()))?;
    let grid = first.grid().clone();
    for o in oracles {
        grid.ensure_same(o.grid())?;
    }
    let tol = &opts.tol;
    let policy = tol.rank;
    let all: Vec<usize> = (0..n).collect();
    let v = product_of(&grid, oracles, all.iter().cloned());
    let total = v.shift();
    wold_depth(&grid, &total).ok_or_else(|| Error::Precondition("V raises no degree; not a shift".into()))?;
    let margin: Vec<usize> = total.iter().map(|s| 2 * n * s).collect();
    let bound = grid.interior(&margin);
    let hwin = match first.space() {
        Some(s) => s.restrict_to_box(&bound, policy).basis,
        None => coeffspace::box_basis(&grid, &bound),
    };
    if hwin.ncols() == 0 {
        let needed = margin.iter().map(|m| m + 1).max().unwrap_or(1);
        return Err(Error::TruncationTooSmall { needed, got: grid.trunc.iter().cloned().min().unwrap_or(0) });
    }
    let hw = Window::new(bound.clone(), hwin.ncols());
    let mut report = VerificationReport::new();

    let images: Vec<CMat> = par::map_slice(opts.exec, oracles, |o| o.apply(&hwin));
    for i in 0..n {
        report.push(Check::new(
            format!("isometry.i={}", i + 1),
            format!("|V_i f| = |f| ({})", oracles[i].tag()),
            linalg::gram_residual(&images[i]),
            tol.structural,
            hw.clone(),
        ));
        for j in i + 1..n {
            let res = linalg::max_abs(&(oracles[i].apply(&images[j]) - oracles[j].apply(&images[i])));
            if res > tol.identity {
                return Err(Error::NonCommuting { residual: res });
            }
            report.push(Check::new(format!("commute.i={},j={}", i + 1, j + 1), "V_i V_j = V_j V_i", res, tol.identity, hw.clone()));
        }
    }

    let (w, kres) = wandering_subspace(&v, policy)?;
    let e = w.dim();
    report.push(Check::new("wandering.kernel", "W = ker V^*", kres, tol.structural, Window::exact(e)));
    let bw = &w.basis;

    let tildes: Vec<Product> = (0..n).map(|i| product_of(&grid, oracles, (0..n).filter(move |&j| j != i))).collect();
    let per_i: Vec<(CMat, CMat, CMat)> = par::map_range(opts.exec, n, |i| {
        let wi = linalg::null_space(&oracles[i].adjoint(bw), policy);
        let wt = linalg::null_space(&tildes[i].adjoint(bw), policy);
        let u = bw.adjoint() * (oracles[i].apply(bw) + tildes[i].adjoint(bw));
        (wi, wt, u)
    });
    let w_win = w.restrict_to_box(&bound, policy);
    let e_window = bw.adjoint() * &w_win.basis;
    let ew = Window::new(bound.clone(), e_window.ncols());

    for i in 0..n {
        for (label, op) in [("W_i", oracles[i].as_ref()), ("W~_i", &tildes[i] as &dyn IsometryOracle)] {
            let raw = SubspaceBasis::from_orthonormal(&grid, &hwin * linalg::null_space(&op.adjoint(&hwin), policy))?;
            report.push(Check::new(
                format!("wandering.contain.{label}.i={}", i + 1),
                format!("{label} contained in W"),
                w.containment_residual(&raw.basis),
                tol.structural,
                Window::new(bound.clone(), raw.dim()),
            ));
        }
    }

    let id = linalg::identity(e);
    let u: Vec<CMat> = per_i.iter().map(|t| t.2.clone()).collect();
    let p: Vec<CMat> = per_i.iter().map(|t| &id - &t.1 * t.1.adjoint()).collect();
    let tuple = BCLTuple::new(u, p)?;
    let wandering = WanderingData { w: w.clone(), w_i: per_i.iter().map(|t| t.0.clone()).collect(), w_tilde: per_i.iter().map(|t| t.1.clone()).collect() };

    let vopts = ValidateOptions { tol: *tol, all_orders: false, window: Some(e_window.clone()) };
    report.extend_prefixed("model", bcl::bcl_validate(&tuple, &vopts));

    // Wold map and intertwining on the interior window.
    let mut probe = images.clone();
    probe.push(hwin.clone());
    let depth = vanishing_depth(&v, &linalg::hstack(&probe, grid.dim()), grid.dim());
    let pix = wold_map(&v, &w, &hwin, depth + 1);
    let sv = linalg::singular_values(&pix);
    let uncovered = sv.iter().filter(|&&s| s < 0.5).count() + hwin.ncols().saturating_sub(sv.len());
    if uncovered > 0 {
        return Err(Error::CoverageDeficiency { uncovered });
    }
    report.push(Check::new("wold.isometry", "Pi_V isometric on the window", linalg::gram_residual(&pix), tol.structural, hw.clone()));
    let syms = bcl::bcl_symbols(&tuple);
    let inter: Vec<f64> = par::map_range(opts.exec, n, |i| {
        let lhs = wold_map(&v, &w, &images[i], depth + 1);
        let m = Multiplier::new(syms[i].clone(), depth + 1, "").expect("square symbol");
        linalg::max_abs(&(lhs - m.apply(&pix)))
    });
    for (i, res) in inter.into_iter().enumerate() {
        report.push(Check::new(format!("wold.intertwining.i={}", i + 1), "Pi_V V_i = M_Phi_i Pi_V", res, tol.structural, hw.clone()));
    }

    for i in 0..n {
        let x = &e_window;
        let wt = &wandering.w_tilde[i];
        let lhs = oracles[i].apply(&(bw * (wt * (wt.adjoint() * x))));
        let vx = oracles[i].apply(&(bw * x));
        let rhs = bw * (bw.adjoint() * vx);
        report.push(Check::new(format!("eq_vt.i={}", i + 1), "V_i P_W~_i = P_W V_i on W", linalg::max_abs(&(lhs - rhs)), tol.structural, ew.clone()));

        let a = linalg::orthonormal_range(&(bw.adjoint() * tildes[i].apply(&(bw * &wandering.w_i[i]))), policy);
        let sum = &a * a.adjoint() + wt * wt.adjoint();
        report.push(Check::new(
            format!("decomposition.tilde.i={}", i + 1),
            "W = V~_i W_i + W~_i",
            linalg::max_abs(&((sum - &id) * x)),
            tol.structural,
            ew.clone(),
        ));
        let b = linalg::orthonormal_range(&(bw.adjoint() * oracles[i].apply(&(bw * wt))), policy);
        let wi = &wandering.w_i[i];
        let sum = &b * b.adjoint() + wi * wi.adjoint();
        report.push(Check::new(
            format!("decomposition.plain.i={}", i + 1),
            "W = W_i + V_i W~_i",
            linalg::max_abs(&((sum - &id) * x)),
            tol.structural,
            ew.clone(),
        ));
    }

    let mut model = ExtractedModel { tuple, wandering, oracles: oracles.to_vec(), window: hwin, window_bound: bound, e_window, wold_depth: depth + 1, report: VerificationReport::new() };

    let mut pairs = Vec::new();
    for mask in 0u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if set.len() > opts.leuw_max_card {
            continue;
        }
        for j in (0..n).filter(|j| !set.contains(j)) {
            pairs.push((set.clone(), j));
        }
    }
    let leuw: Vec<f64> = par::map_slice(opts.exec, &pairs, |(set, j)| leuw_check(&model, set, *j).expect("indices in range"));
    for ((set, j), res) in pairs.iter().zip(leuw) {
        report.push(Check::new(format!("leuw.I={},j={}", subset_label(set), j + 1), "le-UW", res, tol.structural, ew.clone()));
    }
    report.push(Check::new("leuw.telescoping", "sum of le-UW chains = I_W", telescoping_residual(&model), tol.structural, ew));
    model.report = report;
    Ok(model)
}

/// `B_W^* A A^* B_W x` for `A = prod_{i in set} V_i`.
fn range_projection(model: &ExtractedModel, set: &[usize], x: &CMat) -> CMat {
    let grid = model.wandering.w.grid.clone();
    let a = product_of(&grid, &model.oracles, set.iter().cloned());
    let bw = &model.wandering.w.basis;
    bw.adjoint() * a.apply(&a.adjoint(&(bw * x)))
}

/// Residual of the le-UW identity for `I = set`, `j` not in `I`, on the
/// interior window of `E`.
pub fn leuw_check(model: &ExtractedModel, set: &[usize], j: usize) -> Result<f64> {
    let n = model.tuple.n;
    if j >= n || set.iter().any(|&i| i >= n || i == j) {
        return Err(Error::Malformed(format!("invalid index set {set:?} with j = {j}")));
    }
    let t = &model.tuple;
    let x = &model.e_window;
    let mut prod = linalg::identity(t.e);
    for &i in set {
        prod = &t.u[i] * prod;
    }
    let lhs = prod.adjoint() * &t.p[j] * &prod * x;
    let comp: Vec<usize> = (0..n).filter(|i| !set.contains(i)).collect();
    let comp_j: Vec<usize> = comp.iter().cloned().filter(|&i| i != j).collect();
    let rhs = range_projection(model, &comp_j, x) - range_projection(model, &comp, x);
    Ok(linalg::max_abs(&(lhs - rhs)))
}

/// `sum_j [A_{j+1} A_{j+1}^* - A_j A_j^*]|_W = I_W` with `A_j = prod_{i >= j} V_i`.
fn telescoping_residual(model: &ExtractedModel) -> f64 {
    let n = model.tuple.n;
    let x = &model.e_window;
    let mut sum = CMat::zeros(x.nrows(), x.ncols());
    for j in 0..n {
        let with_j: Vec<usize> = (j..n).collect();
        let without: Vec<usize> = (j + 1..n).collect();
        sum += range_projection(model, &without, x) - range_projection(model, &with_j, x);
    }
    linalg::max_abs(&(sum - x))
}
