use proptest::prelude::*;

use isoshift::bcl::{self, bcl_validate, random, ValidateOptions};
use isoshift::coeffspace::{self, DegreeGrid, PolyVec, TruncationMode};
use isoshift::cstar::{self, CStarOptions, CoDoublyCommutingSpec, GridOp, Hardy, InvariantSubspace};
use isoshift::linalg::{self, c, CMat, RankPolicy};
use isoshift::matpoly::{self, FiniteBlaschke, MatPoly};
use isoshift::par::Execution;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn seq() -> CStarOptions {
    CStarOptions { exec: Execution::Sequential, ..Default::default() }
}

fn zero_in_disc(r: f64, t: f64) -> isoshift::linalg::C64 {
    isoshift::linalg::C64::from_polar(r, t)
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn valid_tuples_pass_and_perturbed_fail(seed in any::<u64>(), n in 1usize..=4, e in 1usize..=6) {
        let mut rng = random::rng(seed);
        let t = random::valid_tuple(&mut rng, n, e);
        let r = bcl_validate(&t, &ValidateOptions::default());
        prop_assert!(r.all_pass(), "{}", r.render_text());
        let bad = random::perturbed_tuple(&mut rng, &t);
        prop_assert!(!bcl_validate(&bad, &ValidateOptions::default()).all_pass());
    }

    #[test]
    fn validation_is_unitarily_invariant(seed in any::<u64>(), n in 2usize..=3, e in 2usize..=5) {
        let mut rng = random::rng(seed);
        let t = random::valid_tuple(&mut rng, n, e);
        let q = random::unitary(&mut rng, e);
        let r = bcl_validate(&t.conjugate(&q), &ValidateOptions::default());
        prop_assert!(r.all_pass());
        let w = bcl::bcl_intertwiner(&t, &t.conjugate(&q), &Default::default(), seed);
        prop_assert_eq!(w.status, bcl::SearchStatus::Found);
    }

    #[test]
    fn shift_adjoint_inverts_shift(seed in any::<u64>(), n in 1usize..=3, trunc in 3usize..=6) {
        let grid = DegreeGrid::polydisc(n, trunc);
        let mut rng = random::rng(seed);
        // random polynomial of degree < trunc - 1 so that z_i f stays on the grid
        let bound = vec![trunc - 1; n];
        let w = coeffspace::box_basis(&grid, &bound);
        let x = &w * random::gaussian_matrix(&mut rng, w.ncols(), 1);
        let f = PolyVec::from_coeffs(&grid, x.column(0).into_owned()).unwrap();
        for v in 0..n {
            let zf = coeffspace::shift_apply(v, &f, TruncationMode::Strict).unwrap();
            prop_assert_eq!(zf.dropped, 0.0);
            prop_assert!((zf.value.norm() - f.norm()).abs() < 1e-12);
            let back = coeffspace::shift_adjoint_apply(v, &zf.value).unwrap();
            prop_assert!(back.sub(&f).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn inner_product_is_linear_in_first_slot(seed in any::<u64>()) {
        let grid = DegreeGrid::polydisc(2, 4);
        let mut rng = random::rng(seed);
        let mut pv = || PolyVec::from_coeffs(&grid, random::gaussian_matrix(&mut rng, grid.dim(), 1).column(0).into_owned()).unwrap();
        let (f, g, h) = (pv(), pv(), pv());
        let a = c(0.3, -1.2);
        let lhs = coeffspace::inner_product(&f.scale(a).add(&g).unwrap(), &h).unwrap();
        let rhs = a * coeffspace::inner_product(&f, &h).unwrap() + coeffspace::inner_product(&g, &h).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn blaschke_products_are_inner(r in prop::collection::vec((0.0f64..0.6, 0.0f64..6.3), 1..=3)) {
        let zeros: Vec<_> = r.iter().map(|&(m, t)| zero_in_disc(m, t)).collect();
        let phi = FiniteBlaschke::new(zeros).unwrap();
        let coeffs = phi.coefficients(80);
        let mass: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((mass - 1.0).abs() < 1e-10);
        // the truncated multiplier is an isometry on low degrees
        let t = MatPoly::scalar(&coeffs).toeplitz(80);
        let low = t.columns(0, 20).into_owned();
        prop_assert!(linalg::gram_residual(&low) < 1e-10);
    }

    #[test]
    fn model_space_has_degree_dimension(r in prop::collection::vec((0.0f64..0.6, 0.0f64..6.3), 1..=3)) {
        let zeros: Vec<_> = r.iter().map(|&(m, t)| zero_in_disc(m, t)).collect();
        let d = zeros.len();
        let phi = FiniteBlaschke::new(zeros).unwrap();
        let q = matpoly::qphi_basis(&phi, 48).unwrap();
        prop_assert_eq!(q.basis.dim(), d);
        prop_assert!(q.residual < 1e-8);
    }

    #[test]
    fn toeplitz_is_multiplicative(seed in any::<u64>(), d1 in 0usize..3, d2 in 0usize..3) {
        let mut rng = random::rng(seed);
        let mut poly = |d: usize| MatPoly::new((0..=d).map(|_| random::gaussian_matrix(&mut rng, 2, 2)).collect()).unwrap();
        let (a, b) = (poly(d1), poly(d2));
        let ab = a.mul(&b).unwrap();
        let n = 7;
        let diff = ab.toeplitz(n) - a.toeplitz(n) * b.toeplitz(n);
        prop_assert!(linalg::max_abs(&diff) < 1e-10);
    }

    #[test]
    fn svd_reconstructs_low_rank(seed in any::<u64>(), r in 1usize..6, m in 3usize..20, k in 3usize..20) {
        let mut rng = random::rng(seed);
        let a = random::gaussian_matrix(&mut rng, m, r) * random::gaussian_matrix(&mut rng, r, k);
        for d in [linalg::svd(&a), linalg::jacobi_svd(&a)] {
            let sigma = CMat::from_diagonal(&nalgebra::DVector::from_iterator(d.s.len(), d.s.iter().map(|&s| c(s, 0.0))));
            let recon = &d.u * sigma * d.v.adjoint();
            prop_assert!(linalg::max_abs(&(recon - &a)) < 1e-9 * (1.0 + linalg::max_abs(&a)));
            prop_assert_eq!(RankPolicy::default().rank(&d.s), r.min(m).min(k));
        }
    }

    #[test]
    fn canonical_basis_ignores_the_given_basis(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = random::rng(seed);
        let b = linalg::orthonormal_range(&random::gaussian_matrix(&mut rng, 9, k), RankPolicy::default());
        let q = random::unitary(&mut rng, k);
        let order: Vec<usize> = (0..9).collect();
        let c1 = linalg::canonical_basis(&b, &order, 1e-8);
        let c2 = linalg::canonical_basis(&(&b * q), &order, 1e-8);
        prop_assert!(linalg::max_abs(&(c1 - c2)) < 1e-9);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn sphi_codimension_is_product_of_degrees(d in prop::collection::vec(1usize..=3, 2..=3)) {
        let n = d.len();
        let trunc = if n == 2 { 7 } else { 5 };
        let spec = CoDoublyCommutingSpec {
            n,
            grid: DegreeGrid::polydisc(n, trunc),
            phis: d.iter().map(|&m| FiniteBlaschke::monomial(m)).collect(),
        };
        let (basis, report) = cstar::sphi_build(&spec, &seq()).unwrap();
        prop_assert!(report.all_pass(), "{}", report.render_text());
        prop_assert_eq!(spec.grid.dim() - basis.dim(), d.iter().product::<usize>());
    }

    #[test]
    fn main1_is_unitary_onto_sphi(d1 in 1usize..=2, d2 in 1usize..=2) {
        let spec = CoDoublyCommutingSpec {
            n: 2,
            grid: DegreeGrid::polydisc(2, 8),
            phis: vec![FiniteBlaschke::monomial(d1), FiniteBlaschke::monomial(d2)],
        };
        let m = cstar::main1_unitary(&spec, &seq()).unwrap();
        prop_assert!(m.report.all_pass(), "{}", m.report.render_text());
        prop_assert!(m.report.get("main1.onto").unwrap().residual <= 1e-10);
    }

    #[test]
    fn commutator_rank_is_bounded_by_codimension(cut in prop::collection::vec(0usize..4, 2)) {
        // S^perp spanned by the staircase {z^a : a_1 < cut_1 + 1, a_2 <= cut_2 - a_1}
        let grid = DegreeGrid::polydisc(2, 7);
        let mut cols = Vec::new();
        for a1 in 0..=cut[0] {
            for a2 in 0..=cut[1].saturating_sub(a1) {
                let mut x = CMat::zeros(grid.dim(), 1);
                x[(grid.index(0, &[a1, a2]), 0)] = c(1.0, 0.0);
                cols.push(x);
            }
        }
        let s = InvariantSubspace::from_complement(&grid, &linalg::hstack(&cols, grid.dim())).unwrap();
        let out = cstar::commutator_check(&s, &seq()).unwrap();
        prop_assert!(out.report.all_pass(), "{}", out.report.render_text());
        for (_, f) in &out.pairs {
            prop_assert!(f.rank <= s.codim());
        }
    }

    #[test]
    fn parallel_and_sequential_apply_agree(seed in any::<u64>()) {
        let grid = DegreeGrid::polydisc(3, 5);
        let h = Hardy::new(grid.clone(), Execution::Sequential).unwrap();
        let phi = FiniteBlaschke::new(vec![zero_in_disc(0.4, (seed % 7) as f64)]).unwrap();
        let op = GridOp::product([h.mult(1, &phi), h.shift(0).adjoint(), h.shift(2)]).plus(&h.mult(2, &phi).adjoint());
        let mut rng = random::rng(seed);
        let x = random::gaussian_matrix(&mut rng, grid.dim(), 40);
        let a = op.apply(&grid, &x, Execution::Parallel);
        let b = op.apply(&grid, &x, Execution::Sequential);
        prop_assert_eq!(a, b);
    }
}
