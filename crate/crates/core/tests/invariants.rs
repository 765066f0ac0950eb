//! Property-based invariants of the pointwise functions, norms and linear solvers.

mod common;

use bingham_ep::analysis::{estimate_sigma0, ScalarFieldP1};
use bingham_ep::fem::Mat2;
use bingham_ep::linsolve::{norm2, reverse_cuthill_mckee, solve_spd, EnvelopeCholesky, SparseSym};
use bingham_ep::mesh::{build_rect_mesh, Rect};
use bingham_ep::model::{self, div_hessian_weight, huber_abs, huber_frobenius, huber_norm, theta_beta};
use common::*;
use proptest::prelude::*;

fn mat() -> impl Strategy<Value = Mat2> {
    prop::array::uniform2(prop::array::uniform2(-10.0f64..10.0))
}

/// Random sparse symmetric, strictly diagonally dominant matrix.
fn spd(n: usize, entries: &[(usize, usize, f64)]) -> SparseSym {
    let mut trip = Vec::new();
    let mut diag = vec![1.0; n];
    for &(i, j, v) in entries {
        let (i, j) = (i % n, j % n);
        if i != j {
            trip.push((i, j, v));
            trip.push((j, i, v));
            diag[i] += v.abs();
            diag[j] += v.abs();
        }
    }
    for (i, d) in diag.into_iter().enumerate() {
        trip.push((i, i, d));
    }
    SparseSym::from_triplets(n, &trip)
}

proptest! {
    #[test]
    fn huber_norm_is_continuous_at_the_kink(g in 1e-3f64..100.0, beta in 1e-2f64..1e4) {
        let t = g / beta;
        let below = huber_norm(t * (1.0 - 1e-12), g, beta);
        let above = huber_norm(t * (1.0 + 1e-12), g, beta);
        prop_assert!((below - above).abs() <= 1e-9 * (1.0 + g * t));
        prop_assert!((huber_norm(t, g, beta) - 0.5 * g * t).abs() <= 1e-12 * (1.0 + g * t));
    }

    #[test]
    fn huber_norm_is_g_lipschitz_and_bounded(a in 0.0f64..50.0, b in 0.0f64..50.0,
                                             g in 0.0f64..20.0, beta in 1e-2f64..1e4) {
        let (fa, fb) = (huber_norm(a, g, beta), huber_norm(b, g, beta));
        prop_assert!((fa - fb).abs() <= g * (a - b).abs() * (1.0 + 1e-12) + 1e-12);
        prop_assert!(fa >= 0.0 && fa <= g * a + 1e-12);
        prop_assert!(fa >= g * a - g * g / (2.0 * beta) - 1e-9);
    }

    #[test]
    fn huber_frobenius_depends_only_on_the_norm(a in mat(), g in 0.0f64..20.0, beta in 1e-2f64..1e3) {
        let n = (a[0][0].powi(2) + a[0][1].powi(2) + a[1][0].powi(2) + a[1][1].powi(2)).sqrt();
        let rot = [[a[1][1], -a[1][0]], [-a[0][1], a[0][0]]];
        prop_assert!((huber_frobenius(&a, g, beta) - huber_norm(n, g, beta)).abs() <= 1e-12 * (1.0 + g * n));
        prop_assert!((huber_frobenius(&rot, g, beta) - huber_frobenius(&a, g, beta)).abs() <= 1e-10 * (1.0 + g * n));
    }

    #[test]
    fn theta_is_the_maximum(a in mat(), g in 0.0f64..20.0, beta in 1e-2f64..1e3) {
        let n = (a[0][0].powi(2) + a[0][1].powi(2) + a[1][0].powi(2) + a[1][1].powi(2)).sqrt();
        let t = theta_beta(&a, g, beta);
        prop_assert!(t >= g && t >= beta * n * (1.0 - 1e-15));
        prop_assert!(t == g || (t - beta * n).abs() <= 1e-12 * t);
    }

    #[test]
    fn theta_is_beta_lipschitz(a in mat(), b in mat(), g in 0.0f64..20.0, beta in 1e-2f64..1e3) {
        let d = [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]];
        let dn = (d[0][0].powi(2) + d[0][1].powi(2) + d[1][0].powi(2) + d[1][1].powi(2)).sqrt();
        let gap = (theta_beta(&a, g, beta) - theta_beta(&b, g, beta)).abs();
        prop_assert!(gap <= beta * dn * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn huber_abs_is_even_and_sandwiched(z in -10.0f64..10.0, sigma in 1e-3f64..1e4, gamma in 1e-2f64..1e10) {
        let v = huber_abs(z, sigma, gamma);
        prop_assert_eq!(v, huber_abs(-z, sigma, gamma));
        prop_assert!(v <= sigma * z.abs() * (1.0 + 1e-12) + 1e-300);
        prop_assert!(v >= sigma * z.abs() - sigma * sigma / (2.0 * gamma) - 1e-9 * sigma);
    }

    #[test]
    fn divergence_weight_is_a_selection(z in -1.0f64..1.0, sigma in 1e-3f64..1e4, gamma in 1e-2f64..1e10) {
        let w = div_hessian_weight(z, sigma, gamma);
        prop_assert!(w == 0.0 || w == gamma);
        prop_assert_eq!(w == gamma, gamma * z.abs() <= sigma);
    }

    #[test]
    fn div_l1_is_bounded_by_l2_on_unit_area(seed in 0u64..1000, amp in 1e-3f64..10.0) {
        let space = unit_space(3, 4);
        let u = random_field(seed, space.ndof(), amp);
        let (l1, l2) = model::div_norms(&space, &u);
        prop_assert!(l1 <= l2 * (1.0 + 1e-12));
    }

    #[test]
    fn sigma0_estimate_is_positively_homogeneous(seed in 0u64..1000, s in -100.0f64..100.0,
                                                 w in 0.5f64..4.0, e in -1.0f64..0.0) {
        let mesh = build_rect_mesh(3, 2, Rect::new(0.0, w, 0.0, 1.0)).unwrap();
        let space = bingham_ep::fem::FeSpace::new(mesh, 4).unwrap();
        let lam = ScalarFieldP1 { values: random_field(seed, space.mesh.vertices.len(), 1.0), zero_mean: false };
        let base = estimate_sigma0(&space, &lam, e);
        let scaled = estimate_sigma0(&space, &lam.scaled(s), e);
        prop_assert!((scaled - s.abs() * base).abs() <= 1e-12 * (1.0 + s.abs() * base));
        let area_scale = estimate_sigma0(&space, &lam, e) / lam.l2_norm(&space);
        prop_assert!((area_scale - w.powf(e)).abs() <= 1e-12 * w.powf(e));
    }

    #[test]
    fn cg_is_permutation_invariant((n, perm) in (5usize..40).prop_flat_map(|n| (Just(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle())),
                                   entries in prop::collection::vec((0usize..40, 0usize..40, -1.0f64..1.0), 0..120),
                                   seed in 0u64..1000) {
        let a = spd(n, &entries);
        let b = random_field(seed, n, 1.0);
        let dense = a.to_dense();
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = dense[perm[i]][perm[j]];
                if v != 0.0 {
                    trip.push((i, j, v));
                }
            }
        }
        let pa = SparseSym::from_triplets(n, &trip);
        let pb: Vec<f64> = perm.iter().map(|&k| b[k]).collect();
        let x = solve_spd(&a, &b, 1e-13, 10 * n).unwrap().x;
        let px = solve_spd(&pa, &pb, 1e-13, 10 * n).unwrap().x;
        for i in 0..n {
            prop_assert!((px[i] - x[perm[i]]).abs() <= 1e-10 * (1.0 + norm2(&x)));
        }
    }

    #[test]
    fn envelope_cholesky_matches_dense_on_random_spd(
        entries in prop::collection::vec((0usize..50, 0usize..50, -1.0f64..1.0), 0..300),
        seed in 0u64..1000,
    ) {
        let n = 50;
        let a = spd(n, &entries);
        let b = random_field(seed, n, 1.0);
        let oracle = dense_cholesky_solve(&a.to_dense(), &b);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let x = chol.solve(&b);
        prop_assert!(norm2(&sub(&x, &oracle)) <= 1e-12 * (1.0 + norm2(&oracle)));
    }

    #[test]
    fn rcm_is_a_permutation(entries in prop::collection::vec((0usize..30, 0usize..30, -1.0f64..1.0), 0..90)) {
        let a = spd(30, &entries);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort();
        prop_assert_eq!(p, (0..30).collect::<Vec<_>>());
    }
}
