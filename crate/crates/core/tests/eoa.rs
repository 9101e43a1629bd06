mod common;

use common::{instance, Direct};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use sps_ellipsoids::eoa::{
    build_dual, dual_values, eigs_of_xi_p, primal_oracle, select_radius, solve_dual,
    solve_dual_detailed, xi_prime, DEFAULT_DUAL_TOL,
};
use sps_ellipsoids::sps::{indicator, SpsConfig};
use sps_ellipsoids::{eoa, least_squares, Dataset, DualProblem, Stream};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn max_rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max() / b.abs().max()
}

#[test]
fn least_squares_matches_pseudo_inverse() {
    for seed in 0..5 {
        let (ds, _) = instance(3, 20, 2, seed);
        let a = least_squares(&ds).unwrap();
        let b = common::lstsq_pinv(&ds);
        assert!(
            (&a - &b).norm() <= 1e-9 * b.norm(),
            "seed {seed}: {a} vs {b}"
        );
    }
}

#[test]
fn least_squares_interpolates_square_systems() {
    let phi = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
    let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let ds = Dataset::new(phi.clone(), y.clone()).unwrap();
    let th = least_squares(&ds).unwrap();
    assert!((&phi * th - y).norm() < 1e-12);
}

#[test]
fn constant_sign_rows_are_unbounded() {
    let (ds, _) = instance(2, 30, 2, 1);
    for s in [1i8, -1] {
        let cfg = SpsConfig::new(2, 1, vec![vec![s; 30]], vec![0, 1], 0).unwrap();
        let dual = build_dual(&ds, &cfg, 1).unwrap();
        assert!(!dual.bounded());
        assert!((dual.lam_max_k2 - 1.0).abs() < 1e-12);
        for k in &dual.k_eigs {
            assert!((k - s as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn dual_matrices_match_direct_assembly() {
    for seed in 0..10 {
        let (ds, cfg) = instance(2, 8, 2, seed);
        let direct = Direct::new(&ds, &cfg.sign_row(1));
        let dual = build_dual(&ds, &cfg, 1).unwrap();
        assert!(max_rel_mat(&dual.a0, &direct.a0) < 1e-10, "seed {seed}: A0");
        assert!(
            (&dual.b0 - &direct.b0).norm() <= 1e-10 * direct.b0.norm().max(1e-12),
            "seed {seed}: b0"
        );
        assert!(rel(dual.c0, direct.c0) < 1e-10, "seed {seed}: c0");
        // I − K² is PSD, so every eigenvalue of K lies in [−1, 1].
        let d = ds.d();
        let ik2 = DMatrix::identity(d, d) - &direct.k * &direct.k;
        assert!(SymmetricEigen::new(ik2).eigenvalues.min() > -1e-12);
        for k in &dual.k_eigs {
            assert!(k.abs() <= 1.0 + 1e-9);
        }
        let max_sq = dual.k_eigs.iter().map(|k| k * k).fold(0.0, f64::max);
        assert_eq!(dual.lam_max_k2, max_sq);
        assert!(rel(dual.lam_max_k2, direct.lam_max_k2()) < 1e-10);
    }
}

#[test]
fn objective_matches_direct_and_quadratic_form() {
    let (ds, cfg) = instance(2, 25, 3, 4);
    for i in 1..3 {
        let direct = Direct::new(&ds, &cfg.sign_row(i));
        let dual = build_dual(&ds, &cfg, i).unwrap();
        assert!(dual.bounded());
        for f in [1.01, 1.5, 3.0, 10.0, 100.0] {
            let xi = dual.xi_lower * f;
            let ours = dual.objective(xi);
            assert!(rel(ours, direct.objective(xi)) < 1e-8, "i {i}, xi {xi}");
            // γ(ξ) = ξ yᵀP(ξ)y/n.
            let y = ds.outputs();
            let quad = (y.transpose() * direct.xi_p(xi) * y)[(0, 0)] / ds.n() as f64;
            assert!(rel(ours, quad) < 1e-7, "i {i}, xi {xi}: {ours} vs {quad}");
        }
    }
}

#[test]
fn zero_noise_gives_zero_radius() {
    let stream = Stream::new(9);
    let ds = sps_ellipsoids::model::simulate_fir(
        &[5.0, 5.0],
        &sps_ellipsoids::InputSpec::reference_ar(),
        &sps_ellipsoids::NoiseSpec::UniformSymmetric { halfwidth: 3.0 },
        40,
        200,
        stream,
    )
    .unwrap();
    let clean = Dataset::new(
        ds.regressors().clone(),
        ds.regressors() * DVector::from_vec(vec![5.0, 5.0]),
    )
    .unwrap();
    let cfg = sps_ellipsoids::sps_initialize(5, 1, 40, 2).unwrap();
    for i in 1..5 {
        let dual = build_dual(&clean, &cfg, i).unwrap();
        if dual.bounded() {
            assert!(solve_dual(&dual, DEFAULT_DUAL_TOL).unwrap().abs() < 1e-9);
            assert!(primal_oracle(&clean, &cfg, i, 1000).unwrap().abs() < 1e-9);
        }
    }
}

#[test]
fn dual_agrees_with_primal_oracle() {
    for seed in 0..10 {
        let (ds, cfg) = instance(2, 20, 2, 100 + seed);
        let dual = build_dual(&ds, &cfg, 1).unwrap();
        if !dual.bounded() {
            continue;
        }
        let g = solve_dual(&dual, DEFAULT_DUAL_TOL).unwrap();
        let p = primal_oracle(&ds, &cfg, 1, 100_000).unwrap();
        assert!(
            p <= g * (1.0 + 1e-9),
            "seed {seed}: oracle {p} above dual {g}"
        );
        assert!(rel(p, g) < 1e-3, "seed {seed}: oracle {p}, dual {g}");
    }
}

#[test]
fn three_dimensional_oracle_agrees() {
    for seed in 0..4 {
        let (ds, cfg) = instance(3, 30, 2, 300 + seed);
        let dual = build_dual(&ds, &cfg, 1).unwrap();
        if !dual.bounded() {
            continue;
        }
        let g = solve_dual(&dual, DEFAULT_DUAL_TOL).unwrap();
        let p = primal_oracle(&ds, &cfg, 1, 1 << 16).unwrap();
        assert!(p <= g * (1.0 + 1e-9));
        assert!(rel(p, g) < 1e-3, "seed {seed}: oracle {p}, dual {g}");
    }
}

#[test]
fn scalar_dual_matches_hand_solution() {
    for seed in 0..10 {
        let (ds, cfg) = instance(1, 15, 2, 500 + seed);
        let dual = build_dual(&ds, &cfg, 1).unwrap();
        if !dual.bounded() {
            continue;
        }
        let x: Vec<f64> = ds.regressors().column(0).iter().copied().collect();
        let y: Vec<f64> = ds.outputs().iter().copied().collect();
        let hand = common::scalar_hand_dual(&x, &y, &cfg.sign_row(1));
        let g = solve_dual(&dual, DEFAULT_DUAL_TOL).unwrap();
        assert!(rel(g, hand) < 1e-6, "seed {seed}: {g} vs {hand}");
    }
}

#[test]
fn oracle_is_monotone_in_budget() {
    let (ds, cfg) = instance(2, 20, 2, 7);
    let mut last = 0.0;
    for budget in [1usize, 2, 8, 64, 1024, 16384] {
        let v = primal_oracle(&ds, &cfg, 1, budget).unwrap();
        assert!(v >= last, "budget {budget}: {v} < {last}");
        last = v;
    }
}

#[test]
fn two_sums_radius_is_the_single_dual_value() {
    let (ds, cfg) = instance(2, 50, 2, 11);
    let e = eoa(&ds, &cfg, DEFAULT_DUAL_TOL).unwrap();
    let g = solve_dual(&build_dual(&ds, &cfg, 1).unwrap(), DEFAULT_DUAL_TOL).unwrap();
    assert_eq!(e.radius, g);
    assert_eq!(e.center, least_squares(&ds).unwrap());
    assert_eq!(e.shape, ds.rbar());
}

#[test]
fn radius_is_qth_largest_dual_value() {
    let (ds, _) = instance(2, 60, 10, 12);
    let base = sps_ellipsoids::sps_initialize(10, 1, 60, 3).unwrap();
    let mut gammas = dual_values(&ds, &base, DEFAULT_DUAL_TOL).unwrap();
    gammas.sort_by(|a, b| b.total_cmp(a));
    for q in 1..10 {
        let cfg =
            SpsConfig::new(10, q, base.signs().to_vec(), base.permutation().to_vec(), 3).unwrap();
        assert_eq!(
            eoa(&ds, &cfg, DEFAULT_DUAL_TOL).unwrap().radius,
            gammas[q - 1]
        );
    }
}

#[test]
fn all_unbounded_rows_give_infinite_radius() {
    let (ds, _) = instance(2, 40, 5, 13);
    let cfg = SpsConfig::new(5, 2, vec![vec![1; 40]; 4], vec![4, 3, 2, 1, 0], 0).unwrap();
    let e = eoa(&ds, &cfg, DEFAULT_DUAL_TOL).unwrap();
    assert!(e.radius.is_infinite());
    assert!(!e.is_bounded());
    assert!(e.size().is_infinite());
    assert!(e.contains(&DVector::from_vec(vec![1e9, -1e9])));
}

#[test]
fn mixed_rows_follow_qth_largest_with_infinity() {
    let (ds, _) = instance(2, 40, 4, 14);
    let fresh = sps_ellipsoids::sps_initialize(4, 1, 40, 5).unwrap();
    let mut signs = fresh.signs().to_vec();
    signs[0] = vec![1; 40];
    let one_inf = SpsConfig::new(4, 1, signs.clone(), vec![0, 1, 2, 3], 0).unwrap();
    assert!(eoa(&ds, &one_inf, DEFAULT_DUAL_TOL)
        .unwrap()
        .radius
        .is_infinite());
    let q2 = SpsConfig::new(4, 2, signs, vec![0, 1, 2, 3], 0).unwrap();
    let r = eoa(&ds, &q2, DEFAULT_DUAL_TOL).unwrap().radius;
    assert!(r.is_finite());
    let finite: Vec<f64> = (2..4)
        .map(|i| solve_dual(&build_dual(&ds, &q2, i).unwrap(), DEFAULT_DUAL_TOL).unwrap())
        .collect();
    assert_eq!(r, finite.iter().copied().fold(f64::NEG_INFINITY, f64::max));
}

#[test]
fn accepted_parameters_lie_in_the_ellipsoid() {
    use rand::Rng;
    for trial in 0..20u64 {
        let (ds, cfg) = instance(2, 100, 10, 1000 + trial);
        let e = eoa(&ds, &cfg, DEFAULT_DUAL_TOL).unwrap();
        if !e.is_bounded() {
            continue;
        }
        let isqrt = common::sym_fn(&ds.rbar(), |l| 1.0 / l.sqrt());
        let mut rng = Stream::new(trial).split(7).rng();
        let mut accepted = 0;
        for _ in 0..2000 {
            let z = DVector::from_fn(2, |_, _| rng.random_range(-1.3..1.3) * e.radius.sqrt());
            let theta = &e.center + &isqrt * z;
            if indicator(&ds, &cfg, &theta).unwrap().accepted {
                accepted += 1;
                assert!(
                    e.quad_form(&theta) <= e.radius * (1.0 + 1e-9),
                    "trial {trial}"
                );
            }
        }
        assert!(accepted > 0);
    }
}

#[test]
fn eig_formula_matches_direct_assembly() {
    for seed in 0..10 {
        let (ds, cfg) = instance(2, 20, 2, 600 + seed);
        let dual = build_dual(&ds, &cfg, 1).unwrap();
        if !dual.bounded() {
            continue;
        }
        let direct = Direct::new(&ds, &cfg.sign_row(1));
        let xi = 2.0 * dual.xi_lower;
        let formula = eigs_of_xi_p(&dual, xi).unwrap();
        let assembled = common::top_eigs(&direct.xi_p(xi), 2);
        for (a, b) in formula.iter().zip(&assembled) {
            assert!(
                rel(*a, *b) < 1e-8,
                "seed {seed}: {formula:?} vs {assembled:?}"
            );
        }
        // The remaining n − d eigenvalues vanish.
        let all = common::sorted_desc(
            SymmetricEigen::new(direct.xi_p(xi))
                .eigenvalues
                .iter()
                .copied()
                .collect(),
        );
        assert!(all[2].abs() < 1e-9 * all[0]);
    }
}

#[test]
fn eig_formula_limit_at_zero() {
    let d = DualProblem::from_parts(
        vec![1e-9, 0.5],
        DMatrix::identity(2, 2),
        DVector::zeros(2),
        0.0,
    );
    for xi in [2.0, 5.0, 40.0] {
        let eigs = eig_formula_small(&d, xi);
        assert!(rel(eigs, xi) < 1e-12);
    }
    assert!(eigs_of_xi_p(&d, d.xi_lower).is_err());
}

fn eig_formula_small(d: &DualProblem, xi: f64) -> f64 {
    *eigs_of_xi_p(d, xi).unwrap().last().unwrap()
}

#[test]
fn xi_prime_minimises_the_top_eigenvalue() {
    for seed in 0..10 {
        let (ds, cfg) = instance(2, 20, 2, 700 + seed);
        let dual = build_dual(&ds, &cfg, 1).unwrap();
        if !dual.bounded() {
            continue;
        }
        let direct = Direct::new(&ds, &cfg.sign_row(1));
        let top = |xi: f64| common::top_eigs(&direct.xi_p(xi), 1)[0];
        let lo = dual.xi_lower;
        let numeric = common::ternary_min(
            |u| top(lo + u.exp()),
            (lo * 1e-6).ln(),
            (lo * 1e3).ln(),
            200,
        );
        let xi_num = lo + numeric.exp();
        assert!(
            rel(xi_num, xi_prime(&dual)) < 1e-4,
            "seed {seed}: {xi_num} vs {}",
            xi_prime(&dual)
        );
        // At ξ′ the formula value is the minimum of the assembled curve.
        let at = eigs_of_xi_p(&dual, xi_prime(&dual)).unwrap()[0];
        assert!(at <= top(xi_num) * (1.0 + 1e-9));
    }
}

#[test]
fn dual_minimiser_is_feasible() {
    let (ds, cfg) = instance(2, 50, 10, 21);
    for i in 1..10 {
        let dual = build_dual(&ds, &cfg, i).unwrap();
        if let Ok(sol) = solve_dual_detailed(&dual, DEFAULT_DUAL_TOL) {
            assert!(sol.xi > dual.xi_lower);
            assert!(rel(dual.objective(sol.xi), sol.gamma) < 1e-12 || sol.gamma == 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dual_objective_is_convex(seed in 0u64..10_000, i in 1usize..5) {
        let (ds, cfg) = instance(2, 30, 5, seed);
        let dual = build_dual(&ds, &cfg, i).unwrap();
        prop_assume!(dual.bounded());
        let lo = dual.xi_lower;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        use rand::Rng;
        for _ in 0..1000 {
            let a = lo * (1.0 + 10f64.powf(rng.random_range(-4.0..3.0)));
            let b = lo * (1.0 + 10f64.powf(rng.random_range(-4.0..3.0)));
            let (ha, hb) = (dual.objective(a), dual.objective(b));
            let hm = dual.objective(0.5 * (a + b));
            prop_assert!(hm <= 0.5 * (ha + hb) + 1e-9 * (1.0 + ha.abs().max(hb.abs())));
        }
    }

    #[test]
    fn radius_nonincreasing_in_q(gammas in proptest::collection::vec(prop_oneof![9 => 0.0f64..100.0, 1 => Just(f64::INFINITY)], 2..12)) {
        for q in 1..gammas.len() {
            let r1 = select_radius(&gammas, q).unwrap();
            let r2 = select_radius(&gammas, q + 1).unwrap();
            prop_assert!(r1 >= r2);
        }
    }

    #[test]
    fn eig_identity_random_instances(seed in 0u64..10_000, f in 0.01f64..10.0) {
        let (ds, cfg) = instance(2, 16, 2, seed);
        let dual = build_dual(&ds, &cfg, 1).unwrap();
        prop_assume!(dual.bounded());
        let direct = Direct::new(&ds, &cfg.sign_row(1));
        let xi = dual.xi_lower * (1.0 + f);
        let formula = eigs_of_xi_p(&dual, xi).unwrap();
        let assembled = common::top_eigs(&direct.xi_p(xi), 2);
        for (a, b) in formula.iter().zip(&assembled) {
            prop_assert!(rel(*a, *b) < 1e-8, "{:?} vs {:?}", formula, assembled);
        }
    }
}
