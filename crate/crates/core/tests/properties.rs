use dictlasso::dictionaries::{fused_lasso_dictionary, DictionarySpec};
use dictlasso::linalg::{condition_number, orthonormality_defect};
use dictlasso::problem::{generate_instance, support_of, Design, InstanceSpec, LambdaChoice};
use dictlasso::rng;
use dictlasso::solver::objective;
use dictlasso::theory::{cone_check, default_l, lemma_checks, restricted_extremes, support_partition, Enumeration};
use dictlasso::{simplify, solve_full, solve_simplified, Matrix, SolveOptions, Vector};
use proptest::prelude::*;

fn dictionary_strategy() -> impl Strategy<Value = DictionarySpec> {
    prop_oneof![
        (4usize..10).prop_map(|p| DictionarySpec::Difference1d { p }),
        (4usize..10).prop_map(|p| DictionarySpec::Fused { p, lambda1: 1.0, lambda2: 0.7 }),
        (4usize..10, 1.0f64..20.0, any::<u64>()).prop_map(|(p, kappa, seed)| DictionarySpec::Conditioned { p, kappa, seed }),
        (5usize..10, 3usize..15, any::<u64>()).prop_map(|(p, m, seed)| DictionarySpec::RandomGraph { p, m, seed }),
        Just(DictionarySpec::GridTv { dims: vec![2, 3] }),
    ]
}

fn spec(dictionary: DictionarySpec, extra_rows: usize, noise: f64, seed: u64) -> InstanceSpec {
    let n = dictionary.p() + extra_rows;
    InstanceSpec {
        dictionary,
        n,
        sparsity: Some(2),
        noise_sigma: noise,
        design: Design::Gaussian,
        lambda: LambdaChoice::default(),
        c_mult: 2.0,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn construction_identity_holds(d in dictionary_strategy(), extra in 0usize..6, seed in any::<u64>()) {
        let pr = generate_instance(&spec(d, extra, 0.1, seed)).unwrap();
        let gt = pr.ground_truth.as_ref().unwrap();
        prop_assert_eq!(&pr.c, &(&pr.phi * &gt.theta_star + &gt.epsilon));
    }

    #[test]
    fn simplification_invariants(d in dictionary_strategy(), extra in 0usize..6, seed in any::<u64>()) {
        let pr = generate_instance(&spec(d, extra, 0.1, seed)).unwrap();
        let sf = simplify(&pr).unwrap();
        prop_assert!(orthonormality_defect(&sf.v_beta) < 1e-10);
        if sf.free_dim() > 0 {
            prop_assert!(orthonormality_defect(&sf.v_alpha) < 1e-10);
            prop_assert!((sf.v_beta.transpose() * &sf.v_alpha).amax() < 1e-10);
            // D vanishes on the free part
            prop_assert!((&pr.d * &sf.v_alpha).amax() < 1e-9 * (1.0 + pr.d.amax()));
        }
        let r = sf.rank_r;
        prop_assert!(((&sf.z_pinv * &sf.z) - Matrix::identity(r, r)).amax() < 1e-9);
        let p_mat = sf.projector();
        prop_assert!((&p_mat * &p_mat - &p_mat).amax() < 1e-9);
        prop_assert!((&p_mat * &sf.a).amax() < 1e-9 * (1.0 + sf.a.amax()));
    }

    #[test]
    fn solved_point_beats_reference_points(d in dictionary_strategy(), extra in 2usize..6, seed in any::<u64>()) {
        let pr = generate_instance(&spec(d, extra, 0.1, seed)).unwrap();
        let res = solve_full(&pr, &SolveOptions::default()).unwrap();
        prop_assume!(res.converged);
        prop_assert!(res.optimality_residual <= 1e-6);
        let f = objective(&pr, &res.theta_hat);
        let tol = 1e-9 * (1.0 + f.abs());
        prop_assert!(f <= objective(&pr, &Vector::zeros(pr.p())) + tol);
        prop_assert!(f <= objective(&pr, &pr.ground_truth.as_ref().unwrap().theta_star) + tol);
        let mut r = rng::stream(seed ^ 0xabc);
        for _ in 0..10 {
            let theta = &res.theta_hat + rng::gaussian_vector(&mut r, pr.p()) * 0.1;
            prop_assert!(f <= objective(&pr, &theta) + tol);
        }
    }

    #[test]
    fn full_and_reduced_paths_agree(d in dictionary_strategy(), extra in 2usize..6, seed in any::<u64>()) {
        let pr = generate_instance(&spec(d, extra, 0.1, seed)).unwrap();
        let full = solve_full(&pr, &SolveOptions::default()).unwrap();
        let sf = simplify(&pr).unwrap();
        let red = solve_simplified(&sf, pr.lambda, &SolveOptions::default()).unwrap();
        prop_assume!(full.converged && red.converged);
        prop_assert!((&full.theta_hat - &red.theta_hat).norm() <= 1e-4 * (1.0 + full.theta_hat.norm()));
    }

    #[test]
    fn solves_are_deterministic(d in dictionary_strategy(), seed in any::<u64>()) {
        let pr = generate_instance(&spec(d, 3, 0.1, seed)).unwrap();
        let a = solve_full(&pr, &SolveOptions::default()).unwrap();
        let b = solve_full(&pr, &SolveOptions::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lemma_inequalities_on_converged_solves(d in dictionary_strategy(), extra in 2usize..8, seed in any::<u64>()) {
        let pr = generate_instance(&spec(d, extra, 0.2, seed)).unwrap();
        let sf = simplify(&pr).unwrap();
        let res = solve_simplified(&sf, pr.lambda, &SolveOptions::default()).unwrap();
        prop_assume!(res.converged && pr.lambda > 0.0);
        let gt = pr.ground_truth.as_ref().unwrap();
        let t0 = support_of(&(&pr.d * &gt.theta_star));
        let h = res.beta_hat.as_ref().unwrap() - sf.split(&gt.theta_star).1;
        prop_assert!(cone_check(&sf.z, &h, &t0));
        for l in 1..=3 {
            let checks = lemma_checks(&sf, &h, &t0, l, pr.lambda);
            prop_assert!(checks.all_hold(), "{:?}", checks);
        }
    }

    #[test]
    fn partition_covers_complement(values in prop::collection::vec(-5.0f64..5.0, 1..30), l in 1usize..6, k in 0usize..5) {
        let zh = Vector::from_vec(values);
        let t0: Vec<usize> = (0..zh.len()).step_by(k + 2).collect();
        let parts = support_partition(&zh, &t0, l);
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        let flat = all.clone();
        all.sort_unstable();
        let expected: Vec<usize> = (0..zh.len()).filter(|i| !t0.contains(i)).collect();
        prop_assert_eq!(all, expected);
        for (j, chunk) in parts.iter().enumerate() {
            prop_assert!(chunk.len() == l || j + 1 == parts.len());
        }
        // magnitudes never increase along the ordering
        for w in flat.windows(2) {
            prop_assert!(zh[w[0]].abs() >= zh[w[1]].abs());
        }
    }

    #[test]
    fn cone_holds_and_tail_bound_follows(values in prop::collection::vec(-3.0f64..3.0, 4..20), l in 1usize..5) {
        // T0 holds the three largest entries of h
        let h = Vector::from_vec(values);
        let z = Matrix::identity(h.len(), h.len());
        let mut order: Vec<usize> = (0..h.len()).collect();
        order.sort_by(|&a, &b| h[b].abs().total_cmp(&h[a].abs()));
        let t0: Vec<usize> = order[..3].to_vec();
        let on: f64 = t0.iter().map(|&i| h[i].abs()).sum();
        let off: f64 = h.iter().map(|v| v.abs()).sum::<f64>() - on;
        prop_assert_eq!(cone_check(&z, &h, &t0), off <= 3.0 * on + 1e-9 * (1.0 + 3.0 * on));
        if off <= 3.0 * on {
            let parts = support_partition(&h, &t0, l);
            let tail: f64 = parts.iter().skip(1).map(|c| c.iter().map(|&i| h[i] * h[i]).sum::<f64>().sqrt()).sum();
            let t0_norm = t0.iter().map(|&i| h[i] * h[i]).sum::<f64>().sqrt();
            prop_assert!(tail <= 3.0 * (3.0 / l as f64).sqrt() * t0_norm + 1e-9);
        }
    }

    #[test]
    fn restricted_extremes_ordering(seed in any::<u64>(), rows in 4usize..10, cols in 2usize..6) {
        let mut r = rng::stream(seed);
        let psi = rng::gaussian_matrix(&mut r, rows, cols);
        let y = rng::gaussian_matrix(&mut r, cols, cols + 1);
        let mut prev = (0.0f64, f64::INFINITY);
        for l2 in 1..=cols + 2 {
            let e = restricted_extremes(&psi, &y, 0, l2, 10_000, Enumeration::Exhaustive).unwrap();
            prop_assert!(e.rho_plus >= e.rho_minus && e.rho_minus >= 0.0);
            prop_assert!(e.rho_plus >= prev.0 - 1e-10 && e.rho_minus <= prev.1 + 1e-10);
            prev = (e.rho_plus, e.rho_minus);
        }
    }

    #[test]
    fn fused_condition_number_bounded(p in 2usize..120, w in 0.2f64..5.0) {
        let k = condition_number(&fused_lasso_dictionary(p, w, w).unwrap()).unwrap();
        prop_assert!((1.0..=3.0).contains(&k));
    }
}

#[test]
fn default_l_exceeds_hypothesis_threshold() {
    for &(kappa, s) in &[(1.0, 1), (2.5, 3), (10.0, 2)] {
        assert!(default_l(kappa, s) as f64 > 9.0 * kappa * kappa * s as f64);
    }
}
