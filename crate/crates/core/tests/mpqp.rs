use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crp_core::jed::solve_jed;
use crp_core::mpqp::{contains, critical_region, remove_redundant, solve_local, stacked_region_rows};
use crp_core::netmodel::{build_local_qp, random_case, RandomCaseSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn region_is_consistent_at_its_query_point(seed in 0u64..5_000, t in 0.0f64..1.0, area in 0usize..3) {
        let sys = random_case(&RandomCaseSpec::new(3, 4, 12, seed)).unwrap();
        let jed = solve_jed(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = DVector::from_fn(jed.theta_boundary.len(), |i, _| {
            t * jed.theta_boundary[i] + 0.01 * rng.gen_range(-1.0..1.0)
        });
        let data = build_local_qp(&sys, area).unwrap();
        let Ok(sol) = solve_local(&data, &theta) else { return Ok(()) };
        let region = critical_region(&data, &sol);

        prop_assert!(contains(&region, &theta));
        prop_assert!((&sol.r_bar * &theta + &sol.r_tilde - &sol.g_star).amax() <= 1e-8);
        prop_assert!((region.value(&theta) - sol.cost).abs() <= 1e-8 * sol.cost.abs().max(1.0));
        prop_assert!(sol.mu.iter().all(|&m| m >= -1e-9));
        for (j, &m) in sol.mu.iter().enumerate() {
            if !sol.active_set.contains(&j) {
                prop_assert_eq!(m, 0.0);
            }
        }
        prop_assert!(region.n_rows() <= region.rows_before_reduction);

        let (s, _, _) = stacked_region_rows(&data, &sol);
        prop_assert_eq!(s.nrows(), region.rows_before_reduction);
        let again = remove_redundant(&region.s_bar, &region.s_tilde, Some(&theta));
        prop_assert_eq!(again.after, region.n_rows());
    }

    #[test]
    fn local_solution_is_deterministic(seed in 0u64..5_000) {
        let sys = random_case(&RandomCaseSpec::new(2, 4, 10, seed)).unwrap();
        let jed = solve_jed(&sys).unwrap();
        let data = build_local_qp(&sys, 0).unwrap();
        let a = solve_local(&data, &jed.theta_boundary).unwrap();
        let b = solve_local(&data, &jed.theta_boundary).unwrap();
        prop_assert_eq!(a.active_set, b.active_set);
        prop_assert_eq!(a.g_star, b.g_star);
    }
}
