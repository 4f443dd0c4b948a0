use nalgebra::DVector;
use proptest::prelude::*;

use crp_core::jed::solve_jed;
use crp_core::netmodel::{
    build_local_qp, full_susceptance, load_case, parse_case, random_case, LoadOptions, RandomCaseSpec,
};

fn case(name: &str) -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases").join(name)
}

#[test]
fn bundled_cases_load_in_stable_order() {
    for name in ["toy2.json", "six_bus.json", "tight_tie.json", "ieee14_30_s1.json", "ieee14_30_s2.json"] {
        let a = load_case(case(name)).unwrap();
        let b = load_case(case(name)).unwrap();
        assert_eq!(a.boundary_buses(), b.boundary_buses(), "{name}");
        let la: Vec<String> = a.boundary_buses().iter().map(|&(x, y)| a.bus_label(x, y)).collect();
        let lb: Vec<String> = b.boundary_buses().iter().map(|&(x, y)| b.bus_label(x, y)).collect();
        assert_eq!(la, lb);
        for ai in 0..a.areas.len() {
            assert_eq!(build_local_qp(&a, ai).unwrap().labels, build_local_qp(&b, ai).unwrap().labels);
        }
    }
}

#[test]
fn ieee_units_are_per_unit() {
    let sys = load_case(case("ieee14_30_s1.json")).unwrap();
    let load_mw: f64 = sys.total_load() * sys.base_mva;
    // 259 MW on the 14-bus side plus 189.2 MW on the 30-bus side
    assert!((load_mw - 448.2).abs() < 1e-6, "{load_mw}");
}

#[test]
fn case_file_round_trip() {
    for name in ["toy2.json", "six_bus.json", "ieee14_30_s2.json"] {
        let sys = load_case(case(name)).unwrap();
        let text = serde_json::to_string(&sys.to_case_file()).unwrap();
        let back = parse_case(&text, &LoadOptions::default()).unwrap();
        assert_eq!(back.to_case_file(), sys.to_case_file(), "{name}");
        assert_eq!(solve_jed(&back).unwrap().cost, solve_jed(&sys).unwrap().cost);
    }
}

#[test]
fn susceptance_rows_sum_to_zero() {
    let sys = load_case(case("ieee14_30_s1.json")).unwrap();
    let (b, labels) = full_susceptance(&sys);
    assert_eq!(labels.len(), b.nrows());
    for r in 0..b.nrows() {
        assert!(b.row(r).sum().abs() < 1e-9);
        for c in 0..b.ncols() {
            assert!(r == c || b[(r, c)] <= 0.0);
        }
    }
    assert!((&b - b.transpose()).amax() < 1e-12);
}

fn check_jed_consistency(sys: &crp_core::netmodel::MultiAreaSystem) {
    let jed = solve_jed(sys).unwrap();
    for ai in 0..sys.areas.len() {
        let data = build_local_qp(sys, ai).unwrap();
        let g = &jed.g[ai];
        let th = &jed.theta_boundary;
        let eq = &data.m * g + &data.m_bar * th + &data.m_tilde;
        assert!(eq.amax() < 1e-9, "area {ai}: equality residual {}", eq.amax());
        let ineq = &data.n * g + &data.n_bar * th + &data.n_tilde;
        assert!(ineq.max() < 1e-8, "area {ai}: inequality violation {}", ineq.max());

        let internal = data.internal_angles(g, th);
        let expected = DVector::from_iterator(
            internal.len(),
            data.internal_buses().iter().map(|&k| jed.theta[ai][k]),
        );
        assert!((internal - expected).amax() < 1e-9, "area {ai}: angle reconstruction");
    }
}

#[test]
fn jed_solution_satisfies_local_models() {
    for name in ["toy2.json", "six_bus.json", "tight_tie.json", "ieee14_30_s1.json", "ieee14_30_s2.json"] {
        check_jed_consistency(&load_case(case(name)).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_cases_satisfy_local_models(seed in 0u64..5_000, areas in 1usize..=3) {
        let sys = random_case(&RandomCaseSpec::new(areas, 4, 12, seed)).unwrap();
        check_jed_consistency(&sys);
    }
}
