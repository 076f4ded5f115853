use fppf_core::case::case_to_json;
use fppf_core::oracle::normalized_voltages;
use fppf_core::solvability::quartic;
use fppf_core::synthetic::{
    random_loading, random_no_pqpq_tree, random_radial_tree, scale_to_stress, CertificateKind,
    TreeParams,
};
use fppf_core::{
    branch_flows, certify, certify_general, fppf_map, fppf_solve, newton_solve, parse_case,
    quartic_interval, two_bus_solve, BranchClass, FixedPointMap, IncidenceSet, NewtonConfig,
    PowerNetwork, SolveOptions, StiffnessSet,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(shunt: f64) -> TreeParams {
    TreeParams {
        shunt,
        ..TreeParams::default()
    }
}

fn loaded(seed: u64, n: usize, m: usize, radial: bool, shunt: f64) -> PowerNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = if radial {
        random_radial_tree(&mut rng, n, m, &params(shunt))
    } else {
        random_no_pqpq_tree(&mut rng, n, m, &params(shunt))
    };
    random_loading(&mut rng, &tree)
}

fn stressed(seed: u64, n: usize, m: usize, radial: bool, fraction: f64) -> (PowerNetwork, StiffnessSet) {
    let base = loaded(seed, n, m, radial, 0.0);
    let stiff = StiffnessSet::compute(&base).unwrap();
    (scale_to_stress(&base, &stiff, CertificateKind::Auto, fraction), stiff)
}

fn feasible_pair() -> impl Strategy<Value = (f64, f64)> {
    (0.0..1.0f64, 0.0..1.0f64, any::<bool>()).prop_map(|(delta, frac, neg)| {
        let gamma = frac * ((1.0 - delta) / 4.0).sqrt();
        (if neg { -gamma } else { gamma }, delta)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_flows_match_least_squares(seed in any::<u64>(), n in 1usize..12, m in 1usize..8) {
        let net = loaded(seed, n, m, true, 0.0);
        let p = net.p_injections();
        let flows = branch_flows(&net, &p).unwrap();
        let mut a = DMatrix::zeros(net.bus_count(), net.branch_count());
        for (e, br) in net.branches().iter().enumerate() {
            a[(br.from, e)] = 1.0;
            a[(br.to, e)] = -1.0;
        }
        let normal = a.transpose() * &a;
        let reference = normal.lu().solve(&(a.transpose() * &p)).unwrap();
        prop_assert!((&flows - &reference).amax() < 1e-10);
        prop_assert!((a * flows - p).amax() < 1e-12);
    }

    #[test]
    fn coupling_rows_are_stochastic(seed in any::<u64>(), n in 1usize..15, m in 1usize..10, shunt in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_no_pqpq_tree(&mut rng, n, m, &params(shunt));
        let stiff = StiffnessSet::compute(&net).unwrap();
        prop_assert!(stiff.row_sum_defect() < 1e-11);
        prop_assert!(stiff.min_coupling() >= -1e-14);
    }

    #[test]
    fn open_circuit_voltages_are_positive(seed in any::<u64>(), n in 1usize..15, m in 1usize..6) {
        let net = loaded(seed, n, m, true, 0.3);
        let stiff = StiffnessSet::compute(&net).unwrap();
        prop_assert!(stiff.v_oc.iter().all(|&v| v > 0.0));
        prop_assert!(stiff.d.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn two_bus_margin_identity((gamma, delta) in feasible_pair()) {
        let r = two_bus_solve(gamma, delta);
        let (vp, vm) = (r.v_plus.unwrap(), r.v_minus.unwrap());
        prop_assert!(r.feasible);
        prop_assert!((vp * vp - vm * vm - r.margin.sqrt()).abs() < 1e-12);
        prop_assert!(vm <= vp && vp <= 1.0 && vp > 0.5 && vm < std::f64::consts::FRAC_1_SQRT_2);
        let (lo, hi) = quartic_interval(delta, gamma).unwrap();
        prop_assert!(quartic(delta, gamma, lo).abs() < 1e-12);
        prop_assert!(quartic(delta, gamma, hi).abs() < 1e-12);
        prop_assert!(quartic(delta, gamma, 0.5 * (lo + hi)) <= 1e-15);
    }

    #[test]
    fn matrix_map_matches_branch_loop(seed in any::<u64>(), n in 1usize..10, m in 1usize..6, v0 in 0.6..1.0f64) {
        let (net, stiff) = stressed(seed, n, m, true, 0.5);
        let map = FixedPointMap::new(&net, &stiff).unwrap();
        let inc = IncidenceSet::build(&net);
        let v = DVector::from_fn(net.n_load(), |i, _| v0 + 0.02 * (i % 3) as f64);
        let looped = map.eval(&v).unwrap();
        let matrix = fppf_map(&v, &stiff, &inc, &net.q_load(), map.flows()).unwrap();
        prop_assert!((looped - matrix).amax() < 1e-12);
    }

    #[test]
    fn general_conditions_grow_with_loading(seed in any::<u64>(), n in 2usize..10, m in 1usize..5, t in 0.1..3.0f64, dt in 0.0..1.0f64) {
        let net = loaded(seed, n, m, true, 0.0);
        let stiff = StiffnessSet::compute(&net).unwrap();
        let a = certify_general(&net.scale_loading(t), &stiff).unwrap();
        let b = certify_general(&net.scale_loading(t + dt), &stiff).unwrap();
        for (x, y) in a.conditions().iter().zip(b.conditions()) {
            prop_assert!(x.value <= y.value + 1e-12);
        }
    }

    #[test]
    fn voltage_scaling_leaves_certificate_unchanged(seed in any::<u64>(), n in 1usize..8, m in 1usize..5, kappa in 0.2..20.0f64) {
        let (net, stiff) = stressed(seed, n, m, seed % 2 == 0, 0.7);
        let scaled = net.rescale_voltage(kappa);
        let st = StiffnessSet::compute(&scaled).unwrap();
        let a = certify(&net, &stiff).unwrap();
        let b = certify(&scaled, &st).unwrap();
        for (x, y) in a.conditions().iter().zip(b.conditions()) {
            prop_assert!((x.value - y.value).abs() < 1e-12);
        }
        let opts = SolveOptions { tol: 1e-14, max_iter: 100_000, ..SolveOptions::default() };
        let va = fppf_solve(&net, &stiff, &opts).unwrap().voltage();
        let vb = fppf_solve(&scaled, &st, &opts).unwrap().voltage();
        prop_assert!((va - vb).amax() < 1e-12);
    }

    #[test]
    fn certified_solution_is_a_contraction_fixed_point(seed in any::<u64>(), n in 1usize..8, m in 1usize..5, fraction in 0.05..0.95f64) {
        let (net, stiff) = stressed(seed, n, m, false, fraction);
        let cert = certify(&net, &stiff).unwrap();
        prop_assert!(cert.passed());
        let c = cert.as_no_load_load().unwrap();
        let state = fppf_solve(&net, &stiff, &SolveOptions::default()).unwrap();
        for (v, b) in state.v.iter().zip(c.bus_bounds.as_ref().unwrap()) {
            prop_assert!(*v >= b.v_plus - 1e-9 && *v <= 1.0 + 1e-12);
            prop_assert!(b.beta < 1.0);
        }
        prop_assert!(net.class_count(BranchClass::LoadLoad) == 0);
    }

    #[test]
    fn newton_solutions_are_fixed_points(seed in any::<u64>(), n in 1usize..6, m in 1usize..4, fraction in 0.05..0.9f64) {
        let (net, stiff) = stressed(seed, n, m, seed % 2 == 1, fraction);
        let cfg = NewtonConfig::flat(&net, &stiff);
        let report = newton_solve(&net, &cfg).unwrap();
        prop_assert!(!report.solutions.is_empty());
        let map = FixedPointMap::new(&net, &stiff).unwrap();
        for sol in &report.solutions {
            let v = normalized_voltages(&net, &stiff, sol);
            let f = map.eval(&v).unwrap();
            prop_assert!((f - v).amax() < 1e-8);
        }
    }

    #[test]
    fn case_round_trip(seed in any::<u64>(), n in 1usize..10, m in 1usize..6) {
        let net = loaded(seed, n, m, true, 0.2);
        let text = case_to_json(&net, Some("round trip".into()));
        let back = parse_case(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(case_to_json(&back, Some("round trip".into())), text);
    }
}
