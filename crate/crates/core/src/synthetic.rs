//! Seeded random radial networks and loadings for tests and benchmarks.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::network::{Bus, Line, PowerNetwork};
use crate::solvability::{certify, certify_general, certify_no_pqpq, Certificate};
use crate::stiffness::StiffnessSet;

/// Ranges used when drawing random network parameters.
#[derive(Debug, Clone)]
pub struct TreeParams {
    /// Branch susceptances are drawn from `[b_min, b_max]` (negative).
    pub b_range: (f64, f64),
    pub v_set_range: (f64, f64),
    /// Shunts are drawn from `[-shunt, shunt]`; zero disables them.
    pub shunt: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            b_range: (-20.0, -2.0),
            v_set_range: (0.95, 1.1),
            shunt: 0.0,
        }
    }
}

fn build(
    rng: &mut impl Rng,
    n_load: usize,
    n_gen: usize,
    params: &TreeParams,
    load_load: bool,
) -> PowerNetwork {
    assert!(n_gen >= 1, "a radial network needs at least one PV bus");
    let mut kinds = vec![true; n_gen - 1];
    kinds.extend(std::iter::repeat_n(false, n_load));
    kinds.shuffle(rng);
    kinds.insert(0, true);

    let mut buses = Vec::with_capacity(kinds.len());
    let mut lines = Vec::with_capacity(kinds.len() - 1);
    let mut gens = Vec::new();
    for (k, &is_gen) in kinds.iter().enumerate() {
        let id = k + 1;
        let shunt = if params.shunt > 0.0 {
            rng.random_range(-params.shunt..=params.shunt)
        } else {
            0.0
        };
        if k > 0 {
            let parent = if is_gen || load_load {
                rng.random_range(0..k)
            } else {
                gens[rng.random_range(0..gens.len())]
            };
            let b = rng.random_range(params.b_range.0..=params.b_range.1);
            lines.push(Line::new(parent + 1, id, b));
        }
        if is_gen {
            let v = rng.random_range(params.v_set_range.0..=params.v_set_range.1);
            buses.push(Bus::pv(id, 0.0, v));
            gens.push(k);
        } else {
            buses.push(Bus::pq(id, 0.0, 0.0).with_shunt(shunt));
        }
    }
    PowerNetwork::new(100.0, buses, lines).expect("generated tree is valid")
}

/// Random tree in which every PQ bus connects only to PV buses.
pub fn random_no_pqpq_tree(
    rng: &mut impl Rng,
    n_load: usize,
    n_gen: usize,
    params: &TreeParams,
) -> PowerNetwork {
    build(rng, n_load, n_gen, params, false)
}

/// Random tree with arbitrary attachment, so PQ-PQ branches appear.
pub fn random_radial_tree(
    rng: &mut impl Rng,
    n_load: usize,
    n_gen: usize,
    params: &TreeParams,
) -> PowerNetwork {
    build(rng, n_load, n_gen, params, true)
}

/// Balanced random active injections and inductive reactive loads.
pub fn random_loading(rng: &mut impl Rng, net: &PowerNetwork) -> PowerNetwork {
    let nb = net.bus_count();
    let mut p = DVector::from_fn(nb, |_, _| rng.random_range(-1.0..=1.0));
    let mean = p.mean();
    p.add_scalar_mut(-mean);
    let q = DVector::from_fn(net.n_load(), |_, _| -rng.random_range(0.0..=1.0));
    net.with_injections(&p, &q).expect("dimensions match")
}

/// Two-bus network with `b = -1`, `V_G = 1`, so `D = 1`, `S = -1/4` and the
/// stresses equal the given `(Gamma, Delta)`.
pub fn two_bus(gamma: f64, delta: f64) -> PowerNetwork {
    PowerNetwork::new(
        100.0,
        vec![Bus::pv(1, gamma, 1.0), Bus::pq(2, -gamma, -delta / 4.0)],
        vec![Line::new(1, 2, -1.0)],
    )
    .expect("two-bus network is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    NoLoadLoad,
    General,
    Auto,
}

fn passes(net: &PowerNetwork, stiff: &StiffnessSet, kind: CertificateKind) -> bool {
    let cert = match kind {
        CertificateKind::NoLoadLoad => certify_no_pqpq(net, stiff),
        CertificateKind::General => certify_general(net, stiff),
        CertificateKind::Auto => certify(net, stiff),
    };
    cert.as_ref().is_ok_and(Certificate::passed)
}

/// Largest loading factor `t` for which the certificate on `t (P, Q)`
/// passes, found by bisection; the conditions are monotone in `t`.
pub fn critical_scale(net: &PowerNetwork, stiff: &StiffnessSet, kind: CertificateKind) -> f64 {
    let mut hi = 1.0;
    while passes(&net.scale_loading(hi), stiff, kind) {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if passes(&net.scale_loading(mid), stiff, kind) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Rescales the loading to `fraction` of the critical scale.
pub fn scale_to_stress(
    net: &PowerNetwork,
    stiff: &StiffnessSet,
    kind: CertificateKind,
    fraction: f64,
) -> PowerNetwork {
    let t = critical_scale(net, stiff, kind);
    if t.is_finite() {
        net.scale_loading(fraction * t)
    } else {
        net.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{validate_network, BranchClass};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_pqpq_trees_have_no_load_load_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let n = rng.random_range(1..10);
            let m = rng.random_range(1..10);
            let net = random_no_pqpq_tree(&mut rng, n, m, &TreeParams::default());
            assert_eq!(net.n_load(), n);
            assert_eq!(net.n_gen(), m);
            assert_eq!(net.class_count(BranchClass::LoadLoad), 0);
            assert!(validate_network(&random_loading(&mut rng, &net)).accepted());
        }
    }

    #[test]
    fn general_trees_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = TreeParams {
            shunt: 0.1,
            ..TreeParams::default()
        };
        let mut seen_ll = false;
        for _ in 0..50 {
            let net = random_radial_tree(&mut rng, 6, 3, &params);
            seen_ll |= net.class_count(BranchClass::LoadLoad) > 0;
            assert!(validate_network(&net).accepted());
            assert!(StiffnessSet::compute(&net).is_ok());
        }
        assert!(seen_ll);
    }

    #[test]
    fn stress_scaling_lands_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = random_radial_tree(&mut rng, 5, 3, &TreeParams::default());
        let base = random_loading(&mut rng, &tree);
        let st = StiffnessSet::compute(&base).unwrap();
        let t = critical_scale(&base, &st, CertificateKind::General);
        assert!(passes(&base.scale_loading(0.999 * t), &st, CertificateKind::General));
        assert!(!passes(&base.scale_loading(1.001 * t), &st, CertificateKind::General));
    }

    #[test]
    fn two_bus_stresses() {
        let net = two_bus(0.25, 0.5);
        let st = StiffnessSet::compute(&net).unwrap();
        assert_eq!(st.d[0], 1.0);
        assert_eq!(st.s[(0, 0)], -0.25);
    }
}
