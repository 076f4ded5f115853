//! Seeded benchmark fixtures.

use fppf_core::synthetic::{
    random_loading, random_no_pqpq_tree, random_radial_tree, scale_to_stress, CertificateKind,
    TreeParams,
};
use fppf_core::{PowerNetwork, StiffnessSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A certified network loaded to `fraction` of its critical scale.
pub fn fixture(n_load: usize, n_gen: usize, load_load: bool, fraction: f64) -> (PowerNetwork, StiffnessSet) {
    let mut rng = ChaCha8Rng::seed_from_u64((n_load * 1000 + n_gen) as u64);
    let params = TreeParams::default();
    let tree = if load_load {
        random_radial_tree(&mut rng, n_load, n_gen, &params)
    } else {
        random_no_pqpq_tree(&mut rng, n_load, n_gen, &params)
    };
    let base = random_loading(&mut rng, &tree);
    let stiff = StiffnessSet::compute(&base).expect("generated network is valid");
    let net = scale_to_stress(&base, &stiff, CertificateKind::Auto, fraction);
    (net, stiff)
}
