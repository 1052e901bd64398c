//! Fixtures for the criterion benchmarks.

use ccbp_core::image::build_image_model;
use ccbp_core::model::{complete_graph, spin_glass_model, CouplingDistribution, SpinGlassInstance};
use ccbp_core::GraphicalModel;

/// Spin glass on `K_n` with standard normal couplings.
pub fn complete_spin_glass(n: usize, seed: u64) -> GraphicalModel {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let inst = SpinGlassInstance::sample_on(
        complete_graph(n).unwrap(),
        CouplingDistribution::Normal { std_dev: 1.0 },
        seed,
        &mut rng,
    );
    spin_glass_model(&inst).unwrap()
}

/// Image model over a deterministic striped `size x size` picture.
pub fn striped_image_model(size: usize) -> GraphicalModel {
    let pixels: Vec<u8> = (0..size * size)
        .map(|k| (((k % size) / 8 * 40 + (k * 7919) % 23) % 256) as u8)
        .collect();
    build_image_model(&pixels, size, size, 3.0, 100.0).unwrap()
}
