//! Fixtures shared by the criterion benches.

use cpes::{generate_synthetic, EmbeddingStore, SyntheticConfig};

/// Desk-scale synthetic store: 5 classes, D = 32, M = 16.
pub fn desk_store(records_per_class: usize) -> EmbeddingStore {
    generate_synthetic(&SyntheticConfig {
        records_per_class,
        ..SyntheticConfig::default()
    })
    .expect("default synthetic config is feasible")
}

/// A store shaped like ViT-Small output at 224px: D = 384, M = 196.
pub fn vit_small_store(records_per_class: usize) -> EmbeddingStore {
    generate_synthetic(&SyntheticConfig {
        class_count: 5,
        records_per_class,
        dim: 384,
        patches: 196,
        signal_patches: 96,
        signal_noise: 0.3,
        distractor_pool_size: 32,
        distractor_noise: 0.3,
        seed: 1,
    })
    .expect("vit-shaped synthetic config is feasible")
}
