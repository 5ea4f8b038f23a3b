//! Fixtures shared by the benchmarks.

use spgan_core::{gaussian_field_volume, FieldSpec, SpganConfig, VoxelVolume};

/// A correlated 30% porosity cube.
pub fn porous_cube(size: usize, seed: u64) -> VoxelVolume {
    gaussian_field_volume(&FieldSpec {
        size,
        correlation_length: 2.0,
        target_porosity: 0.3,
        seed,
    })
    .expect("valid field spec")
}

/// The desk-scale model used by the training smoke run.
pub fn desk_config() -> SpganConfig {
    SpganConfig {
        volume_size: 16,
        z_dim: 32,
        h_dim: None,
        base_channels: 4,
        lr: 1e-4,
        batch_size: 4,
        iterations: 300,
        seed: 7,
    }
}
