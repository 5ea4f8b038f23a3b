//! Procedural porous volumes used as desk-scale corpora and test fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::volume::{Phase, VoxelVolume};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub size: usize,
    /// Standard deviation of the Gaussian smoothing kernel, in voxels.
    pub correlation_length: f64,
    pub target_porosity: f64,
    pub seed: u64,
}

impl FieldSpec {
    fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::invalid("field size must be positive"));
        }
        if !(self.target_porosity > 0.0 && self.target_porosity < 1.0) {
            return Err(Error::invalid("target porosity must lie in (0, 1)"));
        }
        if !(self.correlation_length >= 0.0) {
            return Err(Error::invalid("correlation length must be nonnegative"));
        }
        Ok(())
    }
}

/// Truncated Gaussian random field: white noise, separably smoothed, then
/// thresholded at its empirical quantile so that exactly
/// `round(target_porosity * size^3)` voxels are void.
pub fn gaussian_field_volume(spec: &FieldSpec) -> Result<VoxelVolume> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut field: Vec<f64> = (0..n * n * n).map(|_| rng.sample(StandardNormal)).collect();
    if spec.correlation_length > 0.0 {
        let kernel = gaussian_kernel(spec.correlation_length);
        for axis in 0..3 {
            field = smooth_axis(&field, n, axis, &kernel);
        }
    }
    let void_count = (spec.target_porosity * field.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..field.len()).collect();
    order.sort_unstable_by(|&a, &b| field[a].total_cmp(&field[b]).then(a.cmp(&b)));
    let mut data = vec![Phase::Solid.byte(); field.len()];
    for &i in &order[..void_count] {
        data[i] = Phase::Void.byte();
    }
    VoxelVolume::from_bytes([n; 3], data)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Convolves a cubic field along one axis with mirror boundaries.
fn smooth_axis(field: &[f64], n: usize, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let stride = [1, n, n * n][axis];
    let reflect = |i: isize| -> usize {
        let m = n as isize;
        let mut i = i;
        // bounce until inside; kernels wider than the field reflect repeatedly
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= m {
                i = 2 * m - i - 1;
            } else {
                return i as usize;
            }
        }
    };
    let mut out = vec![0.0; field.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let pos = (idx / stride) % n;
        let base = idx - pos * stride;
        let mut acc = 0.0;
        for (j, w) in kernel.iter().enumerate() {
            let src = reflect(pos as isize + j as isize - radius);
            acc += w * field[base + src * stride];
        }
        *o = acc;
    }
    out
}

/// Independent voxels, void with probability `p_void`.
pub fn bernoulli_volume(size: usize, p_void: f64, seed: u64) -> Result<VoxelVolume> {
    if !(0.0..=1.0).contains(&p_void) {
        return Err(Error::invalid("p_void must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VoxelVolume::from_fn([size; 3], |_, _, _| {
        if rng.random::<f64>() < p_void {
            Phase::Void
        } else {
            Phase::Solid
        }
    })
}
