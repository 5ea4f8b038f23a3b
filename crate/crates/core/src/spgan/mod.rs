//! Slice-conditioned 3D GAN: an encoder `E` mapping a 2D slice to a latent
//! code `h`, a generator `G(z, h)` producing a volume, and a discriminator
//! `D` scoring volumes as real or generated.
//!
//! All three are DCGAN-style stacks of kernel-4, stride-2, padding-1
//! convolutions. Volumes enter the networks in the ±1 encoding (solid +1,
//! void -1) and generator outputs are binarized at 0.

mod checkpoint;
mod nets;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::tensor::{AdamConfig, ParameterSet, Tensor};
use crate::volume::{Slice2D, VoxelVolume};
use crate::{Error, Result};

pub use checkpoint::{CheckpointManifest, Synthesized, CHECKPOINT_FORMAT, MANIFEST_FILE};
pub use train::{
    Batch, GanLosses, LossGradients, LossKind, TrainLog, TrainRecord, Update, UpdateOutcome,
};

/// Floor applied inside every logarithm of the adversarial losses.
pub const LOG_FLOOR: f64 = 1e-12;

/// Standard deviation of the initial weights.
pub const INIT_STD: f64 = 0.02;

/// RNG stream reserved for parameter initialization; iteration `t` uses
/// stream `t + 1`.
const INIT_STREAM: u64 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpganConfig {
    pub volume_size: usize,
    pub z_dim: usize,
    /// Latent slice code width; `None` means "same as `z_dim`".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_dim: Option<usize>,
    pub base_channels: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub seed: u64,
}

impl Default for SpganConfig {
    fn default() -> Self {
        Self {
            volume_size: 32,
            z_dim: 64,
            h_dim: None,
            base_channels: 8,
            lr: 1e-4,
            batch_size: 4,
            iterations: 1000,
            seed: 0,
        }
    }
}

impl SpganConfig {
    pub fn h_dim(&self) -> usize {
        self.h_dim.unwrap_or(self.z_dim)
    }

    /// Number of stride-2 stages between the 4-voxel bottleneck and the
    /// full volume.
    pub fn stages(&self) -> usize {
        (self.volume_size / 4).trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.volume_size < 8 || !self.volume_size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "volume_size must be a power of two >= 8, got {}",
                self.volume_size
            )));
        }
        if self.z_dim == 0 || self.h_dim() == 0 {
            return Err(Error::invalid("z_dim and h_dim must be at least 1"));
        }
        if self.base_channels == 0 {
            return Err(Error::invalid("base_channels must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Standard normal prior over the noise vector `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoisePrior {
    pub dim: usize,
}

impl NoisePrior {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// `[n, dim]` draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let data = (0..n * self.dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Tensor::new(vec![n, self.dim], data).expect("shape matches data")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpganModel {
    pub config: SpganConfig,
    pub encoder: ParameterSet,
    pub generator: ParameterSet,
    pub discriminator: ParameterSet,
    /// Completed training iterations.
    pub iteration: u64,
}

impl SpganModel {
    /// Fresh weights drawn from `N(0, 0.02²)`, zero biases.
    pub fn new(config: SpganConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(INIT_STREAM);
        let adam = AdamConfig::with_lr(config.lr);
        let encoder = ParameterSet::new("encoder", nets::encoder_params(&config, &mut rng), adam);
        let generator =
            ParameterSet::new("generator", nets::generator_params(&config, &mut rng), adam);
        let discriminator = ParameterSet::new(
            "discriminator",
            nets::discriminator_params(&config, &mut rng),
            adam,
        );
        Ok(Self {
            config,
            encoder,
            generator,
            discriminator,
            iteration: 0,
        })
    }

    /// Overrides the optimizer step size of all three networks without
    /// validation (zero is allowed, e.g. for no-op checks).
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.lr = lr;
        for set in self.networks_mut() {
            set.adam.config.lr = lr;
        }
    }

    pub fn prior(&self) -> NoisePrior {
        NoisePrior::new(self.config.z_dim)
    }

    pub fn networks(&self) -> [&ParameterSet; 3] {
        [&self.encoder, &self.generator, &self.discriminator]
    }

    pub fn networks_mut(&mut self) -> [&mut ParameterSet; 3] {
        [
            &mut self.encoder,
            &mut self.generator,
            &mut self.discriminator,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.networks().iter().map(|n| n.num_values()).sum()
    }

    /// `[N, 1, S, S]` slices to `[N, h_dim]` codes.
    pub fn encode(&self, slices: &Tensor) -> Result<Tensor> {
        nets::eval(self, |g, b| {
            let s = g.constant(slices.clone());
            nets::encoder(g, &self.config, &b.enc, s)
        })
    }

    /// `[N, z_dim]` noise and `[N, h_dim]` codes to `[N, 1, S, S, S]` volumes
    /// in (-1, 1).
    pub fn generate(&self, z: &Tensor, h: &Tensor) -> Result<Tensor> {
        nets::eval(self, |g, b| {
            let z = g.constant(z.clone());
            let h = g.constant(h.clone());
            nets::generator(g, &self.config, &b.gen, z, h)
        })
    }

    /// `[N, 1, S, S, S]` volumes to `[N]` probabilities of being real.
    pub fn discriminate(&self, x: &Tensor) -> Result<Tensor> {
        nets::eval(self, |g, b| {
            let x = g.constant(x.clone());
            nets::discriminator(g, &self.config, &b.dis, x)
        })
    }
}

/// `[N, 1, S, S]` tensor of slices in the ±1 encoding.
pub fn slices_tensor(slices: &[Slice2D]) -> Result<Tensor> {
    let Some(first) = slices.first() else {
        return Err(Error::invalid("empty slice batch"));
    };
    let [w, h] = first.dims();
    let mut data = Vec::with_capacity(slices.len() * w * h);
    for s in slices {
        if s.dims() != [w, h] {
            return Err(Error::shape(format!(
                "slice dims {:?} differ from {:?}",
                s.dims(),
                [w, h]
            )));
        }
        data.extend(s.to_signed());
    }
    Tensor::new(vec![slices.len(), 1, h, w], data)
}

/// `[N, 1, D, H, W]` tensor of volumes in the ±1 encoding.
pub fn volumes_tensor(volumes: &[VoxelVolume]) -> Result<Tensor> {
    let Some(first) = volumes.first() else {
        return Err(Error::invalid("empty volume batch"));
    };
    let [nx, ny, nz] = first.dims();
    let mut data = Vec::with_capacity(volumes.len() * first.len());
    for v in volumes {
        if v.dims() != first.dims() {
            return Err(Error::shape(format!(
                "volume dims {:?} differ from {:?}",
                v.dims(),
                first.dims()
            )));
        }
        data.extend(v.to_signed());
    }
    Tensor::new(vec![volumes.len(), 1, nz, ny, nx], data)
}

/// Splits an `[N, 1, D, H, W]` generator output into binary volumes.
pub fn binarize_batch(x: &Tensor) -> Result<Vec<VoxelVolume>> {
    let s = x.shape();
    if s.len() != 5 || s[1] != 1 {
        return Err(Error::shape(format!("expected [N, 1, D, H, W], got {s:?}")));
    }
    let per = s[2] * s[3] * s[4];
    x.data()
        .chunks(per)
        .map(|c| VoxelVolume::binarize(&Tensor::new(s[2..].to_vec(), c.to_vec())?, 0.0))
        .collect()
}
