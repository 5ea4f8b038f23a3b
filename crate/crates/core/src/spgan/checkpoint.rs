use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{binarize_batch, nets, slices_tensor, SpganConfig, SpganModel};
use crate::io::write_atomic;
use crate::tensor::{Graph, NetworkEntry, ParameterSet};
use crate::volume::{Slice2D, VoxelVolume};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "SPGAN-CKPT1";
pub const MANIFEST_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub config: SpganConfig,
    pub iteration: u64,
    pub networks: Vec<NetworkEntry>,
}

/// One generated volume with its agreement against the conditioning slice.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthesized {
    pub volume: VoxelVolume,
    pub central_slice: Slice2D,
    /// Fraction of central-slice pixels whose phase differs from the
    /// conditioning slice.
    pub mismatch_fraction: f64,
    /// Euclidean distance between the raw generator central plane and the
    /// conditioning slice, both in the ±1 encoding.
    pub l2_distance: f64,
}

impl SpganModel {
    /// Writes the manifest and every parameter and optimizer payload into
    /// `dir`. The manifest is written last.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let networks = self
            .networks()
            .iter()
            .map(|n| n.save(dir))
            .collect::<Result<Vec<_>>>()?;
        let manifest = CheckpointManifest {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
            iteration: self.iteration,
            networks,
        };
        let mut json = serde_json::to_vec_pretty(&manifest)?;
        json.push(b'\n');
        write_atomic(&dir.join(MANIFEST_FILE), &json)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
        let manifest: CheckpointManifest = serde_json::from_slice(&fs::read(&path)?)?;
        if manifest.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown checkpoint format {:?}",
                manifest.format
            )));
        }
        let entry = |name: &str| {
            manifest
                .networks
                .iter()
                .find(|n| n.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint lacks the {name} network")))
        };
        let model = SpganModel {
            encoder: ParameterSet::load(dir, entry("encoder")?)?,
            generator: ParameterSet::load(dir, entry("generator")?)?,
            discriminator: ParameterSet::load(dir, entry("discriminator")?)?,
            config: manifest.config.clone(),
            iteration: manifest.iteration,
        };
        model.check_shapes()?;
        Ok(model)
    }

    /// Verifies that stored parameter shapes match what the config implies.
    fn check_shapes(&self) -> Result<()> {
        let fresh = SpganModel::new(self.config.clone())?;
        for (have, want) in self.networks().iter().zip(fresh.networks()) {
            let a: Vec<_> = have.params.iter().map(|p| (&p.id, p.shape())).collect();
            let b: Vec<_> = want.params.iter().map(|p| (&p.id, p.shape())).collect();
            if a != b {
                return Err(Error::Checkpoint(format!(
                    "{} parameters do not match the config: {a:?} vs {b:?}",
                    have.name
                )));
            }
        }
        Ok(())
    }

    /// `count` volumes generated from `slice` with fresh noise drawn from
    /// `seed`.
    pub fn synthesize(&self, slice: &Slice2D, count: usize, seed: u64) -> Result<Vec<Synthesized>> {
        let n = self.config.volume_size;
        if slice.dims() != [n, n] {
            return Err(Error::shape(format!(
                "conditioning slice is {:?}, model expects [{n}, {n}]",
                slice.dims()
            )));
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = self.prior().sample(count, &mut rng);
        let s = slices_tensor(&vec![slice.clone(); count])?;
        let h = self.encode(&s)?;
        let raw = self.generate(&noise, &h)?;
        let planes = {
            let mut g = Graph::new();
            let x = g.constant(raw.clone());
            let p = nets::central_plane(&mut g, x)?;
            g.tensor(p)
        };
        let target = slice.to_signed();
        let volumes = binarize_batch(&raw)?;
        volumes
            .into_iter()
            .zip(planes.data().chunks(n * n))
            .map(|(volume, plane)| {
                let central_slice = volume.central_slice();
                let l2_distance = plane
                    .iter()
                    .zip(&target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                Ok(Synthesized {
                    mismatch_fraction: central_slice.mismatch_fraction(slice)?,
                    central_slice,
                    volume,
                    l2_distance,
                })
            })
            .collect()
    }
}
