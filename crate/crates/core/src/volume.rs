//! Binary voxel volumes, the PGV1 file format and subvolume sampling.
//!
//! A volume stores one phase byte per voxel in x-fastest order, so the voxel
//! at `(x, y, z)` lives at `x + nx * (y + ny * z)`. Byte 0 is void (pore) and
//! byte 1 is solid.
//!
//! On disk a PGV1 volume is a pair of files: `<name>.json` holding a
//! [`VolumeHeader`] and `<name>.raw` holding exactly `nx * ny * nz` bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::write_atomic;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const FORMAT_TAG: &str = "PGV1";
pub const ORDER_TAG: &str = "x-fastest";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Phase {
    Void = 0,
    Solid = 1,
}

impl Phase {
    #[inline]
    pub fn byte(self) -> u8 {
        self as u8
    }

    pub fn complement(self) -> Phase {
        match self {
            Phase::Void => Phase::Solid,
            Phase::Solid => Phase::Void,
        }
    }

    /// Real-valued network encoding: solid maps to +1, void to -1.
    #[inline]
    pub fn signed(self) -> f64 {
        match self {
            Phase::Void => -1.0,
            Phase::Solid => 1.0,
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "void" | "pore" | "0" => Ok(Phase::Void),
            "solid" | "1" => Ok(Phase::Solid),
            other => Err(Error::invalid(format!("unknown phase '{other}'"))),
        }
    }
}

fn check_labels(data: &[u8]) -> Result<()> {
    match data.iter().position(|&b| b > 1) {
        Some(offset) => Err(Error::IllegalPhase {
            value: data[offset],
            offset,
        }),
        None => Ok(()),
    }
}

/// A 3D binary phase grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelVolume {
    dims: [usize; 3],
    voxel_size_um: f64,
    data: Vec<u8>,
}

impl VoxelVolume {
    pub fn filled(dims: [usize; 3], phase: Phase) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(Self {
            dims,
            voxel_size_um: 1.0,
            data: vec![phase.byte(); dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn from_bytes(dims: [usize; 3], data: Vec<u8>) -> Result<Self> {
        Self::check_dims(dims)?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        check_labels(&data)?;
        Ok(Self {
            dims,
            voxel_size_um: 1.0,
            data,
        })
    }

    /// Builds a volume by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(
        dims: [usize; 3],
        mut f: impl FnMut(usize, usize, usize) -> Phase,
    ) -> Result<Self> {
        Self::check_dims(dims)?;
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z).byte());
                }
            }
        }
        Ok(Self {
            dims,
            voxel_size_um: 1.0,
            data,
        })
    }

    fn check_dims(dims: [usize; 3]) -> Result<()> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        Ok(())
    }

    pub fn with_voxel_size(mut self, voxel_size_um: f64) -> Self {
        self.voxel_size_um = voxel_size_um;
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size_um(&self) -> f64 {
        self.voxel_size_um
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> Phase {
        if self.data[self.index(x, y, z)] == 0 {
            Phase::Void
        } else {
            Phase::Solid
        }
    }

    #[inline]
    pub fn is(&self, x: usize, y: usize, z: usize, phase: Phase) -> bool {
        self.data[self.index(x, y, z)] == phase.byte()
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, phase: Phase) {
        let i = self.index(x, y, z);
        self.data[i] = phase.byte();
    }

    pub fn count(&self, phase: Phase) -> usize {
        let b = phase.byte();
        self.data.iter().filter(|&&v| v == b).count()
    }

    pub fn is_cube(&self) -> bool {
        self.dims[0] == self.dims[1] && self.dims[1] == self.dims[2]
    }

    /// Voxels in the ±1 network encoding, x-fastest. This is also the
    /// `[D, H, W]` row-major layout with `W = x` and `D = z`.
    pub fn to_signed(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&b| if b == 0 { -1.0 } else { 1.0 })
            .collect()
    }

    pub fn header(&self) -> VolumeHeader {
        VolumeHeader::new(self.dims, self.voxel_size_um)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let (json, raw) = pgv1_paths(path.as_ref());
        let header = serde_json::to_string_pretty(&self.header())?;
        write_atomic(&raw, &self.data)?;
        write_atomic(&json, header.as_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (json, raw) = pgv1_paths(path.as_ref());
        for p in [&json, &raw] {
            if !p.is_file() {
                return Err(Error::MissingFile(p.clone()));
            }
        }
        let text = fs::read_to_string(&json)?;
        let header: VolumeHeader =
            serde_json::from_str(&text).map_err(|e| Error::MalformedHeader {
                path: json.clone(),
                reason: e.to_string(),
            })?;
        header.validate().map_err(|reason| Error::MalformedHeader {
            path: json.clone(),
            reason,
        })?;
        let data = fs::read(&raw)?;
        let expected = header.dims.iter().product();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        check_labels(&data)?;
        Ok(Self {
            dims: header.dims,
            voxel_size_um: header.voxel_size_um,
            data,
        })
    }

    /// The cube `[origin, origin + size)` on every axis.
    pub fn extract_subvolume(&self, origin: [usize; 3], size: usize) -> Result<VoxelVolume> {
        if size == 0 {
            return Err(Error::invalid("subvolume size must be positive"));
        }
        for axis in 0..3 {
            if origin[axis] + size > self.dims[axis] {
                return Err(Error::OutOfBounds(format!(
                    "origin {origin:?} + size {size} exceeds dims {:?}",
                    self.dims
                )));
            }
        }
        let mut data = Vec::with_capacity(size * size * size);
        for z in origin[2]..origin[2] + size {
            for y in origin[1]..origin[1] + size {
                let start = self.index(origin[0], y, z);
                data.extend_from_slice(&self.data[start..start + size]);
            }
        }
        Ok(VoxelVolume {
            dims: [size; 3],
            voxel_size_um: self.voxel_size_um,
            data,
        })
    }

    /// Draws `count` subvolume origins uniformly over every admissible position.
    pub fn sample_origins<R: Rng + ?Sized>(
        &self,
        size: usize,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<[usize; 3]>> {
        if size == 0 || self.dims.iter().any(|&d| size > d) {
            return Err(Error::OutOfBounds(format!(
                "subvolume size {size} exceeds dims {:?}",
                self.dims
            )));
        }
        if count == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        Ok((0..count)
            .map(|_| {
                [
                    rng.random_range(0..=self.dims[0] - size),
                    rng.random_range(0..=self.dims[1] - size),
                    rng.random_range(0..=self.dims[2] - size),
                ]
            })
            .collect())
    }

    pub fn sample_subvolumes_with<R: Rng + ?Sized>(
        &self,
        size: usize,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<VoxelVolume>> {
        self.sample_origins(size, count, rng)?
            .into_iter()
            .map(|o| self.extract_subvolume(o, size))
            .collect()
    }

    pub fn sample_random_subvolumes(
        &self,
        size: usize,
        count: usize,
        seed: u64,
    ) -> Result<Vec<VoxelVolume>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_subvolumes_with(size, count, &mut rng)
    }

    /// The mask **M**: the `z = nz / 2` plane.
    pub fn central_slice(&self) -> Slice2D {
        self.plane_z(self.dims[2] / 2)
    }

    pub fn plane_z(&self, z: usize) -> Slice2D {
        let plane = self.dims[0] * self.dims[1];
        let start = z * plane;
        Slice2D {
            dims: [self.dims[0], self.dims[1]],
            data: self.data[start..start + plane].to_vec(),
        }
    }

    /// Thresholds a 3D `[D, H, W]` tensor: solid iff value > `threshold`.
    pub fn binarize(raw: &Tensor, threshold: f64) -> Result<VoxelVolume> {
        let shape = raw.shape();
        if shape.len() != 3 {
            return Err(Error::shape(format!(
                "binarize expects a 3D tensor, got shape {shape:?}"
            )));
        }
        let data = raw
            .data()
            .iter()
            .map(|&v| u8::from(v > threshold))
            .collect();
        Ok(VoxelVolume {
            dims: [shape[2], shape[1], shape[0]],
            voxel_size_um: 1.0,
            data,
        })
    }
}

/// `foo`, `foo.json` and `foo.raw` all name the same PGV1 pair.
pub fn pgv1_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (json.into(), raw.into())
}

/// Lists the PGV1 volumes (by header path) in a directory, sorted by name.
pub fn list_pgv1(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        if pgv1_paths(&path).1.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// JSON sidecar of a PGV1 volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub format: String,
    pub dims: [usize; 3],
    pub voxel_size_um: f64,
    pub order: String,
    pub phases: BTreeMap<String, String>,
}

impl VolumeHeader {
    pub fn new(dims: [usize; 3], voxel_size_um: f64) -> Self {
        let phases = [("0", "void"), ("1", "solid")]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self {
            format: FORMAT_TAG.to_string(),
            dims,
            voxel_size_um,
            order: ORDER_TAG.to_string(),
            phases,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.format != FORMAT_TAG {
            return Err(format!(
                "format is '{}', expected '{FORMAT_TAG}'",
                self.format
            ));
        }
        if self.order != ORDER_TAG {
            return Err(format!("order is '{}', expected '{ORDER_TAG}'", self.order));
        }
        if self.dims.contains(&0) {
            return Err(format!("dims must be positive, got {:?}", self.dims));
        }
        if self.phases.get("0").map(String::as_str) != Some("void")
            || self.phases.get("1").map(String::as_str) != Some("solid")
        {
            return Err("phases must map 0 to void and 1 to solid".into());
        }
        Ok(())
    }
}

/// A 2D binary phase image, x-fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slice2D {
    dims: [usize; 2],
    data: Vec<u8>,
}

impl Slice2D {
    pub fn from_bytes(dims: [usize; 2], data: Vec<u8>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if data.len() != dims[0] * dims[1] {
            return Err(Error::LengthMismatch {
                expected: dims[0] * dims[1],
                actual: data.len(),
            });
        }
        check_labels(&data)?;
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Phase {
        if self.data[x + self.dims[0] * y] == 0 {
            Phase::Void
        } else {
            Phase::Solid
        }
    }

    pub fn porosity(&self) -> f64 {
        self.data.iter().filter(|&&b| b == 0).count() as f64 / self.data.len() as f64
    }

    pub fn to_signed(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|&b| if b == 0 { -1.0 } else { 1.0 })
            .collect()
    }

    /// Fraction of pixels whose phase differs from `other`.
    pub fn mismatch_fraction(&self, other: &Slice2D) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "slice dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let diff = self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a != b)
            .count();
        Ok(diff as f64 / self.data.len() as f64)
    }

    /// A single-plane volume, the on-disk form of a slice.
    pub fn to_volume(&self) -> VoxelVolume {
        VoxelVolume {
            dims: [self.dims[0], self.dims[1], 1],
            voxel_size_um: 1.0,
            data: self.data.clone(),
        }
    }
}
