//! Porosity, cubical-complex cell counts, Minkowski functionals and
//! representative elementary volume (REV) analysis.
//!
//! The selected phase is treated as a union of closed unit cubes. Every cell
//! of that complex is keyed by the doubled coordinates of its midpoint: a
//! vertex has three even coordinates, an edge one odd, a face two odd and a
//! voxel three odd. Counting distinct keys per parity class gives
//! `n0..n3` exactly, and the functionals follow from them:
//!
//! ```text
//! V   = n3
//! S   = -6 n3 + 2 n2
//! B   = 3 n3 / 2 - n2 + n1 / 2
//! chi = -n3 + n2 - n1 + n0
//! ```
//!
//! The domain boundary is open: faces on it count as exposed.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::stats::quantile_sorted;
use crate::volume::{Phase, VoxelVolume};
use crate::{Error, Result};

/// Fraction of void voxels.
pub fn porosity(vol: &VoxelVolume) -> f64 {
    vol.count(Phase::Void) as f64 / vol.len() as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub n0: u64,
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
}

/// Counts the distinct vertices, edges, faces and voxels of the union of the
/// unit cubes at `phase` voxels.
pub fn count_cells(vol: &VoxelVolume, phase: Phase) -> CellCounts {
    let [nx, ny, nz] = vol.dims();
    let (gx, gy) = (2 * nx + 1, 2 * ny + 1);
    let gz = 2 * nz + 1;
    let mut marks = vec![false; gx * gy * gz];
    let target = phase.byte();
    let bytes = vol.as_bytes();
    let mut n3 = 0u64;
    for z in 0..nz {
        for y in 0..ny {
            let row = nx * (y + ny * z);
            for x in 0..nx {
                if bytes[row + x] != target {
                    continue;
                }
                n3 += 1;
                // The voxel centre is at (2x+1, 2y+1, 2z+1); its closure spans
                // the 3x3x3 block of doubled coordinates starting at (2x, 2y, 2z).
                for dz in 0..3 {
                    for dy in 0..3 {
                        let base = 2 * x + gx * (2 * y + dy + gy * (2 * z + dz));
                        marks[base..base + 3].iter_mut().for_each(|m| *m = true);
                    }
                }
            }
        }
    }
    let mut by_class = [0u64; 4];
    for z in 0..gz {
        for y in 0..gy {
            let base = gx * (y + gy * z);
            let odd_yz = (y & 1) + (z & 1);
            for x in 0..gx {
                if marks[base + x] {
                    by_class[odd_yz + (x & 1)] += 1;
                }
            }
        }
    }
    debug_assert_eq!(by_class[3], n3);
    CellCounts {
        n0: by_class[0],
        n1: by_class[1],
        n2: by_class[2],
        n3,
    }
}

/// The four Minkowski functionals in voxel units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiReport {
    /// Volume, in voxels.
    pub volume: i64,
    /// Surface area, in unit faces.
    pub surface: i64,
    /// Mean breadth; a multiple of one half.
    pub breadth: f64,
    /// Euler-Poincaré characteristic.
    pub euler: i64,
}

pub fn minkowski(c: CellCounts) -> MinkowskiReport {
    let (n0, n1, n2, n3) = (c.n0 as i64, c.n1 as i64, c.n2 as i64, c.n3 as i64);
    MinkowskiReport {
        volume: n3,
        surface: -6 * n3 + 2 * n2,
        breadth: 1.5 * n3 as f64 - n2 as f64 + 0.5 * n1 as f64,
        euler: -n3 + n2 - n1 + n0,
    }
}

/// Porosity plus the Minkowski functionals of one phase of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphologyReport {
    pub phase: Phase,
    pub porosity: f64,
    pub counts: CellCounts,
    #[serde(flatten)]
    pub functionals: MinkowskiReport,
}

impl MorphologyReport {
    pub fn analyze(vol: &VoxelVolume, phase: Phase) -> Self {
        let counts = count_cells(vol, phase);
        Self {
            phase,
            porosity: porosity(vol),
            counts,
            functionals: minkowski(counts),
        }
    }

    pub const CSV_HEADER: &'static str = "phase,porosity,n0,n1,n2,n3,volume,surface,breadth,euler";

    pub fn csv_row(&self) -> String {
        let phase = match self.phase {
            Phase::Void => "void",
            Phase::Solid => "solid",
        };
        let f = &self.functionals;
        format!(
            "{phase},{},{},{},{},{},{},{},{},{}",
            self.porosity,
            self.counts.n0,
            self.counts.n1,
            self.counts.n2,
            self.counts.n3,
            f.volume,
            f.surface,
            f.breadth,
            f.euler
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevParams {
    pub start_size: usize,
    pub step: usize,
    pub min_size: usize,
    pub samples_per_size: usize,
    pub seed: u64,
}

impl RevParams {
    /// Ladder `start, start - step, ...` down to `min_size`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut s = self.start_size;
        while s >= self.min_size {
            out.push(s);
            if s < self.step + self.min_size {
                break;
            }
            s -= self.step;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevEntry {
    pub size: usize,
    pub porosities: Vec<f64>,
}

impl RevEntry {
    /// Interquartile range over median; zero when every sample agrees.
    pub fn spread(&self) -> f64 {
        let mut s = self.porosities.clone();
        s.sort_by(f64::total_cmp);
        let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
        let median = quantile_sorted(&s, 0.5);
        if iqr == 0.0 {
            0.0
        } else if median == 0.0 {
            f64::INFINITY
        } else {
            iqr / median
        }
    }
}

/// Porosity samples per subvolume size, largest size first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevCurve {
    pub entries: Vec<RevEntry>,
}

impl RevCurve {
    pub fn sizes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.size).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,sample,porosity\n");
        for e in &self.entries {
            for (i, p) in e.porosities.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", e.size, i, p);
            }
        }
        out
    }
}

/// Samples porosity over a ladder of subvolume sizes. Each size draws from
/// its own RNG stream, so the curve does not depend on the ladder length.
pub fn rev_curve(vol: &VoxelVolume, params: &RevParams) -> Result<RevCurve> {
    if params.min_size < 2 {
        return Err(Error::invalid("min_size must be at least 2"));
    }
    if params.step == 0 {
        return Err(Error::invalid("step must be at least 1"));
    }
    if params.samples_per_size == 0 {
        return Err(Error::invalid("samples_per_size must be at least 1"));
    }
    let smallest_dim = *vol.dims().iter().min().expect("three dims");
    if params.start_size > smallest_dim {
        return Err(Error::OutOfBounds(format!(
            "start size {} exceeds volume dims {:?}",
            params.start_size,
            vol.dims()
        )));
    }
    let entries = params
        .sizes()
        .into_iter()
        .map(|size| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(size as u64);
            let porosities = vol
                .sample_subvolumes_with(size, params.samples_per_size, &mut rng)?
                .iter()
                .map(porosity)
                .collect();
            Ok(RevEntry { size, porosities })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RevCurve { entries })
}

/// Smallest size whose porosity spread is within `tolerance`, provided every
/// larger size in the curve is as well.
pub fn determine_rev(curve: &RevCurve, tolerance: f64) -> Result<usize> {
    if curve.entries.is_empty() {
        return Err(Error::invalid("empty REV curve"));
    }
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut entries: Vec<&RevEntry> = curve.entries.iter().collect();
    entries.sort_by(|a, b| b.size.cmp(&a.size));
    let mut rev = None;
    for e in entries {
        if e.spread() <= tolerance {
            rev = Some(e.size);
        } else {
            break;
        }
    }
    rev.ok_or(Error::RevNotReached { tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid_at(dims: [usize; 3], cells: &[[usize; 3]]) -> VoxelVolume {
        let mut v = VoxelVolume::filled(dims, Phase::Void).unwrap();
        for c in cells {
            v.set(c[0], c[1], c[2], Phase::Solid);
        }
        v
    }

    #[test]
    fn porosity_extremes() {
        assert_eq!(
            porosity(&VoxelVolume::filled([3, 3, 3], Phase::Void).unwrap()),
            1.0
        );
        assert_eq!(
            porosity(&VoxelVolume::filled([3, 3, 3], Phase::Solid).unwrap()),
            0.0
        );
        let half = VoxelVolume::from_fn(
            [4, 4, 4],
            |x, _, _| {
                if x < 2 {
                    Phase::Void
                } else {
                    Phase::Solid
                }
            },
        )
        .unwrap();
        assert_eq!(half.count(Phase::Void), 32);
        assert_eq!(porosity(&half), 0.5);
    }

    #[test]
    fn single_voxel() {
        let c = count_cells(&solid_at([3, 3, 3], &[[1, 1, 1]]), Phase::Solid);
        assert_eq!(
            c,
            CellCounts {
                n0: 8,
                n1: 12,
                n2: 6,
                n3: 1
            }
        );
        let m = minkowski(c);
        assert_eq!((m.volume, m.surface, m.breadth, m.euler), (1, 6, 1.5, 1));
    }

    #[test]
    fn domino() {
        let c = count_cells(&solid_at([4, 3, 3], &[[1, 1, 1], [2, 1, 1]]), Phase::Solid);
        assert_eq!(
            c,
            CellCounts {
                n0: 12,
                n1: 20,
                n2: 11,
                n3: 2
            }
        );
        let m = minkowski(c);
        assert_eq!((m.volume, m.surface, m.breadth, m.euler), (2, 10, 2.0, 1));
    }

    #[test]
    fn block_2x2x2() {
        let v = VoxelVolume::filled([2, 2, 2], Phase::Solid).unwrap();
        let c = count_cells(&v, Phase::Solid);
        assert_eq!(
            c,
            CellCounts {
                n0: 27,
                n1: 54,
                n2: 36,
                n3: 8
            }
        );
        let m = minkowski(c);
        assert_eq!((m.volume, m.surface, m.breadth, m.euler), (8, 24, 3.0, 1));
    }

    #[test]
    fn empty_phase_counts_zero() {
        let v = VoxelVolume::filled([3, 3, 3], Phase::Void).unwrap();
        assert_eq!(count_cells(&v, Phase::Solid), CellCounts::default());
    }

    #[test]
    fn rev_ladder() {
        let p = RevParams {
            start_size: 128,
            step: 10,
            min_size: 8,
            samples_per_size: 1,
            seed: 0,
        };
        let sizes = p.sizes();
        assert_eq!(&sizes[..3], &[128, 118, 108]);
        assert_eq!(*sizes.last().unwrap(), 8);
        assert_eq!(sizes.len(), 13);
    }

    #[test]
    fn rev_on_uniform_volume() {
        let v = VoxelVolume::filled([20, 20, 20], Phase::Void).unwrap();
        let p = RevParams {
            start_size: 20,
            step: 5,
            min_size: 4,
            samples_per_size: 6,
            seed: 1,
        };
        let curve = rev_curve(&v, &p).unwrap();
        assert!(curve
            .entries
            .iter()
            .all(|e| e.porosities.len() == 6 && e.porosities.iter().all(|&x| x == 1.0)));
        assert_eq!(determine_rev(&curve, 0.05).unwrap(), 5);
    }

    #[test]
    fn rev_only_largest_size_passes() {
        let curve = RevCurve {
            entries: vec![
                RevEntry {
                    size: 30,
                    porosities: vec![0.3; 5],
                },
                RevEntry {
                    size: 20,
                    porosities: vec![0.1, 0.2, 0.3, 0.4, 0.5],
                },
                RevEntry {
                    size: 10,
                    porosities: vec![0.3; 5],
                },
            ],
        };
        assert_eq!(determine_rev(&curve, 0.05).unwrap(), 30);
        let never = RevCurve {
            entries: vec![RevEntry {
                size: 10,
                porosities: vec![0.1, 0.5, 0.9],
            }],
        };
        assert!(matches!(
            determine_rev(&never, 0.05),
            Err(Error::RevNotReached { .. })
        ));
    }

    #[test]
    fn rev_rejects_oversized_start() {
        let v = VoxelVolume::filled([8, 8, 8], Phase::Void).unwrap();
        let p = RevParams {
            start_size: 9,
            step: 1,
            min_size: 2,
            samples_per_size: 1,
            seed: 0,
        };
        assert!(matches!(rev_curve(&v, &p), Err(Error::OutOfBounds(_))));
    }
}
