//! Two-point correlation (two-point probability) `S2(r)` of one phase.
//!
//! `S2(r)` is the probability that two points a distance `r` apart both lie
//! in the phase. Bins are one voxel wide and centred on integers; bin 0 holds
//! coincident points and is exactly the phase fraction. Pairs with an
//! endpoint outside the volume are discarded (no periodic wrap).
//!
//! Two estimators are provided. [`Estimator::Exhaustive`] enumerates every
//! in-volume pair along the three axes and pools them, so it is exactly
//! countable. [`Estimator::MonteCarlo`] draws a uniform start voxel and a
//! uniform lattice offset from the shell `r - 1/2 <= |d| < r + 1/2`, so pairs
//! in every direction contribute; each bin has its own counter-seeded RNG
//! stream, so results do not depend on evaluation order.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::volume::{Phase, VoxelVolume};
use crate::{Error, Result};

/// Attempts per requested pair before a Monte Carlo bin gives up.
const MAX_ATTEMPT_FACTOR: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    Exhaustive,
    MonteCarlo { n_pairs: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpcCurve {
    pub radii: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub counts: Vec<u64>,
}

impl TpcCurve {
    /// Binomial standard error of each bin, treating pairs as independent.
    pub fn standard_errors(&self) -> Vec<f64> {
        self.probabilities
            .iter()
            .zip(&self.counts)
            .map(|(&p, &n)| {
                if n == 0 {
                    f64::INFINITY
                } else {
                    (p * (1.0 - p) / n as f64).sqrt()
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,probability,pair_count\n");
        for ((r, p), n) in self.radii.iter().zip(&self.probabilities).zip(&self.counts) {
            let _ = writeln!(out, "{r},{p},{n}");
        }
        out
    }
}

pub fn two_point_correlation(
    vol: &VoxelVolume,
    phase: Phase,
    max_r: usize,
    estimator: Estimator,
) -> Result<TpcCurve> {
    if max_r == 0 {
        return Err(Error::invalid("max_r must be at least 1"));
    }
    let [nx, ny, nz] = vol.dims();
    let diagonal = ((nx * nx + ny * ny + nz * nz) as f64).sqrt();
    if max_r as f64 > diagonal {
        return Err(Error::invalid(format!(
            "max_r {max_r} exceeds the volume diagonal {diagonal:.3}"
        )));
    }
    if let Estimator::MonteCarlo { n_pairs: 0, .. } = estimator {
        return Err(Error::invalid("Monte Carlo estimator needs n_pairs >= 1"));
    }
    let mask: Vec<bool> = vol.as_bytes().iter().map(|&b| b == phase.byte()).collect();
    let hits0 = mask.iter().filter(|&&m| m).count() as u64;
    let total = mask.len() as u64;

    let mut radii = vec![0.0];
    let mut probabilities = vec![hits0 as f64 / total as f64];
    let mut counts = vec![total];
    for r in 1..=max_r {
        let (hits, pairs) = match estimator {
            Estimator::Exhaustive => axis_pairs(&mask, vol.dims(), r),
            Estimator::MonteCarlo { n_pairs, seed } => {
                random_pairs(&mask, vol.dims(), r, n_pairs, seed)
            }
        };
        radii.push(r as f64);
        probabilities.push(if pairs == 0 {
            0.0
        } else {
            hits as f64 / pairs as f64
        });
        counts.push(pairs);
    }
    Ok(TpcCurve {
        radii,
        probabilities,
        counts,
    })
}

/// (pairs in phase, pairs examined) at lag `r` pooled over the x, y and z axes.
fn axis_pairs(mask: &[bool], dims: [usize; 3], r: usize) -> (u64, u64) {
    let [nx, ny, nz] = dims;
    let at = |x: usize, y: usize, z: usize| mask[x + nx * (y + ny * z)];
    let (mut hits, mut pairs) = (0u64, 0u64);
    if r < nx {
        for z in 0..nz {
            for y in 0..ny {
                let row = &mask[nx * (y + ny * z)..nx * (y + ny * z + 1)];
                hits += row
                    .iter()
                    .zip(&row[r..])
                    .filter(|(a, b)| **a && **b)
                    .count() as u64;
                pairs += (nx - r) as u64;
            }
        }
    }
    if r < ny {
        for z in 0..nz {
            for y in 0..ny - r {
                for x in 0..nx {
                    hits += u64::from(at(x, y, z) && at(x, y + r, z));
                }
            }
        }
        pairs += ((ny - r) * nx * nz) as u64;
    }
    if r < nz {
        for z in 0..nz - r {
            for y in 0..ny {
                for x in 0..nx {
                    hits += u64::from(at(x, y, z) && at(x, y, z + r));
                }
            }
        }
        pairs += ((nz - r) * nx * ny) as u64;
    }
    (hits, pairs)
}

/// Integer offsets whose length rounds to `r`.
fn shell(r: usize) -> Vec<[isize; 3]> {
    let (lo, hi) = ((r as f64 - 0.5).powi(2), (r as f64 + 0.5).powi(2));
    let m = r as isize + 1;
    let mut out = Vec::new();
    for dz in -m..=m {
        for dy in -m..=m {
            for dx in -m..=m {
                let d2 = (dx * dx + dy * dy + dz * dz) as f64;
                if d2 >= lo && d2 < hi {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn random_pairs(
    mask: &[bool],
    dims: [usize; 3],
    r: usize,
    n_pairs: usize,
    seed: u64,
) -> (u64, u64) {
    let [nx, ny, _] = dims;
    let offsets = shell(r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    let (mut hits, mut pairs) = (0u64, 0u64);
    let max_attempts = n_pairs.saturating_mul(MAX_ATTEMPT_FACTOR);
    let mut attempts = 0;
    while (pairs as usize) < n_pairs && attempts < max_attempts {
        attempts += 1;
        let p: [usize; 3] = std::array::from_fn(|a| rng.random_range(0..dims[a]));
        let d = offsets[rng.random_range(0..offsets.len())];
        let mut q = [0usize; 3];
        let mut inside = true;
        for a in 0..3 {
            let c = p[a] as isize + d[a];
            if c < 0 || c >= dims[a] as isize {
                inside = false;
                break;
            }
            q[a] = c as usize;
        }
        if !inside {
            continue;
        }
        pairs += 1;
        if mask[p[0] + nx * (p[1] + ny * p[2])] && mask[q[0] + nx * (q[1] + ny * q[2])] {
            hits += 1;
        }
    }
    (hits, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::porosity;

    #[test]
    fn all_void_is_one_everywhere() {
        let v = VoxelVolume::filled([8, 8, 8], Phase::Void).unwrap();
        for est in [
            Estimator::Exhaustive,
            Estimator::MonteCarlo {
                n_pairs: 200,
                seed: 1,
            },
        ] {
            let c = two_point_correlation(&v, Phase::Void, 6, est).unwrap();
            assert!(c.probabilities.iter().all(|&p| p == 1.0));
            assert_eq!(c.radii.len(), 7);
        }
    }

    #[test]
    fn exhaustive_counts_by_hand() {
        // 3x1x1 line void-solid-void: lag 1 has pairs (0,1) and (1,2), no
        // void-void pair; lag 2 has the single pair (0,2), both void.
        let v = VoxelVolume::from_bytes([3, 1, 1], vec![0, 1, 0]).unwrap();
        let c = two_point_correlation(&v, Phase::Void, 2, Estimator::Exhaustive).unwrap();
        assert_eq!(c.counts, vec![3, 2, 1]);
        assert_eq!(c.probabilities, vec![2.0 / 3.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_bin_is_porosity() {
        let v = VoxelVolume::from_fn([5, 6, 7], |x, y, z| {
            if (x * 3 + y * 5 + z * 7) % 4 == 0 {
                Phase::Void
            } else {
                Phase::Solid
            }
        })
        .unwrap();
        let c = two_point_correlation(&v, Phase::Void, 3, Estimator::Exhaustive).unwrap();
        assert!((c.probabilities[0] - porosity(&v)).abs() < 1e-12);
        let s = two_point_correlation(&v, Phase::Solid, 3, Estimator::Exhaustive).unwrap();
        assert!((c.probabilities[0] + s.probabilities[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shells_exclude_the_origin() {
        assert_eq!(shell(1).len(), 6 + 12);
        for r in 1..6 {
            assert!(shell(r).iter().all(|d| d != &[0, 0, 0]));
        }
    }

    #[test]
    fn rejects_bad_radius() {
        let v = VoxelVolume::filled([2, 2, 2], Phase::Void).unwrap();
        assert!(two_point_correlation(&v, Phase::Void, 0, Estimator::Exhaustive).is_err());
        assert!(two_point_correlation(&v, Phase::Void, 4, Estimator::Exhaustive).is_err());
        assert!(two_point_correlation(
            &v,
            Phase::Void,
            1,
            Estimator::MonteCarlo {
                n_pairs: 0,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        let v = VoxelVolume::from_fn([9, 9, 9], |x, y, _| {
            if (x + y) % 3 == 0 {
                Phase::Void
            } else {
                Phase::Solid
            }
        })
        .unwrap();
        let est = Estimator::MonteCarlo {
            n_pairs: 500,
            seed: 77,
        };
        let a = two_point_correlation(&v, Phase::Void, 5, est).unwrap();
        let b = two_point_correlation(&v, Phase::Void, 5, est).unwrap();
        assert_eq!(a, b);
        // Bins use independent streams: a shorter curve is a prefix.
        let c = two_point_correlation(&v, Phase::Void, 3, est).unwrap();
        assert_eq!(&a.probabilities[..4], &c.probabilities[..]);
    }
}
