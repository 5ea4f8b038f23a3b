use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spgan_core::morphology::RevEntry;
use spgan_core::{
    bernoulli_volume, count_cells, determine_rev, minkowski, rev_curve, MinkowskiReport, Phase,
    RevParams, VoxelVolume,
};

fn solid_where(dims: [usize; 3], f: impl Fn(i64, i64, i64) -> bool) -> VoxelVolume {
    VoxelVolume::from_fn(dims, |x, y, z| {
        if f(x as i64, y as i64, z as i64) {
            Phase::Solid
        } else {
            Phase::Void
        }
    })
    .unwrap()
}

fn functionals(v: &VoxelVolume) -> MinkowskiReport {
    minkowski(count_cells(v, Phase::Solid))
}

fn random_volume(n: usize, p: f64, rng: &mut impl Rng) -> VoxelVolume {
    VoxelVolume::from_fn([n; 3], |_, _, _| {
        if rng.random::<f64>() < p {
            Phase::Solid
        } else {
            Phase::Void
        }
    })
    .unwrap()
}

/// Faces of solid voxels whose neighbour is void or outside the volume.
fn exposed_faces(v: &VoxelVolume) -> i64 {
    let [nx, ny, nz] = v.dims();
    let mut faces = 0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !v.is(x, y, z, Phase::Solid) {
                    continue;
                }
                for (dx, dy, dz) in [
                    (1, 0, 0),
                    (-1, 0, 0),
                    (0, 1, 0),
                    (0, -1, 0),
                    (0, 0, 1),
                    (0, 0, -1),
                ] {
                    let (a, b, c) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    let inside = a >= 0
                        && b >= 0
                        && c >= 0
                        && a < nx as i64
                        && b < ny as i64
                        && c < nz as i64;
                    if !inside || !v.is(a as usize, b as usize, c as usize, Phase::Solid) {
                        faces += 1;
                    }
                }
            }
        }
    }
    faces
}

#[test]
fn surface_equals_exposed_face_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..100 {
        let p = 0.1 + 0.8 * (i as f64 / 99.0);
        let v = random_volume(16, p, &mut rng);
        let f = functionals(&v);
        assert_eq!(f.surface, exposed_faces(&v), "volume {i}");
        assert_eq!(f.volume as usize, v.count(Phase::Solid));
    }
}

#[test]
fn euler_of_filled_cube() {
    let v = solid_where([12; 3], |x, y, z| {
        (2..10).contains(&x) && (2..10).contains(&y) && (2..10).contains(&z)
    });
    let f = functionals(&v);
    assert_eq!((f.volume, f.surface, f.euler), (512, 384, 1));
    assert_eq!(f.breadth, 12.0);
    // Touching the domain boundary changes nothing.
    let full = VoxelVolume::filled([8; 3], Phase::Solid).unwrap();
    assert_eq!(functionals(&full), f);
}

#[test]
fn euler_of_ball() {
    let v = solid_where([17; 3], |x, y, z| {
        (x - 8).pow(2) + (y - 8).pow(2) + (z - 8).pow(2) <= 36
    });
    assert_eq!(functionals(&v).euler, 1);
}

#[test]
fn euler_of_square_ring() {
    let v = solid_where([9, 9, 3], |x, y, z| {
        z == 1
            && (2..=6).contains(&x)
            && (2..=6).contains(&y)
            && (x == 2 || x == 6 || y == 2 || y == 6)
    });
    assert_eq!(functionals(&v).euler, 0);
}

#[test]
fn euler_of_hollow_shell() {
    let inside = |t: i64, lo: i64, hi: i64| (lo..=hi).contains(&t);
    let v = solid_where([11; 3], |x, y, z| {
        inside(x, 2, 8)
            && inside(y, 2, 8)
            && inside(z, 2, 8)
            && !(inside(x, 3, 7) && inside(y, 3, 7) && inside(z, 3, 7))
    });
    assert_eq!(functionals(&v).euler, 2);
}

#[test]
fn euler_of_two_components_and_a_torus() {
    let v = solid_where([10, 4, 4], |x, y, z| y == 1 && z == 1 && (x == 1 || x == 5));
    assert_eq!(functionals(&v).euler, 2);
    // A solid slab with a tunnel through it.
    let v = solid_where([7, 7, 5], |x, y, z| {
        (1..=5).contains(&x) && (1..=5).contains(&y) && (1..=3).contains(&z) && !(x == 3 && y == 3)
    });
    assert_eq!(functionals(&v).euler, 0);
}

/// The 48 symmetries of the cube as (permutation, reflection flags).
fn symmetries() -> Vec<([usize; 3], [bool; 3])> {
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut out = Vec::new();
    for p in perms {
        for bits in 0..8 {
            out.push((p, [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0]));
        }
    }
    out
}

fn transform(v: &VoxelVolume, perm: [usize; 3], flip: [bool; 3]) -> VoxelVolume {
    let n = v.dims()[0];
    VoxelVolume::from_fn([n; 3], |x, y, z| {
        let out = [x, y, z];
        let mut src = [0; 3];
        for a in 0..3 {
            let c = out[perm[a]];
            src[a] = if flip[a] { n - 1 - c } else { c };
        }
        v.get(src[0], src[1], src[2])
    })
    .unwrap()
}

#[test]
fn functionals_are_invariant_under_cube_symmetries() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v = random_volume(7, 0.45, &mut rng);
    let reference = functionals(&v);
    let syms = symmetries();
    assert_eq!(syms.len(), 48);
    for (p, f) in syms {
        assert_eq!(functionals(&transform(&v, p, f)), reference, "{p:?} {f:?}");
    }
}

fn pad(v: &VoxelVolume, offset: [usize; 3], dims: [usize; 3]) -> VoxelVolume {
    let [nx, ny, nz] = v.dims();
    VoxelVolume::from_fn(dims, |x, y, z| {
        let (a, b, c) = (
            x.wrapping_sub(offset[0]),
            y.wrapping_sub(offset[1]),
            z.wrapping_sub(offset[2]),
        );
        if a < nx && b < ny && c < nz {
            v.get(a, b, c)
        } else {
            Phase::Void
        }
    })
    .unwrap()
}

proptest! {
    #[test]
    fn prop_translation_and_padding_invariance(
        seed in any::<u64>(),
        p in 0.1f64..0.9,
        off in (0usize..3, 0usize..3, 0usize..3),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_volume(5, p, &mut rng);
        let padded = pad(&v, [off.0, off.1, off.2], [9, 9, 9]);
        prop_assert_eq!(functionals(&padded), functionals(&v));
    }

    #[test]
    fn prop_euler_is_additive_over_disjoint_separated_parts(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_volume(4, 0.5, &mut rng);
        let b = random_volume(4, 0.5, &mut rng);
        // a at the origin, b two voxels away so the parts never touch.
        let joined = VoxelVolume::from_fn([10, 4, 4], |x, y, z| match x {
            0..=3 => a.get(x, y, z),
            6..=9 => b.get(x - 6, y, z),
            _ => Phase::Void,
        })
        .unwrap();
        let (fa, fb, fj) = (functionals(&a), functionals(&b), functionals(&joined));
        prop_assert_eq!(fj.euler, fa.euler + fb.euler);
        prop_assert_eq!(fj.volume, fa.volume + fb.volume);
        prop_assert_eq!(fj.surface, fa.surface + fb.surface);
        prop_assert_eq!(fj.breadth, fa.breadth + fb.breadth);
    }
}

#[test]
fn rev_of_bernoulli_field_is_small() {
    let v = bernoulli_volume(128, 0.3, 17).unwrap();
    let params = RevParams {
        start_size: 128,
        step: 10,
        min_size: 2,
        samples_per_size: 20,
        seed: 3,
    };
    let curve = rev_curve(&v, &params).unwrap();
    assert_eq!(curve.sizes()[..3], [128, 118, 108]);
    assert_eq!(*curve.sizes().last().unwrap(), 8);
    let rev = determine_rev(&curve, 0.05).unwrap();
    assert!(rev <= 40, "REV {rev}");
}

#[test]
fn rev_of_uniform_volume_is_the_smallest_size() {
    let v = VoxelVolume::filled([64; 3], Phase::Void).unwrap();
    let params = RevParams {
        start_size: 64,
        step: 10,
        min_size: 2,
        samples_per_size: 5,
        seed: 0,
    };
    let curve = rev_curve(&v, &params).unwrap();
    assert_eq!(determine_rev(&curve, 0.05).unwrap(), 4);
}

#[test]
fn rev_not_reached() {
    let curve = spgan_core::RevCurve {
        entries: vec![RevEntry {
            size: 10,
            porosities: vec![0.1, 0.5, 0.9],
        }],
    };
    assert!(matches!(
        determine_rev(&curve, 0.05),
        Err(spgan_core::Error::RevNotReached { .. })
    ));
}
