use proptest::prelude::*;
use spgan_core::{
    bernoulli_volume, gaussian_field_volume, porosity, two_point_correlation, Estimator, FieldSpec,
    Phase, VoxelVolume,
};

const MC: Estimator = Estimator::MonteCarlo {
    n_pairs: 20_000,
    seed: 99,
};

#[test]
fn bernoulli_field_matches_independence() {
    let v = bernoulli_volume(64, 0.3, 12).unwrap();
    let mc = two_point_correlation(&v, Phase::Void, 8, MC).unwrap();
    let ex = two_point_correlation(&v, Phase::Void, 8, Estimator::Exhaustive).unwrap();
    let (se_mc, se_ex) = (mc.standard_errors(), ex.standard_errors());
    for r in 1..=8 {
        let expected = 0.09;
        assert!(
            (mc.probabilities[r] - expected).abs() < 3.0 * se_mc[r],
            "r={r}: MC {} vs {expected} (se {})",
            mc.probabilities[r],
            se_mc[r]
        );
        let sigma = (se_mc[r].powi(2) + se_ex[r].powi(2)).sqrt();
        assert!(
            (mc.probabilities[r] - ex.probabilities[r]).abs() < 3.0 * sigma,
            "r={r}: MC {} vs exhaustive {}",
            mc.probabilities[r],
            ex.probabilities[r]
        );
    }
    assert_eq!(mc.probabilities[0], porosity(&v));
}

#[test]
fn smoothing_creates_positive_correlation() {
    let spec = FieldSpec {
        size: 32,
        correlation_length: 0.0,
        target_porosity: 0.3,
        seed: 4,
    };
    let rough = gaussian_field_volume(&spec).unwrap();
    let smooth = gaussian_field_volume(&FieldSpec {
        correlation_length: 4.0,
        ..spec
    })
    .unwrap();
    let cr = two_point_correlation(&rough, Phase::Void, 2, MC).unwrap();
    let cs = two_point_correlation(&smooth, Phase::Void, 2, MC).unwrap();
    let p2 = porosity(&rough).powi(2);
    assert!(cs.probabilities[2] > porosity(&smooth).powi(2) + 3.0 * cs.standard_errors()[2]);
    assert!((cr.probabilities[2] - p2).abs() < 3.0 * cr.standard_errors()[2]);
}

#[test]
fn csv_has_one_row_per_radius() {
    let v = bernoulli_volume(10, 0.5, 0).unwrap();
    let c = two_point_correlation(&v, Phase::Void, 4, Estimator::Exhaustive).unwrap();
    let csv = c.to_csv();
    assert_eq!(csv.lines().next(), Some("r,probability,pair_count"));
    assert_eq!(csv.lines().count(), 6);
}

proptest! {
    #[test]
    fn prop_zero_bin_is_porosity(
        dims in (1usize..9, 1usize..9, 1usize..9),
        bytes in proptest::collection::vec(0u8..2, 512),
        seed in any::<u64>(),
    ) {
        let n = dims.0 * dims.1 * dims.2;
        let v = VoxelVolume::from_bytes([dims.0, dims.1, dims.2], bytes[..n].to_vec()).unwrap();
        for est in [Estimator::Exhaustive, Estimator::MonteCarlo { n_pairs: 10, seed }] {
            let c = two_point_correlation(&v, Phase::Void, 1, est).unwrap();
            prop_assert!((c.probabilities[0] - porosity(&v)).abs() < 1e-12);
            prop_assert!(c.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
