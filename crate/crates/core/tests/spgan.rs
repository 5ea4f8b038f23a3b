use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spgan_core::spgan::{slices_tensor, volumes_tensor, Batch, LossKind, Update};
use spgan_core::tensor::{relative_error, ParameterSet};
use spgan_core::{
    bernoulli_volume, gaussian_field_volume, FieldSpec, Phase, SpganConfig, SpganModel, VoxelVolume,
};

fn tiny() -> SpganConfig {
    SpganConfig {
        volume_size: 8,
        z_dim: 4,
        h_dim: Some(3),
        base_channels: 2,
        lr: 1e-3,
        batch_size: 2,
        iterations: 4,
        seed: 5,
    }
}

fn corpus() -> Vec<VoxelVolume> {
    (0..3)
        .map(|s| bernoulli_volume(12, 0.3, s).unwrap())
        .collect()
}

fn batch(model: &SpganModel, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vols = model.sample_batch(&corpus(), &mut rng).unwrap();
    Batch::new(model, &vols, &mut rng).unwrap()
}

fn values(set: &ParameterSet) -> Vec<Vec<f64>> {
    set.params
        .iter()
        .map(|p| p.tensor.data().to_vec())
        .collect()
}

fn snapshot(m: &SpganModel) -> [Vec<Vec<f64>>; 3] {
    [
        values(&m.encoder),
        values(&m.generator),
        values(&m.discriminator),
    ]
}

#[test]
fn forward_shapes_and_ranges() {
    let m = SpganModel::new(tiny()).unwrap();
    let b = batch(&m, 1);
    let h = m.encode(&b.slices).unwrap();
    assert_eq!(h.shape(), &[2, 3]);
    assert!(m.config.h_dim() < 8 * 8);
    let x = m.generate(&b.noise, &h).unwrap();
    assert_eq!(x.shape(), &[2, 1, 8, 8, 8]);
    assert!(x.data().iter().all(|v| v.abs() < 1.0));
    let d = m.discriminate(&b.volumes).unwrap();
    assert_eq!(d.shape(), &[2]);
    assert!(d.data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn identical_slices_give_identical_codes() {
    let m = SpganModel::new(tiny()).unwrap();
    let v = bernoulli_volume(8, 0.4, 9).unwrap();
    let s = slices_tensor(&[v.central_slice(), v.central_slice()]).unwrap();
    let h = m.encode(&s).unwrap();
    assert_eq!(h.data()[..3], h.data()[3..]);
    let x = volumes_tensor(&[v.clone(), v]).unwrap();
    let d = m.discriminate(&x).unwrap();
    assert_eq!(d.data()[0], d.data()[1]);
}

#[test]
fn shape_errors() {
    let m = SpganModel::new(tiny()).unwrap();
    let wrong = bernoulli_volume(16, 0.4, 9).unwrap();
    let s = slices_tensor(&[wrong.central_slice()]).unwrap();
    assert!(m.encode(&s).is_err());
    assert!(m
        .discriminate(&volumes_tensor(std::slice::from_ref(&wrong)).unwrap())
        .is_err());
    let b = batch(&m, 1);
    let h = m.encode(&b.slices).unwrap();
    let z3 = spgan_core::Tensor::zeros(&[3, 4]);
    assert!(m.generate(&z3, &h).is_err());
    assert!(m.synthesize(&wrong.central_slice(), 1, 0).is_err());
}

#[test]
fn config_validation() {
    let ok = tiny();
    assert!(ok.validate().is_ok());
    for bad in [
        SpganConfig {
            volume_size: 12,
            ..ok.clone()
        },
        SpganConfig {
            volume_size: 4,
            ..ok.clone()
        },
        SpganConfig {
            z_dim: 0,
            ..ok.clone()
        },
        SpganConfig {
            h_dim: Some(0),
            ..ok.clone()
        },
        SpganConfig {
            lr: 0.0,
            ..ok.clone()
        },
        SpganConfig {
            batch_size: 0,
            ..ok.clone()
        },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
    let defaults = SpganConfig::default();
    assert_eq!(defaults.lr, 1e-4);
    assert_eq!(defaults.batch_size, 4);
    assert_eq!(defaults.h_dim(), defaults.z_dim);
    let parsed: SpganConfig = serde_json::from_str(r#"{"volume_size": 16}"#).unwrap();
    assert_eq!(parsed.volume_size, 16);
    assert!(serde_json::from_str::<SpganConfig>(r#"{"volume_sise": 16}"#).is_err());
}

#[test]
fn full_scale_settings_are_expressible() {
    let cfg = SpganConfig {
        volume_size: 128,
        z_dim: 512,
        h_dim: None,
        base_channels: 8,
        lr: 1e-4,
        batch_size: 4,
        iterations: 205_000,
        seed: 0,
    };
    cfg.validate().unwrap();
    assert_eq!(cfg.stages(), 5);
    let m = SpganModel::new(cfg).unwrap();
    let last = m.generator.params.iter().rev().nth(1).unwrap();
    assert_eq!(last.shape()[1], 1);
    // 4 * 2^5 = 128 after five transposed convolutions.
    assert_eq!(m.generator.params.len(), 2 + 2 * 5);
}

#[test]
fn d_half_everywhere_plugs_in() {
    let mut m = SpganModel::new(tiny()).unwrap();
    let n = m.discriminator.params.len();
    for p in &mut m.discriminator.params[n - 2..] {
        p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let b = batch(&m, 2);
    let l = m.gan_losses(&b.volumes, &b.slices, &b.noise).unwrap();
    assert!((l.d_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    assert!((l.g_loss - 0.5f64.ln()).abs() < 1e-12);
    assert_eq!((l.d_real, l.d_fake), (0.5, 0.5));
}

#[test]
fn losses_have_the_right_sign() {
    let m = SpganModel::new(tiny()).unwrap();
    for seed in 0..4 {
        let b = batch(&m, seed);
        assert!(m.ae_loss(&b.slices, &b.noise).unwrap() >= 0.0);
        let l = m.gan_losses(&b.volumes, &b.slices, &b.noise).unwrap();
        assert!(l.d_loss >= 0.0 && l.g_loss <= 0.0);
    }
}

/// Central-difference check of `kind` on a handful of coordinates of every
/// parameter tensor of the selected network. Probed after a few iterations:
/// at initialization the generator output is so close to zero that the
/// discriminator's first-layer pre-activations on fakes sit within `h` of the
/// LeakyReLU kink.
fn probe(kind: LossKind, network: usize) -> f64 {
    let (m, _) = SpganModel::train(&corpus(), SpganConfig { seed: 11, ..tiny() }).unwrap();
    let b = batch(&m, 3);
    let grads = m.loss_gradients(&b, kind).unwrap();
    let analytic = [&grads.encoder, &grads.generator, &grads.discriminator][network];
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (pi, g) in analytic.iter().enumerate() {
        let n = g.len();
        for &k in &[0, n / 3, n / 2, n - 1] {
            let eval = |delta: f64| {
                let mut mm = m.clone();
                mm.networks_mut()[network].params[pi].tensor.data_mut()[k] += delta;
                mm.loss_value(&b, kind).unwrap()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(relative_error(g[k], numeric));
        }
    }
    worst
}

#[test]
fn ae_loss_gradient_matches_finite_differences() {
    assert!(probe(LossKind::Autoencoder, 0) < 1e-3);
    assert!(probe(LossKind::Autoencoder, 1) < 1e-3);
}

#[test]
fn d_loss_gradient_matches_finite_differences() {
    assert!(probe(LossKind::Discriminator, 2) < 1e-3);
}

#[test]
fn g_loss_gradient_matches_finite_differences() {
    assert!(probe(LossKind::Generator, 1) < 1e-3);
}

#[test]
fn ae_loss_ignores_the_discriminator() {
    let m = SpganModel::new(tiny()).unwrap();
    let g = m
        .loss_gradients(&batch(&m, 4), LossKind::Autoencoder)
        .unwrap();
    assert!(g.discriminator.iter().flatten().all(|&v| v == 0.0));
    assert!(g.encoder.iter().flatten().any(|&v| v != 0.0));
}

#[test]
fn each_update_touches_only_its_network() {
    let mut m = SpganModel::new(tiny()).unwrap();
    let b = batch(&m, 6);
    let owner = [0, 1, 2, 1];
    for (u, &own) in Update::ORDER.iter().zip(&owner) {
        let before = snapshot(&m);
        m.apply_update(&b, *u).unwrap();
        let after = snapshot(&m);
        for net in 0..3 {
            assert_eq!(before[net] != after[net], net == own, "{u:?} network {net}");
        }
    }
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let mut m = SpganModel::new(tiny()).unwrap();
    m.set_learning_rate(0.0);
    let before = snapshot(&m);
    let mut rng = m.iteration_rng(0);
    let vols = m.sample_batch(&corpus(), &mut rng).unwrap();
    let rec = m.train_iteration(&vols, &mut rng).unwrap();
    assert!(rec.is_finite());
    assert_eq!(before, snapshot(&m));
}

#[test]
fn training_is_reproducible() {
    let (a, la) = SpganModel::train(&corpus(), tiny()).unwrap();
    let (b, lb) = SpganModel::train(&corpus(), tiny()).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a, b);
    assert_eq!(la.records.len(), 4);
    assert!(la
        .records
        .iter()
        .all(|r| r.is_finite() && r.d_real > 0.0 && r.d_real < 1.0));
    let (c, _) = SpganModel::train(&corpus(), SpganConfig { seed: 6, ..tiny() }).unwrap();
    assert_ne!(snapshot(&a), snapshot(&c));
}

#[test]
fn zero_iterations_return_the_initialization() {
    let cfg = SpganConfig {
        iterations: 0,
        ..tiny()
    };
    let (m, log) = SpganModel::train(&corpus(), cfg.clone()).unwrap();
    assert!(log.records.is_empty());
    assert_eq!(m, SpganModel::new(cfg).unwrap());
}

#[test]
fn corpus_checks() {
    assert!(SpganModel::train(&[], tiny()).is_err());
    let small = bernoulli_volume(6, 0.3, 0).unwrap();
    assert!(SpganModel::train(&[small], tiny()).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = SpganModel::train(&corpus(), tiny()).unwrap();
    m.save(dir.path()).unwrap();
    let back = SpganModel::load(dir.path()).unwrap();
    assert_eq!(m, back);
    let b = batch(&m, 8);
    let h = m.encode(&b.slices).unwrap();
    let x = m.generate(&b.noise, &h).unwrap();
    let y = back
        .generate(&b.noise, &back.encode(&b.slices).unwrap())
        .unwrap();
    let bits = |t: &spgan_core::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&x), bits(&y));
}

#[test]
fn checkpoint_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(SpganModel::load(dir.path()).is_err());
    let m = SpganModel::new(tiny()).unwrap();
    m.save(dir.path()).unwrap();
    let manifest = dir.path().join(spgan_core::spgan::MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest).unwrap();
    std::fs::write(
        &manifest,
        text.replace("\"base_channels\": 2", "\"base_channels\": 3"),
    )
    .unwrap();
    assert!(SpganModel::load(dir.path()).is_err());
    std::fs::write(&manifest, text).unwrap();
    let payload = dir.path().join("generator.dense.w.f64");
    let bytes = std::fs::read(&payload).unwrap();
    std::fs::write(&payload, &bytes[..bytes.len() - 8]).unwrap();
    assert!(SpganModel::load(dir.path()).is_err());
}

#[test]
fn resume_reproduces_the_unbroken_run() {
    let cfg = SpganConfig {
        iterations: 6,
        ..tiny()
    };
    let (unbroken, full) = SpganModel::train(&corpus(), cfg.clone()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = SpganModel::new(cfg).unwrap();
    let head = first.train_until(&corpus(), 3, |_, _| Ok(())).unwrap();
    first.save(dir.path()).unwrap();
    let mut resumed = SpganModel::load(dir.path()).unwrap();
    let tail = resumed.train_until(&corpus(), 6, |_, _| Ok(())).unwrap();

    let joined: Vec<_> = head.records.iter().chain(&tail.records).copied().collect();
    assert_eq!(joined, full.records);
    assert_eq!(resumed, unbroken);
}

#[test]
fn synthesize_counts_and_determinism() {
    let m = SpganModel::new(tiny()).unwrap();
    let s = bernoulli_volume(8, 0.5, 1).unwrap().central_slice();
    let a = m.synthesize(&s, 3, 42).unwrap();
    assert_eq!(a.len(), 3);
    for out in &a {
        assert_eq!(out.volume.dims(), [8, 8, 8]);
        assert_eq!(out.central_slice, out.volume.central_slice());
        assert!((0.0..=1.0).contains(&out.mismatch_fraction));
        assert!(out.l2_distance >= 0.0);
    }
    assert_eq!(a, m.synthesize(&s, 3, 42).unwrap());
    assert!(m.synthesize(&s, 0, 42).unwrap().is_empty());
}

#[test]
fn train_log_csv() {
    let (_, log) = SpganModel::train(&corpus(), tiny()).unwrap();
    let csv = log.to_csv();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "iteration,ae_loss,d_loss,g_loss,d_real,d_fake");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].starts_with("3,"));
}

/// Desk-scale smoke run on a single 16^3 volume.
#[test]
fn one_volume_reconstruction_loss_halves() {
    let vol = gaussian_field_volume(&FieldSpec {
        size: 16,
        correlation_length: 2.0,
        target_porosity: 0.3,
        seed: 1,
    })
    .unwrap();
    let cfg = SpganConfig {
        volume_size: 16,
        z_dim: 32,
        h_dim: None,
        base_channels: 4,
        lr: 1e-4,
        batch_size: 4,
        iterations: 200,
        seed: 7,
    };
    let (_, log) = SpganModel::train(std::slice::from_ref(&vol), cfg).unwrap();
    let first = log.median_ae_loss(0..20).unwrap();
    let last = log.median_ae_loss(180..200).unwrap();
    assert!(last < 0.5 * first, "first {first} last {last}");
    assert!(log.records.iter().all(|r| r.is_finite()));
    assert_eq!(vol.count(Phase::Void), (0.3f64 * 4096.0).round() as usize);
}
