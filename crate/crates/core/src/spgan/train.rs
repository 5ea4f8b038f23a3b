use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nets::{self, Bound};
use super::{slices_tensor, volumes_tensor, SpganModel, LOG_FLOOR};
use crate::stats::quantile_sorted;
use crate::tensor::{Graph, ParameterSet, Tensor, Var};
use crate::volume::VoxelVolume;
use crate::{Error, Result};

/// Network inputs for one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[N, 1, S, S, S]` real volumes.
    pub volumes: Tensor,
    /// `[N, 1, S, S]` central slices of `volumes`.
    pub slices: Tensor,
    /// `[N, z_dim]` noise.
    pub noise: Tensor,
}

impl Batch {
    pub fn new<R: Rng + ?Sized>(
        model: &SpganModel,
        volumes: &[VoxelVolume],
        rng: &mut R,
    ) -> Result<Self> {
        let slices: Vec<_> = volumes.iter().map(VoxelVolume::central_slice).collect();
        Ok(Self {
            volumes: volumes_tensor(volumes)?,
            slices: slices_tensor(&slices)?,
            noise: model.prior().sample(volumes.len(), rng),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Autoencoder,
    Discriminator,
    Generator,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanLosses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_real: f64,
    pub d_fake: f64,
}

/// Gradients of one loss with respect to every parameter of each network,
/// in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    pub loss: f64,
    pub encoder: Vec<Vec<f64>>,
    pub generator: Vec<Vec<f64>>,
    pub discriminator: Vec<Vec<f64>>,
}

struct Built {
    loss: Var,
    d_real: Option<Var>,
    d_fake: Option<Var>,
}

fn one_minus(g: &mut Graph, x: Var) -> Var {
    g.affine(x, -1.0, 1.0)
}

fn mean_log(g: &mut Graph, x: Var) -> Var {
    let l = g.log_clamped(x, LOG_FLOOR);
    g.mean(l)
}

/// Builds one loss on `g` over parameters already placed by `b`.
fn build(
    g: &mut Graph,
    model: &SpganModel,
    b: &Bound,
    batch: &Batch,
    kind: LossKind,
) -> Result<Built> {
    let cfg = &model.config;
    let n = batch.slices.shape().first().copied().unwrap_or(0);
    if batch.noise.shape().first() != Some(&n) {
        return Err(Error::shape(format!(
            "batch sizes differ: {n} slices, noise {:?}",
            batch.noise.shape()
        )));
    }
    let s = g.constant(batch.slices.clone());
    let z = g.constant(batch.noise.clone());
    let h = nets::encoder(g, cfg, &b.enc, s)?;
    let fake = nets::generator(g, cfg, &b.gen, z, h)?;
    match kind {
        LossKind::Autoencoder => {
            let plane = nets::central_plane(g, fake)?;
            let target_shape = g.shape(plane).to_vec();
            let target = g.constant(batch.slices.clone().reshape(target_shape)?);
            let loss = g.mse(target, plane)?;
            Ok(Built {
                loss,
                d_real: None,
                d_fake: None,
            })
        }
        LossKind::Discriminator => {
            if batch.volumes.shape().first() != Some(&n) {
                return Err(Error::shape("volume and slice batch sizes differ"));
            }
            let x = g.constant(batch.volumes.clone());
            let dr = nets::discriminator(g, cfg, &b.dis, x)?;
            let df = nets::discriminator(g, cfg, &b.dis, fake)?;
            let real_term = mean_log(g, dr);
            let inv = one_minus(g, df);
            let fake_term = mean_log(g, inv);
            let sum = g.add(real_term, fake_term)?;
            let loss = g.affine(sum, -1.0, 0.0);
            Ok(Built {
                loss,
                d_real: Some(dr),
                d_fake: Some(df),
            })
        }
        LossKind::Generator => {
            let df = nets::discriminator(g, cfg, &b.dis, fake)?;
            let inv = one_minus(g, df);
            let loss = mean_log(g, inv);
            Ok(Built {
                loss,
                d_real: None,
                d_fake: Some(df),
            })
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn collect_grads(g: &Graph, vars: &[Var], set: &ParameterSet) -> Vec<Vec<f64>> {
    vars.iter()
        .zip(&set.params)
        .map(|(&v, p)| {
            g.grad(v)
                .map_or_else(|| vec![0.0; p.tensor.numel()], <[f64]>::to_vec)
        })
        .collect()
}

/// The four parameter updates of an iteration, in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Update {
    /// Encoder on the reconstruction loss.
    Encoder,
    /// Generator on the reconstruction loss.
    GeneratorReconstruction,
    /// Discriminator on the adversarial loss.
    Discriminator,
    /// Generator on the adversarial loss.
    GeneratorAdversarial,
}

impl Update {
    pub const ORDER: [Update; 4] = [
        Update::Encoder,
        Update::GeneratorReconstruction,
        Update::Discriminator,
        Update::GeneratorAdversarial,
    ];

    fn plan(self) -> (LossKind, [bool; 3]) {
        match self {
            Update::Encoder => (LossKind::Autoencoder, [true, false, false]),
            Update::GeneratorReconstruction => (LossKind::Autoencoder, [false, true, false]),
            Update::Discriminator => (LossKind::Discriminator, [false, false, true]),
            Update::GeneratorAdversarial => (LossKind::Generator, [false, true, false]),
        }
    }
}

/// Loss value before an update, with mean discriminator outputs where the
/// loss involved them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOutcome {
    pub loss: f64,
    pub d_real: Option<f64>,
    pub d_fake: Option<f64>,
}

impl SpganModel {
    /// Reconstruction error between the slices and the central planes of the
    /// volumes generated from them, averaged over pixels and batch.
    pub fn ae_loss(&self, slices: &Tensor, noise: &Tensor) -> Result<f64> {
        let batch = Batch {
            volumes: Tensor::zeros(&[1]),
            slices: slices.clone(),
            noise: noise.clone(),
        };
        self.loss_value(&batch, LossKind::Autoencoder)
    }

    pub fn gan_losses(
        &self,
        volumes: &Tensor,
        slices: &Tensor,
        noise: &Tensor,
    ) -> Result<GanLosses> {
        let batch = Batch {
            volumes: volumes.clone(),
            slices: slices.clone(),
            noise: noise.clone(),
        };
        let mut g = Graph::new();
        let b = nets::bind(&mut g, self, [false; 3]);
        let d = build(&mut g, self, &b, &batch, LossKind::Discriminator)?;
        let gl = build(&mut g, self, &b, &batch, LossKind::Generator)?;
        Ok(GanLosses {
            d_loss: g.value(d.loss)[0],
            g_loss: g.value(gl.loss)[0],
            d_real: mean(g.value(d.d_real.expect("discriminator loss scores reals"))),
            d_fake: mean(g.value(d.d_fake.expect("discriminator loss scores fakes"))),
        })
    }

    pub fn loss_value(&self, batch: &Batch, kind: LossKind) -> Result<f64> {
        let mut g = Graph::new();
        let b = nets::bind(&mut g, self, [false; 3]);
        let built = build(&mut g, self, &b, batch, kind)?;
        Ok(g.value(built.loss)[0])
    }

    /// Gradients of a loss with respect to all parameters, leaving the model
    /// untouched.
    pub fn loss_gradients(&self, batch: &Batch, kind: LossKind) -> Result<LossGradients> {
        let mut g = Graph::new();
        let b = nets::bind(&mut g, self, [true; 3]);
        let built = build(&mut g, self, &b, batch, kind)?;
        g.backward(built.loss)?;
        Ok(LossGradients {
            loss: g.value(built.loss)[0],
            encoder: collect_grads(&g, &b.enc, &self.encoder),
            generator: collect_grads(&g, &b.gen, &self.generator),
            discriminator: collect_grads(&g, &b.dis, &self.discriminator),
        })
    }

    /// The four updates of one iteration on a prepared batch, in order:
    /// encoder on the reconstruction loss, generator on the reconstruction
    /// loss (recomputed with the new encoder), discriminator on the
    /// adversarial loss, generator on the adversarial loss. Each update
    /// holds the other two networks fixed.
    pub fn train_step(&mut self, batch: &Batch) -> Result<TrainRecord> {
        let ae = self.apply_update(batch, Update::Encoder)?;
        self.apply_update(batch, Update::GeneratorReconstruction)?;
        let d = self.apply_update(batch, Update::Discriminator)?;
        let g = self.apply_update(batch, Update::GeneratorAdversarial)?;
        let record = TrainRecord {
            iteration: self.iteration,
            ae_loss: ae.loss,
            d_loss: d.loss,
            g_loss: g.loss,
            d_real: d.d_real.expect("discriminator loss scores reals"),
            d_fake: d.d_fake.expect("discriminator loss scores fakes"),
        };
        self.iteration += 1;
        Ok(record)
    }

    /// One Adam step of a single network on freshly computed gradients, the
    /// other two networks held fixed.
    pub fn apply_update(&mut self, batch: &Batch, which: Update) -> Result<UpdateOutcome> {
        let (kind, trainable) = which.plan();
        let mut g = Graph::new();
        let b = nets::bind(&mut g, self, trainable);
        let built = build(&mut g, self, &b, batch, kind)?;
        g.backward(built.loss)?;
        let pairs = [
            (trainable[0], &b.enc, &mut self.encoder),
            (trainable[1], &b.gen, &mut self.generator),
            (trainable[2], &b.dis, &mut self.discriminator),
        ];
        for (on, vars, set) in pairs {
            if !on {
                continue;
            }
            set.zero_grad();
            for (&v, p) in vars.iter().zip(set.params.iter_mut()) {
                g.accumulate_into(v, p)?;
            }
            set.step()?;
            set.zero_grad();
        }
        Ok(UpdateOutcome {
            loss: g.value(built.loss)[0],
            d_real: built.d_real.map(|v| mean(g.value(v))),
            d_fake: built.d_fake.map(|v| mean(g.value(v))),
        })
    }

    /// Slices the real volumes, draws noise from `rng`, and runs
    /// [`SpganModel::train_step`].
    pub fn train_iteration<R: Rng + ?Sized>(
        &mut self,
        volumes: &[VoxelVolume],
        rng: &mut R,
    ) -> Result<TrainRecord> {
        let n = self.config.volume_size;
        if let Some(v) = volumes.iter().find(|v| v.dims() != [n; 3]) {
            return Err(Error::shape(format!(
                "training volumes must be {n}^3, got {:?}",
                v.dims()
            )));
        }
        let batch = Batch::new(self, volumes, rng)?;
        self.train_step(&batch)
    }

    /// The RNG driving iteration `t`: seeded by the config seed, one stream
    /// per iteration, so a resumed run draws exactly what an unbroken one
    /// would.
    pub fn iteration_rng(&self, t: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(t + 1);
        rng
    }

    /// Draws a batch of random subvolumes from `corpus` using `rng`.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        corpus: &[VoxelVolume],
        rng: &mut R,
    ) -> Result<Vec<VoxelVolume>> {
        let size = self.config.volume_size;
        (0..self.config.batch_size)
            .map(|_| {
                let v = &corpus[rng.random_range(0..corpus.len())];
                Ok(v.sample_subvolumes_with(size, 1, rng)?.remove(0))
            })
            .collect()
    }

    /// Trains until `self.iteration` reaches `until`, calling `on_record`
    /// after every iteration.
    pub fn train_until(
        &mut self,
        corpus: &[VoxelVolume],
        until: u64,
        mut on_record: impl FnMut(&SpganModel, &TrainRecord) -> Result<()>,
    ) -> Result<TrainLog> {
        check_corpus(corpus, self.config.volume_size)?;
        let mut log = TrainLog::default();
        while self.iteration < until {
            let mut rng = self.iteration_rng(self.iteration);
            let volumes = self.sample_batch(corpus, &mut rng)?;
            let record = self.train_iteration(&volumes, &mut rng)?;
            on_record(self, &record)?;
            log.records.push(record);
        }
        Ok(log)
    }

    /// A fresh model trained for `config.iterations`.
    pub fn train(
        corpus: &[VoxelVolume],
        config: super::SpganConfig,
    ) -> Result<(SpganModel, TrainLog)> {
        let mut model = SpganModel::new(config)?;
        let until = model.config.iterations;
        let log = model.train_until(corpus, until, |_, _| Ok(()))?;
        Ok((model, log))
    }
}

fn check_corpus(corpus: &[VoxelVolume], size: usize) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    if let Some(v) = corpus.iter().find(|v| v.dims().iter().any(|&d| d < size)) {
        return Err(Error::invalid(format!(
            "corpus volume {:?} is smaller than the {size}^3 training size",
            v.dims()
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: u64,
    pub ae_loss: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Mean discriminator output on the real batch.
    pub d_real: f64,
    /// Mean discriminator output on the generated batch.
    pub d_fake: f64,
}

impl TrainRecord {
    pub const CSV_HEADER: &'static str = "iteration,ae_loss,d_loss,g_loss,d_real,d_fake";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration, self.ae_loss, self.d_loss, self.g_loss, self.d_real, self.d_fake
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.ae_loss,
            self.d_loss,
            self.g_loss,
            self.d_real,
            self.d_fake,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", TrainRecord::CSV_HEADER);
        for r in &self.records {
            let _ = writeln!(out, "{}", r.csv_row());
        }
        out
    }

    /// Median reconstruction loss over `records[range]`.
    pub fn median_ae_loss(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let mut v: Vec<f64> = self.records.get(range)?.iter().map(|r| r.ae_loss).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(quantile_sorted(&v, 0.5))
    }
}
