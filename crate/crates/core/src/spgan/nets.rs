use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{SpganConfig, SpganModel, INIT_STD};
use crate::tensor::{ConvParams, Graph, Parameter, ParameterSet, Tensor, Var};
use crate::{Error, Result};

const KERNEL: usize = 4;
const LEAK: f64 = 0.2;
/// Edge of the bottleneck feature maps.
const BOTTLENECK: usize = 4;

fn down() -> ConvParams {
    ConvParams::new(2, 1)
}

fn normal(id: String, shape: Vec<usize>, rng: &mut impl Rng) -> Parameter {
    let dist = Normal::new(0.0, INIT_STD).expect("valid std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Parameter::new(id, Tensor::new(shape, data).expect("shape matches data"))
}

fn zeros(id: String, shape: Vec<usize>) -> Parameter {
    Parameter::new(id, Tensor::zeros(&shape))
}

/// Output channels of the downsampling stages shared by encoder and
/// discriminator: `base, 2 base, 4 base, ...` capped at `8 base`.
fn down_channels(cfg: &SpganConfig) -> Vec<usize> {
    let b = cfg.base_channels;
    (0..cfg.stages()).map(|i| b << i.min(3)).collect()
}

/// Channels of the generator's feature maps from the bottleneck up to (but
/// excluding) the single output channel.
fn up_channels(cfg: &SpganConfig) -> Vec<usize> {
    let b = cfg.base_channels;
    let mut c = 8 * b;
    let mut out = vec![c];
    for _ in 1..cfg.stages() {
        c = (c / 2).max(b);
        out.push(c);
    }
    out
}

fn conv_stack(
    prefix: &str,
    channels: &[usize],
    spatial_dims: usize,
    rng: &mut impl Rng,
) -> Vec<Parameter> {
    let mut params = Vec::new();
    let mut c_in = 1;
    for (i, &c) in channels.iter().enumerate() {
        let mut shape = vec![c, c_in];
        shape.extend(std::iter::repeat_n(KERNEL, spatial_dims));
        params.push(normal(format!("{prefix}.conv{i}.w"), shape, rng));
        params.push(zeros(format!("{prefix}.conv{i}.b"), vec![c]));
        c_in = c;
    }
    params
}

fn flat_len(cfg: &SpganConfig, spatial_dims: u32) -> usize {
    down_channels(cfg).last().copied().unwrap_or(1) * BOTTLENECK.pow(spatial_dims)
}

pub(super) fn encoder_params(cfg: &SpganConfig, rng: &mut impl Rng) -> Vec<Parameter> {
    let mut p = conv_stack("encoder", &down_channels(cfg), 2, rng);
    p.push(normal(
        "encoder.dense.w".into(),
        vec![cfg.h_dim(), flat_len(cfg, 2)],
        rng,
    ));
    p.push(zeros("encoder.dense.b".into(), vec![cfg.h_dim()]));
    p
}

pub(super) fn generator_params(cfg: &SpganConfig, rng: &mut impl Rng) -> Vec<Parameter> {
    let ch = up_channels(cfg);
    let first = ch[0] * BOTTLENECK.pow(3);
    let mut p = vec![
        normal(
            "generator.dense.w".into(),
            vec![first, cfg.z_dim + cfg.h_dim()],
            rng,
        ),
        zeros("generator.dense.b".into(), vec![first]),
    ];
    for i in 0..ch.len() {
        let c_out = ch.get(i + 1).copied().unwrap_or(1);
        p.push(normal(
            format!("generator.deconv{i}.w"),
            vec![ch[i], c_out, KERNEL, KERNEL, KERNEL],
            rng,
        ));
        p.push(zeros(format!("generator.deconv{i}.b"), vec![c_out]));
    }
    p
}

pub(super) fn discriminator_params(cfg: &SpganConfig, rng: &mut impl Rng) -> Vec<Parameter> {
    let mut p = conv_stack("discriminator", &down_channels(cfg), 3, rng);
    p.push(normal(
        "discriminator.dense.w".into(),
        vec![1, flat_len(cfg, 3)],
        rng,
    ));
    p.push(zeros("discriminator.dense.b".into(), vec![1]));
    p
}

/// Graph handles for the parameters of each network.
pub(super) struct Bound {
    pub enc: Vec<Var>,
    pub gen: Vec<Var>,
    pub dis: Vec<Var>,
}

fn bind_set(g: &mut Graph, set: &ParameterSet, trainable: bool) -> Vec<Var> {
    set.params.iter().map(|p| g.param(p, trainable)).collect()
}

/// Places all parameters on `g`; `trainable` flags encoder, generator and
/// discriminator in that order.
pub(super) fn bind(g: &mut Graph, model: &SpganModel, trainable: [bool; 3]) -> Bound {
    Bound {
        enc: bind_set(g, &model.encoder, trainable[0]),
        gen: bind_set(g, &model.generator, trainable[1]),
        dis: bind_set(g, &model.discriminator, trainable[2]),
    }
}

/// Runs a forward-only computation and returns its output.
pub(super) fn eval(
    model: &SpganModel,
    f: impl FnOnce(&mut Graph, &Bound) -> Result<Var>,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let b = bind(&mut g, model, [false; 3]);
    let out = f(&mut g, &b)?;
    Ok(g.tensor(out))
}

fn check_spatial(g: &Graph, x: Var, cfg: &SpganConfig, rank: usize, what: &str) -> Result<usize> {
    let s = g.shape(x);
    let n = cfg.volume_size;
    if s.len() != rank || s[1] != 1 || s[2..].iter().any(|&d| d != n) {
        let mut want = vec!["N".to_string(), "1".to_string()];
        want.extend(std::iter::repeat_n(n.to_string(), rank - 2));
        return Err(Error::shape(format!(
            "{what} must be [{}], got {s:?}",
            want.join(", ")
        )));
    }
    Ok(s[0])
}

fn downsample(g: &mut Graph, params: &[Var], mut x: Var, spatial_dims: usize) -> Result<Var> {
    for pair in params.chunks_exact(2) {
        x = if spatial_dims == 2 {
            g.conv2d(x, pair[0], Some(pair[1]), down())?
        } else {
            g.conv3d(x, pair[0], Some(pair[1]), down())?
        };
        x = g.leaky_relu(x, LEAK);
    }
    Ok(x)
}

pub(super) fn encoder(g: &mut Graph, cfg: &SpganConfig, p: &[Var], s: Var) -> Result<Var> {
    let n = check_spatial(g, s, cfg, 4, "slice batch")?;
    let (convs, dense) = p.split_at(p.len() - 2);
    let x = downsample(g, convs, s, 2)?;
    let x = g.reshape(x, &[n, flat_len(cfg, 2)])?;
    g.dense(x, dense[0], Some(dense[1]))
}

pub(super) fn generator(
    g: &mut Graph,
    cfg: &SpganConfig,
    p: &[Var],
    z: Var,
    h: Var,
) -> Result<Var> {
    let (sz, sh) = (g.shape(z).to_vec(), g.shape(h).to_vec());
    if sz.len() != 2
        || sh.len() != 2
        || sz[0] != sh[0]
        || sz[1] != cfg.z_dim
        || sh[1] != cfg.h_dim()
    {
        return Err(Error::shape(format!(
            "generator needs z [N, {}] and h [N, {}], got {sz:?} and {sh:?}",
            cfg.z_dim,
            cfg.h_dim()
        )));
    }
    let n = sz[0];
    let zh = g.concat(z, h, 1)?;
    let x = g.dense(zh, p[0], Some(p[1]))?;
    let c0 = up_channels(cfg)[0];
    let x = g.reshape(x, &[n, c0, BOTTLENECK, BOTTLENECK, BOTTLENECK])?;
    let mut x = g.relu(x);
    let layers = p[2..].chunks_exact(2).count();
    for (i, pair) in p[2..].chunks_exact(2).enumerate() {
        x = g.conv_transpose3d(x, pair[0], Some(pair[1]), down())?;
        x = if i + 1 == layers {
            g.tanh(x)
        } else {
            g.relu(x)
        };
    }
    Ok(x)
}

pub(super) fn discriminator(g: &mut Graph, cfg: &SpganConfig, p: &[Var], x: Var) -> Result<Var> {
    let n = check_spatial(g, x, cfg, 5, "volume batch")?;
    let (convs, dense) = p.split_at(p.len() - 2);
    let x = downsample(g, convs, x, 3)?;
    let x = g.reshape(x, &[n, flat_len(cfg, 3)])?;
    let logit = g.dense(x, dense[0], Some(dense[1]))?;
    let logit = g.reshape(logit, &[n])?;
    Ok(g.sigmoid(logit))
}

/// The mask **M**: the `D / 2` plane of an `[N, 1, D, H, W]` volume batch,
/// as `[N, H, W]`.
pub(super) fn central_plane(g: &mut Graph, x: Var) -> Result<Var> {
    let d = g.shape(x)[2];
    let x = g.select(x, 1, 0)?;
    g.select(x, 1, d / 2)
}
