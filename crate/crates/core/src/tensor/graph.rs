use super::conv::{add_bias, bias_grad, ConvParams, Geometry};
use super::{Parameter, Tensor};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: Geometry,
        transpose: bool,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Act {
        input: Var,
        kind: Activation,
    },
    Mean {
        input: Var,
    },
    Mse {
        a: Var,
        b: Var,
    },
    Log {
        input: Var,
        floor: Option<f64>,
    },
    Concat {
        a: Var,
        b: Var,
        outer: usize,
        inner_a: usize,
        inner_b: usize,
    },
    Reshape {
        input: Var,
    },
    Select {
        input: Var,
        outer: usize,
        extent: usize,
        index: usize,
        inner: usize,
    },
    Affine {
        input: Var,
        scale: f64,
    },
    Add {
        a: Var,
        b: Var,
    },
}

#[derive(Clone, Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Tape of operations. Nodes are appended in evaluation order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn dims5(shape: &[usize], what: &str) -> Result<[usize; 5]> {
    match shape {
        [a, b, c, d, e] => Ok([*a, *b, *c, *d, *e]),
        [a, b, d, e] => Ok([*a, *b, 1, *d, *e]),
        _ => Err(Error::shape(format!(
            "{what} has unsupported shape {shape:?}"
        ))),
    }
}

/// Adjoint buffer of a tracked input, allocated on first use.
fn buf<'a>(nodes: &[Node], adj: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(adj[v.0].get_or_insert_with(|| vec![0.0; len]))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A leaf; its gradient is tracked iff `requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor, requires_grad: bool) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), requires_grad, Op::Leaf)
    }

    /// A leaf without gradient tracking.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor, false)
    }

    /// A leaf holding a copy of the parameter's current values.
    pub fn param(&mut self, p: &Parameter, trainable: bool) -> Var {
        let mut t = p.tensor.clone();
        t.grad = None;
        self.leaf(t, trainable)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    /// Accumulated gradient of a tracked node, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Adds this node's accumulated gradient into a parameter's buffer.
    pub fn accumulate_into(&self, v: Var, p: &mut Parameter) -> Result<()> {
        match self.grad(v) {
            Some(g) => p.tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn conv_common(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        params: ConvParams,
        transpose: bool,
        spatial_dims: usize,
    ) -> Result<Var> {
        let in_shape = self.shape(input).to_vec();
        let w_shape = self.shape(weight).to_vec();
        if in_shape.len() != spatial_dims + 2 || w_shape.len() != spatial_dims + 2 {
            return Err(Error::shape(format!(
                "{spatial_dims}D convolution needs rank-{} input and weight, got {in_shape:?} and {w_shape:?}",
                spatial_dims + 2
            )));
        }
        let x5 = dims5(&in_shape, "input")?;
        let w5 = dims5(&w_shape, "weight")?;
        let s = params.stride;
        let p = params.padding;
        let (stride, pad) = if spatial_dims == 2 {
            ([1, s, s], [0, p, p])
        } else {
            ([s; 3], [p; 3])
        };
        let geom = if transpose {
            Geometry::for_transpose(x5, w5, stride, pad)?
        } else {
            Geometry::for_conv(x5, w5, stride, pad)?
        };
        let (out_ch, out_sp) = if transpose {
            (geom.c, geom.inp)
        } else {
            (geom.f, geom.out)
        };
        if let Some(b) = bias {
            if self.shape(b) != [out_ch] {
                return Err(Error::shape(format!(
                    "bias shape {:?}, expected [{out_ch}]",
                    self.shape(b)
                )));
            }
        }
        let spatial: usize = out_sp.iter().product();
        let mut out = vec![0.0; geom.n * out_ch * spatial];
        {
            let x = self.value(input);
            let w = self.value(weight);
            if transpose {
                geom.backward_input(x, w, &mut out);
            } else {
                geom.forward(x, w, &mut out);
            }
        }
        if let Some(b) = bias {
            add_bias(&mut out, self.value(b), geom.n, spatial);
        }
        let mut shape = vec![geom.n, out_ch];
        if spatial_dims == 2 {
            shape.extend_from_slice(&out_sp[1..]);
        } else {
            shape.extend_from_slice(&out_sp);
        }
        let rg = self.rg(input) || self.rg(weight) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(
            shape,
            out,
            rg,
            Op::Conv {
                input,
                weight,
                bias,
                geom,
                transpose,
            },
        ))
    }

    /// 3D cross-correlation: `[N, C, D, H, W]` with `[F, C, k, k, k]`.
    pub fn conv3d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        p: ConvParams,
    ) -> Result<Var> {
        self.conv_common(input, weight, bias, p, false, 3)
    }

    /// Adjoint of [`Graph::conv3d`]: `[N, F, D, H, W]` with `[F, C, k, k, k]`
    /// gives `[N, C, (D-1)s - 2p + k, ..]`.
    pub fn conv_transpose3d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        p: ConvParams,
    ) -> Result<Var> {
        self.conv_common(input, weight, bias, p, true, 3)
    }

    /// 2D cross-correlation: `[N, C, H, W]` with `[F, C, k, k]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        p: ConvParams,
    ) -> Result<Var> {
        self.conv_common(input, weight, bias, p, false, 2)
    }

    /// `[N, I] x [O, I]ᵀ + [O]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (n, i) = match self.shape(input) {
            [n, i] => (*n, *i),
            s => {
                return Err(Error::shape(format!(
                    "dense input must be [N, I], got {s:?}"
                )))
            }
        };
        let o = match self.shape(weight) {
            [o, wi] if *wi == i => *o,
            s => {
                return Err(Error::shape(format!(
                    "dense weight must be [O, {i}], got {s:?}"
                )))
            }
        };
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(Error::shape(format!(
                    "dense bias must be [{o}], got {:?}",
                    self.shape(b)
                )));
            }
        }
        let x = self.value(input);
        let w = self.value(weight);
        let mut out = vec![0.0; n * o];
        for r in 0..n {
            let xr = &x[r * i..(r + 1) * i];
            for c in 0..o {
                let wr = &w[c * i..(c + 1) * i];
                out[r * o + c] = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
            }
        }
        if let Some(b) = bias {
            let bv = self.value(b);
            for r in 0..n {
                out[r * o..(r + 1) * o]
                    .iter_mut()
                    .zip(bv)
                    .for_each(|(v, b)| *v += b);
            }
        }
        let rg = self.rg(input) || self.rg(weight) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(
            vec![n, o],
            out,
            rg,
            Op::Dense {
                input,
                weight,
                bias,
            },
        ))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let value = self
            .value(input)
            .iter()
            .map(|&x| match kind {
                Activation::Relu => x.max(0.0),
                Activation::LeakyRelu(a) => {
                    if x > 0.0 {
                        x
                    } else {
                        a * x
                    }
                }
                Activation::Tanh => x.tanh(),
                Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            })
            .collect();
        let shape = self.shape(input).to_vec();
        let rg = self.rg(input);
        self.push(shape, value, rg, Op::Act { input, kind })
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        self.activation(input, Activation::LeakyRelu(slope))
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.rg(input);
        self.push(vec![1], vec![m], rg, Op::Mean { input })
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "mse operands {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let m = va
            .iter()
            .zip(vb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / va.len() as f64;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![1], vec![m], rg, Op::Mse { a, b }))
    }

    pub fn log(&mut self, input: Var) -> Var {
        self.log_impl(input, None)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(&mut self, input: Var, floor: f64) -> Var {
        self.log_impl(input, Some(floor))
    }

    fn log_impl(&mut self, input: Var, floor: Option<f64>) -> Var {
        let value = self
            .value(input)
            .iter()
            .map(|&x| match floor {
                Some(f) => x.max(f).ln(),
                None => x.ln(),
            })
            .collect();
        let shape = self.shape(input).to_vec();
        let rg = self.rg(input);
        self.push(shape, value, rg, Op::Log { input, floor })
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != sb.len()
            || axis >= sa.len()
            || sa
                .iter()
                .zip(&sb)
                .enumerate()
                .any(|(i, (x, y))| i != axis && x != y)
        {
            return Err(Error::shape(format!(
                "cannot concatenate {sa:?} and {sb:?} along axis {axis}"
            )));
        }
        let outer: usize = sa[..axis].iter().product();
        let inner_a: usize = sa[axis..].iter().product();
        let inner_b: usize = sb[axis..].iter().product();
        let (va, vb) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(va.len() + vb.len());
        for o in 0..outer {
            out.extend_from_slice(&va[o * inner_a..(o + 1) * inner_a]);
            out.extend_from_slice(&vb[o * inner_b..(o + 1) * inner_b]);
        }
        let mut shape = sa;
        shape[axis] += sb[axis];
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            shape,
            out,
            rg,
            Op::Concat {
                a,
                b,
                outer,
                inner_a,
                inner_b,
            },
        ))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(input).len() || shape.contains(&0) {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(input)
            )));
        }
        let value = self.value(input).to_vec();
        let rg = self.rg(input);
        Ok(self.push(shape.to_vec(), value, rg, Op::Reshape { input }))
    }

    /// Picks `index` along `axis`, dropping that axis.
    pub fn select(&mut self, input: Var, axis: usize, index: usize) -> Result<Var> {
        let s = self.shape(input).to_vec();
        if axis >= s.len() || index >= s[axis] {
            return Err(Error::shape(format!(
                "select index {index} on axis {axis} of {s:?}"
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let extent = s[axis];
        let v = self.value(input);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * extent + index) * inner;
            out.extend_from_slice(&v[start..start + inner]);
        }
        let mut shape = s;
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(input);
        Ok(self.push(
            shape,
            out,
            rg,
            Op::Select {
                input,
                outer,
                extent,
                index,
                inner,
            },
        ))
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, input: Var, scale: f64, shift: f64) -> Var {
        let value = self
            .value(input)
            .iter()
            .map(|x| scale * x + shift)
            .collect();
        let shape = self.shape(input).to_vec();
        let rg = self.rg(input);
        self.push(shape, value, rg, Op::Affine { input, scale })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "add operands {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, rg, Op::Add { a, b }))
    }

    /// Back-propagates from a scalar, adding d(loss)/d(node) into the
    /// accumulated gradient of every tracked node that `loss` depends on.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut adj);
            match self.grads[idx].as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => self.grads[idx] = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                weight,
                bias,
                geom,
                transpose,
            } => {
                let x = &nodes[input.0].value;
                let w = &nodes[weight.0].value;
                if let Some(gi) = buf(nodes, adj, *input) {
                    if *transpose {
                        geom.forward(g, w, gi);
                    } else {
                        geom.backward_input(g, w, gi);
                    }
                }
                if let Some(gw) = buf(nodes, adj, *weight) {
                    if *transpose {
                        geom.backward_weight(x, g, gw);
                    } else {
                        geom.backward_weight(g, x, gw);
                    }
                }
                if let Some(b) = bias {
                    if let Some(gb) = buf(nodes, adj, *b) {
                        let spatial = g.len() / (geom.n * gb.len());
                        bias_grad(g, gb, geom.n, spatial);
                    }
                }
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let x = &nodes[input.0].value;
                let w = &nodes[weight.0].value;
                let (n, i) = (nodes[input.0].shape[0], nodes[input.0].shape[1]);
                let o = nodes[weight.0].shape[0];
                if let Some(gi) = buf(nodes, adj, *input) {
                    for r in 0..n {
                        let gr = &g[r * o..(r + 1) * o];
                        let dst = &mut gi[r * i..(r + 1) * i];
                        for (c, gv) in gr.iter().enumerate() {
                            dst.iter_mut()
                                .zip(&w[c * i..(c + 1) * i])
                                .for_each(|(d, wv)| *d += gv * wv);
                        }
                    }
                }
                if let Some(gw) = buf(nodes, adj, *weight) {
                    for r in 0..n {
                        let xr = &x[r * i..(r + 1) * i];
                        for c in 0..o {
                            let gv = g[r * o + c];
                            gw[c * i..(c + 1) * i]
                                .iter_mut()
                                .zip(xr)
                                .for_each(|(d, xv)| *d += gv * xv);
                        }
                    }
                }
                if let Some(b) = bias {
                    if let Some(gb) = buf(nodes, adj, *b) {
                        for r in 0..n {
                            gb.iter_mut()
                                .zip(&g[r * o..(r + 1) * o])
                                .for_each(|(d, gv)| *d += gv);
                        }
                    }
                }
            }
            Op::Act { input, kind } => {
                let x = &nodes[input.0].value;
                let y = &node.value;
                if let Some(gi) = buf(nodes, adj, *input) {
                    for k in 0..g.len() {
                        let d = match kind {
                            Activation::Relu => {
                                if x[k] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Activation::LeakyRelu(a) => {
                                if x[k] > 0.0 {
                                    1.0
                                } else if x[k] < 0.0 {
                                    *a
                                } else {
                                    0.0
                                }
                            }
                            Activation::Tanh => 1.0 - y[k] * y[k],
                            Activation::Sigmoid => y[k] * (1.0 - y[k]),
                        };
                        gi[k] += g[k] * d;
                    }
                }
            }
            Op::Mean { input } => {
                if let Some(gi) = buf(nodes, adj, *input) {
                    let d = g[0] / gi.len() as f64;
                    gi.iter_mut().for_each(|v| *v += d);
                }
            }
            Op::Mse { a, b } => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let scale = 2.0 * g[0] / va.len() as f64;
                if let Some(ga) = buf(nodes, adj, *a) {
                    for k in 0..va.len() {
                        ga[k] += scale * (va[k] - vb[k]);
                    }
                }
                if let Some(gb) = buf(nodes, adj, *b) {
                    for k in 0..va.len() {
                        gb[k] -= scale * (va[k] - vb[k]);
                    }
                }
            }
            Op::Log { input, floor } => {
                let x = &nodes[input.0].value;
                if let Some(gi) = buf(nodes, adj, *input) {
                    for k in 0..g.len() {
                        if floor.is_none_or(|f| x[k] > f) {
                            gi[k] += g[k] / x[k];
                        }
                    }
                }
            }
            Op::Concat {
                a,
                b,
                outer,
                inner_a,
                inner_b,
            } => {
                let stride = inner_a + inner_b;
                if let Some(ga) = buf(nodes, adj, *a) {
                    for o in 0..*outer {
                        ga[o * inner_a..(o + 1) * inner_a]
                            .iter_mut()
                            .zip(&g[o * stride..o * stride + inner_a])
                            .for_each(|(d, v)| *d += v);
                    }
                }
                if let Some(gb) = buf(nodes, adj, *b) {
                    for o in 0..*outer {
                        gb[o * inner_b..(o + 1) * inner_b]
                            .iter_mut()
                            .zip(&g[o * stride + inner_a..(o + 1) * stride])
                            .for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Reshape { input } => {
                if let Some(gi) = buf(nodes, adj, *input) {
                    gi.iter_mut().zip(g).for_each(|(d, v)| *d += v);
                }
            }
            Op::Select {
                input,
                outer,
                extent,
                index,
                inner,
            } => {
                if let Some(gi) = buf(nodes, adj, *input) {
                    for o in 0..*outer {
                        let start = (o * extent + index) * inner;
                        gi[start..start + inner]
                            .iter_mut()
                            .zip(&g[o * inner..(o + 1) * inner])
                            .for_each(|(d, v)| *d += v);
                    }
                }
            }
            Op::Affine { input, scale } => {
                if let Some(gi) = buf(nodes, adj, *input) {
                    gi.iter_mut().zip(g).for_each(|(d, v)| *d += scale * v);
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if let Some(gv) = buf(nodes, adj, *v) {
                        gv.iter_mut().zip(g).for_each(|(d, x)| *d += x);
                    }
                }
            }
        }
    }
}
