//! Direct convolution kernels.
//!
//! A [`Geometry`] describes one cross-correlation `A` taking
//! `[N, C, D, H, W]` to `[N, F, D', H', W']` with a `[F, C, kd, kh, kw]`
//! weight. The three kernels compute `A x`, `Aᵀ y` and the weight gradient;
//! the transposed convolution reuses them with the roles of forward and
//! input-gradient swapped. 2D convolutions run as 3D ones with unit depth.

use crate::{Error, Result};

/// Stride and zero padding, identical on every spatial axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub stride: usize,
    pub padding: usize,
}

impl ConvParams {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self { stride, padding }
    }
}

impl Default for ConvParams {
    fn default() -> Self {
        Self::new(1, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub n: usize,
    pub c: usize,
    pub f: usize,
    pub inp: [usize; 3],
    pub out: [usize; 3],
    pub k: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl Geometry {
    /// Geometry of a forward convolution from the input and weight shapes.
    pub fn for_conv(
        input: [usize; 5],
        weight: [usize; 5],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        let [n, c, d, h, w] = input;
        let [f, wc, kd, kh, kw] = weight;
        if wc != c {
            return Err(Error::shape(format!(
                "input has {c} channels, weight expects {wc}"
            )));
        }
        if stride.contains(&0) {
            return Err(Error::invalid("stride must be positive"));
        }
        let inp = [d, h, w];
        let k = [kd, kh, kw];
        let mut out = [0; 3];
        for a in 0..3 {
            let span = inp[a] + 2 * pad[a];
            if span < k[a] {
                return Err(Error::shape(format!(
                    "kernel {} larger than padded extent {span}",
                    k[a]
                )));
            }
            if !(span - k[a]).is_multiple_of(stride[a]) {
                return Err(Error::shape(format!(
                    "non-integral output extent: ({} + 2*{} - {}) / {}",
                    inp[a], pad[a], k[a], stride[a]
                )));
            }
            out[a] = (span - k[a]) / stride[a] + 1;
        }
        Ok(Self {
            n,
            c,
            f,
            inp,
            out,
            k,
            stride,
            pad,
        })
    }

    /// Geometry of the convolution whose adjoint is the transposed
    /// convolution of `input` (`[N, F, ...]`) with `weight` (`[F, C, ...]`).
    pub fn for_transpose(
        input: [usize; 5],
        weight: [usize; 5],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        let [n, f, d, h, w] = input;
        let [wf, c, kd, kh, kw] = weight;
        if wf != f {
            return Err(Error::shape(format!(
                "input has {f} channels, transposed weight expects {wf}"
            )));
        }
        if stride.contains(&0) {
            return Err(Error::invalid("stride must be positive"));
        }
        let out = [d, h, w];
        let k = [kd, kh, kw];
        let mut inp = [0; 3];
        for a in 0..3 {
            let full = (out[a] - 1) * stride[a] + k[a];
            if full <= 2 * pad[a] {
                return Err(Error::shape(format!(
                    "transposed convolution output extent would be non-positive on axis {a}"
                )));
            }
            inp[a] = full - 2 * pad[a];
        }
        Ok(Self {
            n,
            c,
            f,
            inp,
            out,
            k,
            stride,
            pad,
        })
    }

    #[cfg(test)]
    pub fn in_len(&self) -> usize {
        self.n * self.c * self.inp.iter().product::<usize>()
    }

    #[cfg(test)]
    pub fn out_len(&self) -> usize {
        self.n * self.f * self.out.iter().product::<usize>()
    }

    #[cfg(test)]
    pub fn weight_len(&self) -> usize {
        self.f * self.c * self.k.iter().product::<usize>()
    }

    /// Output positions `o` along one axis for which `o * s + kk - p` falls
    /// inside the input, as a half-open range.
    #[inline]
    fn span(&self, axis: usize, kk: usize) -> (usize, usize) {
        let (s, p, len, olen) = (
            self.stride[axis],
            self.pad[axis],
            self.inp[axis],
            self.out[axis],
        );
        let lo = if kk >= p { 0 } else { (p - kk).div_ceil(s) };
        let hi = if len + p > kk {
            ((len - 1 + p - kk) / s + 1).min(olen)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    /// Visits every (input index, output index, weight index) triple, grouped
    /// so the innermost loop runs over a contiguous output row.
    #[inline]
    fn for_each_row(&self, mut visit: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let [o0, o1, o2] = self.out;
        let [i0, i1, i2] = self.inp;
        let [k0, k1, k2] = self.k;
        let in_vol = i0 * i1 * i2;
        let out_vol = o0 * o1 * o2;
        let kvol = k0 * k1 * k2;
        for n in 0..self.n {
            for f in 0..self.f {
                let out_base = (n * self.f + f) * out_vol;
                for c in 0..self.c {
                    let in_base = (n * self.c + c) * in_vol;
                    let w_base = (f * self.c + c) * kvol;
                    for kd in 0..k0 {
                        let (d_lo, d_hi) = self.span(0, kd);
                        for kh in 0..k1 {
                            let (h_lo, h_hi) = self.span(1, kh);
                            for kw in 0..k2 {
                                let (w_lo, w_hi) = self.span(2, kw);
                                if w_lo >= w_hi {
                                    continue;
                                }
                                let wi = w_base + (kd * k1 + kh) * k2 + kw;
                                for od in d_lo..d_hi {
                                    let id = od * self.stride[0] + kd - self.pad[0];
                                    for oh in h_lo..h_hi {
                                        let ih = oh * self.stride[1] + kh - self.pad[1];
                                        let orow = out_base + (od * o1 + oh) * o2;
                                        // input index of output column 0, before the pad shift
                                        let irow = in_base + (id * i1 + ih) * i2 + kw;
                                        visit(wi, orow, irow, w_lo, w_hi, self.pad[2]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// `out += A x`
    pub fn forward(&self, input: &[f64], weight: &[f64], out: &mut [f64]) {
        let s = self.stride[2];
        self.for_each_row(|wi, orow, irow, lo, hi, p| {
            let wv = weight[wi];
            let dst = &mut out[orow + lo..orow + hi];
            let mut src = irow + lo * s - p;
            for o in dst {
                *o += wv * input[src];
                src += s;
            }
        });
    }

    /// `grad_in += Aᵀ grad_out`
    pub fn backward_input(&self, grad_out: &[f64], weight: &[f64], grad_in: &mut [f64]) {
        let s = self.stride[2];
        self.for_each_row(|wi, orow, irow, lo, hi, p| {
            let wv = weight[wi];
            let mut dst = irow + lo * s - p;
            for g in &grad_out[orow + lo..orow + hi] {
                grad_in[dst] += wv * g;
                dst += s;
            }
        });
    }

    /// `grad_w += ∂⟨grad_out, A x⟩ / ∂w`
    pub fn backward_weight(&self, grad_out: &[f64], input: &[f64], grad_w: &mut [f64]) {
        let s = self.stride[2];
        self.for_each_row(|wi, orow, irow, lo, hi, p| {
            let mut src = irow + lo * s - p;
            let mut acc = 0.0;
            for g in &grad_out[orow + lo..orow + hi] {
                acc += g * input[src];
                src += s;
            }
            grad_w[wi] += acc;
        });
    }
}

/// `out[n, f, ..] += bias[f]`
pub(crate) fn add_bias(out: &mut [f64], bias: &[f64], n: usize, spatial: usize) {
    let f = bias.len();
    for b in 0..n {
        for (ch, bv) in bias.iter().enumerate() {
            let start = (b * f + ch) * spatial;
            out[start..start + spatial]
                .iter_mut()
                .for_each(|v| *v += bv);
        }
    }
}

/// `grad_b[f] += Σ grad_out[n, f, ..]`
pub(crate) fn bias_grad(grad_out: &[f64], grad_b: &mut [f64], n: usize, spatial: usize) {
    let f = grad_b.len();
    for b in 0..n {
        for (ch, gb) in grad_b.iter_mut().enumerate() {
            let start = (b * f + ch) * spatial;
            *gb += grad_out[start..start + spatial].iter().sum::<f64>();
        }
    }
}
