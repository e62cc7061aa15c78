//! Dense f64 layer primitives with explicit forward/backward passes. All
//! activations are (channels, height, width) arrays; every backward pass
//! returns the input gradient and accumulates parameter gradients.

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Unrolls k x k patches of a zero-padded (C, H, W) input into a
/// (C*k*k, OH*OW) matrix so convolution becomes one matrix product.
fn im2col(x: &Array3<f64>, k: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let mut cols = Array2::zeros((c * k * k, oh * ow));
    let xs = x.as_slice().expect("standard layout input");
    let cs = cols.as_slice_mut().expect("standard layout cols");
    for i in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (i * k + ky) * k + kx;
                // valid output columns for this kernel offset
                let ox0 = pad.saturating_sub(kx);
                let ox1 = (w + pad - kx).min(ow);
                if ox0 >= ox1 {
                    continue;
                }
                for oy in 0..oh {
                    let sy = oy + ky;
                    if sy < pad || sy >= h + pad {
                        continue;
                    }
                    let sy = sy - pad;
                    let src = (i * h + sy) * w + ox0 + kx - pad;
                    let dst = row * (oh * ow) + oy * ow + ox0;
                    let n = ox1 - ox0;
                    cs[dst..dst + n].copy_from_slice(&xs[src..src + n]);
                }
            }
        }
    }
    cols
}

/// Inverse of [`im2col`]: accumulates patch-matrix gradients back onto
/// the (C, H, W) input gradient.
fn col2im(cols: &Array2<f64>, dim: (usize, usize, usize), k: usize, pad: usize) -> Array3<f64> {
    let (c, h, w) = dim;
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let mut gx = Array3::zeros(dim);
    let gs = gx.as_slice_mut().expect("standard layout gradient");
    let cs = cols.as_slice().expect("standard layout cols");
    for i in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (i * k + ky) * k + kx;
                let ox0 = pad.saturating_sub(kx);
                let ox1 = (w + pad - kx).min(ow);
                if ox0 >= ox1 {
                    continue;
                }
                for oy in 0..oh {
                    let sy = oy + ky;
                    if sy < pad || sy >= h + pad {
                        continue;
                    }
                    let sy = sy - pad;
                    let dst = (i * h + sy) * w + ox0 + kx - pad;
                    let src = row * (oh * ow) + oy * ow + ox0;
                    let n = ox1 - ox0;
                    for j in 0..n {
                        gs[dst + j] += cs[src + j];
                    }
                }
            }
        }
    }
    gx
}

/// 2D convolution with square kernels and zero padding. `pad` is chosen so
/// 3x3 kernels keep the spatial size (pad 1) and 1x1 kernels need none.
#[derive(Debug, Clone)]
pub struct Conv2d {
    /// (out, in, k, k)
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub pad: usize,
}

impl Conv2d {
    /// He-initialized kernel: N(0, 2 / fan_in), zero bias.
    pub fn he_init(out_ch: usize, in_ch: usize, k: usize, pad: usize, rng: &mut ChaCha8Rng) -> Conv2d {
        let std = (2.0 / (in_ch * k * k) as f64).sqrt();
        let weight = Array4::from_shape_fn((out_ch, in_ch, k, k), |_| {
            let g: f64 = rng.sample(StandardNormal);
            g * std
        });
        Conv2d {
            weight,
            bias: Array1::zeros(out_ch),
            pad,
        }
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (out_ch, in_ch, k, _) = self.weight.dim();
        let (cx, h, w) = x.dim();
        debug_assert_eq!(cx, in_ch);
        let oh = h + 2 * self.pad + 1 - k;
        let ow = w + 2 * self.pad + 1 - k;
        let cols = im2col(x, k, self.pad);
        let w_mat = self
            .weight
            .view()
            .into_shape_with_order((out_ch, in_ch * k * k))
            .expect("contiguous kernel");
        let mut y_mat = w_mat.dot(&cols);
        for (o, mut row) in y_mat.rows_mut().into_iter().enumerate() {
            row += self.bias[o];
        }
        y_mat
            .into_shape_with_order((out_ch, oh, ow))
            .expect("conv output reshape")
    }

    /// Gradient w.r.t. input, weights and bias for an upstream gradient
    /// `gy` of the output. `x` is the forward input.
    pub fn backward(&self, x: &Array3<f64>, gy: &Array3<f64>) -> (Array3<f64>, Conv2dGrad) {
        let (out_ch, in_ch, k, _) = self.weight.dim();
        let (_, oh, ow) = gy.dim();
        let cols = im2col(x, k, self.pad);
        let gy_mat = gy
            .view()
            .into_shape_with_order((out_ch, oh * ow))
            .expect("contiguous gradient");
        let gw = gy_mat
            .dot(&cols.t())
            .into_shape_with_order(self.weight.dim())
            .expect("weight gradient reshape");
        let gb = Array1::from_iter(gy_mat.rows().into_iter().map(|r| r.sum()));
        let w_mat = self
            .weight
            .view()
            .into_shape_with_order((out_ch, in_ch * k * k))
            .expect("contiguous kernel");
        let g_cols = w_mat.t().dot(&gy_mat);
        let gx = col2im(&g_cols, x.dim(), k, self.pad);
        (gx, Conv2dGrad { weight: gw, bias: gb })
    }
}

#[derive(Debug, Clone)]
pub struct Conv2dGrad {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

/// 2x2 stride-2 transposed convolution (learned upsampling).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    /// (in, out, 2, 2)
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

impl ConvTranspose2d {
    pub fn he_init(in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> ConvTranspose2d {
        let std = (2.0 / in_ch as f64).sqrt();
        let weight = Array4::from_shape_fn((in_ch, out_ch, 2, 2), |_| {
            let g: f64 = rng.sample(StandardNormal);
            g * std
        });
        ConvTranspose2d {
            weight,
            bias: Array1::zeros(out_ch),
        }
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (in_ch, out_ch, _, _) = self.weight.dim();
        let (cx, h, w) = x.dim();
        debug_assert_eq!(cx, in_ch);
        let mut y = Array3::zeros((out_ch, h * 2, w * 2));
        for o in 0..out_ch {
            y.index_axis_mut(ndarray::Axis(0), o).fill(self.bias[o]);
        }
        for i in 0..in_ch {
            for sy in 0..h {
                for sx in 0..w {
                    let v = x[[i, sy, sx]];
                    if v == 0.0 {
                        continue;
                    }
                    for o in 0..out_ch {
                        for ky in 0..2 {
                            for kx in 0..2 {
                                y[[o, sy * 2 + ky, sx * 2 + kx]] += v * self.weight[[i, o, ky, kx]];
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, x: &Array3<f64>, gy: &Array3<f64>) -> (Array3<f64>, Conv2dGrad) {
        let (in_ch, out_ch, _, _) = self.weight.dim();
        let (_, h, w) = x.dim();
        let mut gx = Array3::zeros(x.dim());
        let mut gw = Array4::zeros(self.weight.dim());
        let mut gb = Array1::zeros(out_ch);
        for o in 0..out_ch {
            for oy in 0..h * 2 {
                for ox in 0..w * 2 {
                    gb[o] += gy[[o, oy, ox]];
                }
            }
        }
        for i in 0..in_ch {
            for sy in 0..h {
                for sx in 0..w {
                    let v = x[[i, sy, sx]];
                    let mut acc = 0.0;
                    for o in 0..out_ch {
                        for ky in 0..2 {
                            for kx in 0..2 {
                                let g = gy[[o, sy * 2 + ky, sx * 2 + kx]];
                                acc += g * self.weight[[i, o, ky, kx]];
                                gw[[i, o, ky, kx]] += g * v;
                            }
                        }
                    }
                    gx[[i, sy, sx]] = acc;
                }
            }
        }
        (gx, Conv2dGrad { weight: gw, bias: gb })
    }
}

pub fn relu_forward(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Backward through ReLU given the forward *input*.
pub fn relu_backward(x: &Array3<f64>, gy: &Array3<f64>) -> Array3<f64> {
    let mut gx = gy.clone();
    gx.zip_mut_with(x, |g, &v| {
        if v <= 0.0 {
            *g = 0.0;
        }
    });
    gx
}

/// 2x2 max pooling; `argmax` stores the flat (dy*2+dx) winner per output
/// cell for exact gradient routing.
pub fn maxpool_forward(x: &Array3<f64>) -> (Array3<f64>, Array3<u8>) {
    let (c, h, w) = x.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let mut y = Array3::zeros((c, h / 2, w / 2));
    let mut argmax = Array3::zeros((c, h / 2, w / 2));
    for ch in 0..c {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0u8;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = x[[ch, oy * 2 + dy, ox * 2 + dx]];
                        if v > best {
                            best = v;
                            arg = (dy * 2 + dx) as u8;
                        }
                    }
                }
                y[[ch, oy, ox]] = best;
                argmax[[ch, oy, ox]] = arg;
            }
        }
    }
    (y, argmax)
}

pub fn maxpool_backward(argmax: &Array3<u8>, gy: &Array3<f64>, in_dim: (usize, usize, usize)) -> Array3<f64> {
    let (c, oh, ow) = gy.dim();
    let mut gx = Array3::zeros(in_dim);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let a = argmax[[ch, oy, ox]] as usize;
                gx[[ch, oy * 2 + a / 2, ox * 2 + a % 2]] += gy[[ch, oy, ox]];
            }
        }
    }
    gx
}

/// Inverted dropout: kept units are scaled by 1/(1-rate) so inference
/// needs no compensation. Returns the scaled keep-mask for backward.
pub fn dropout_forward(x: &Array3<f64>, rate: f64, rng: &mut ChaCha8Rng) -> (Array3<f64>, Array3<f64>) {
    let keep = 1.0 - rate;
    let mask = Array3::from_shape_fn(x.dim(), |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    });
    (x * &mask, mask)
}

pub fn dropout_backward(mask: &Array3<f64>, gy: &Array3<f64>) -> Array3<f64> {
    gy * mask
}

/// Channel concatenation (skip connections).
pub fn concat(a: &Array3<f64>, b: &Array3<f64>) -> Array3<f64> {
    let (ca, h, w) = a.dim();
    let (cb, hb, wb) = b.dim();
    debug_assert_eq!((h, w), (hb, wb));
    let mut y = Array3::zeros((ca + cb, h, w));
    y.slice_mut(ndarray::s![..ca, .., ..]).assign(a);
    y.slice_mut(ndarray::s![ca.., .., ..]).assign(b);
    y
}

pub fn split(gy: &Array3<f64>, ca: usize) -> (Array3<f64>, Array3<f64>) {
    (
        gy.slice(ndarray::s![..ca, .., ..]).to_owned(),
        gy.slice(ndarray::s![ca.., .., ..]).to_owned(),
    )
}

/// Per-pixel softmax over the channel axis.
pub fn softmax(logits: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = logits.dim();
    let mut y = logits.clone();
    for py in 0..h {
        for px in 0..w {
            let mut max = f64::NEG_INFINITY;
            for ch in 0..c {
                max = max.max(y[[ch, py, px]]);
            }
            let mut sum = 0.0;
            for ch in 0..c {
                let e = (y[[ch, py, px]] - max).exp();
                y[[ch, py, px]] = e;
                sum += e;
            }
            for ch in 0..c {
                y[[ch, py, px]] /= sum;
            }
        }
    }
    y
}

/// Mean per-pixel cross-entropy of softmax probabilities against a class
/// map, and its gradient w.r.t. the logits (`(p - onehot) / pixels`).
pub fn cross_entropy(probs: &Array3<f64>, target: &ndarray::Array2<u8>) -> (f64, Array3<f64>) {
    let (c, h, w) = probs.dim();
    let n = (h * w) as f64;
    let mut loss = 0.0;
    let mut grad = Array3::zeros(probs.dim());
    for py in 0..h {
        for px in 0..w {
            let t = target[[py, px]] as usize;
            debug_assert!(t < c);
            loss -= probs[[t, py, px]].max(1e-300).ln();
            for ch in 0..c {
                let p = probs[[ch, py, px]];
                grad[[ch, py, px]] = (p - if ch == t { 1.0 } else { 0.0 }) / n;
            }
        }
    }
    (loss / n, grad)
}
