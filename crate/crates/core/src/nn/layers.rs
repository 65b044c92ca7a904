//! Forward and backward kernels for every layer kind.
//!
//! Activations are single samples: `[c, h, w]` for spatial layers and `[d]`
//! for fully connected ones.

use super::{NnError, Tensor};

fn dims3(t: &Tensor, what: &str) -> Result<(usize, usize, usize), NnError> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(NnError::DimensionMismatch(format!(
            "{what}: expected [c,h,w], got {s:?}"
        ))),
    }
}

/// Output positions `x` in `0..out_len` for which `x * stride + offset - pad`
/// lands inside `0..in_len`.
fn valid_range(out_len: usize, in_len: usize, offset: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > offset {
        (pad - offset).div_ceil(stride)
    } else {
        0
    };
    let hi = if in_len + pad > offset {
        ((in_len - 1 + pad - offset) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

struct ConvGeometry {
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv_geometry(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGeometry, NnError> {
    let (c, h, w) = dims3(input, "conv input")?;
    let [oc, wc, kh, kw] = match *weights.shape() {
        [a, b, c, d] => [a, b, c, d],
        ref s => {
            return Err(NnError::DimensionMismatch(format!(
                "conv weights must be 4-d, got {s:?}"
            )))
        }
    };
    if wc != c {
        return Err(NnError::DimensionMismatch(format!(
            "conv weights expect {wc} channels, input has {c}"
        )));
    }
    if bias.shape() != [oc] {
        return Err(NnError::DimensionMismatch(format!(
            "conv bias {:?} vs {oc} outputs",
            bias.shape()
        )));
    }
    if stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(NnError::DimensionMismatch(format!(
            "kernel {kh}x{kw} (stride {stride}, pad {pad}) does not fit input {h}x{w}"
        )));
    }
    Ok(ConvGeometry {
        c,
        h,
        w,
        oc,
        kh,
        kw,
        oh: (h + 2 * pad - kh) / stride + 1,
        ow: (w + 2 * pad - kw) / stride + 1,
    })
}

/// Cross-correlation with zero padding.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor, NnError> {
    let g = conv_geometry(input, weights, bias, stride, pad)?;
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0; g.oc * g.oh * g.ow];
    for o in 0..g.oc {
        let plane = &mut out[o * g.oh * g.ow..(o + 1) * g.oh * g.ow];
        plane.fill(bias.data()[o]);
        for ci in 0..g.c {
            let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for i in 0..g.kh {
                let (y_lo, y_hi) = valid_range(g.oh, g.h, i, stride, pad);
                for j in 0..g.kw {
                    let wv = wt[((o * g.c + ci) * g.kh + i) * g.kw + j];
                    let (x_lo, x_hi) = valid_range(g.ow, g.w, j, stride, pad);
                    for y in y_lo..y_hi {
                        let iy = y * stride + i - pad;
                        let row = &src[iy * g.w..(iy + 1) * g.w];
                        let dst = &mut plane[y * g.ow..(y + 1) * g.ow];
                        for xo in x_lo..x_hi {
                            dst[xo] += wv * row[xo * stride + j - pad];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.oc, g.oh, g.ow], out))
}

/// Gradients of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let oc = weights.shape().first().copied().unwrap_or(0);
    let g = conv_geometry(input, weights, &Tensor::zeros(&[oc]), stride, pad)?;
    if grad_out.shape() != [g.oc, g.oh, g.ow] {
        return Err(NnError::DimensionMismatch(format!(
            "conv grad {:?} vs output [{}, {}, {}]",
            grad_out.shape(),
            g.oc,
            g.oh,
            g.ow
        )));
    }
    let x = input.data();
    let wt = weights.data();
    let go = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; wt.len()];
    let mut gb = vec![0.0; g.oc];
    for o in 0..g.oc {
        let gplane = &go[o * g.oh * g.ow..(o + 1) * g.oh * g.ow];
        gb[o] = gplane.iter().sum();
        for ci in 0..g.c {
            let base = ci * g.h * g.w;
            for i in 0..g.kh {
                let (y_lo, y_hi) = valid_range(g.oh, g.h, i, stride, pad);
                for j in 0..g.kw {
                    let widx = ((o * g.c + ci) * g.kh + i) * g.kw + j;
                    let wv = wt[widx];
                    let (x_lo, x_hi) = valid_range(g.ow, g.w, j, stride, pad);
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let row = base + (y * stride + i - pad) * g.w;
                        for xo in x_lo..x_hi {
                            let gv = gplane[y * g.ow + xo];
                            let xi = row + xo * stride + j - pad;
                            acc += gv * x[xi];
                            gx[xi] += wv * gv;
                        }
                    }
                    gw[widx] = acc;
                }
            }
        }
    }
    Ok((
        Tensor::from_parts(input.shape().to_vec(), gx),
        Tensor::from_parts(weights.shape().to_vec(), gw),
        Tensor::vector(gb),
    ))
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| v.max(0.0)).collect())
}

/// Passes the gradient where `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward(grad_out: &Tensor, x: &Tensor) -> Tensor {
    let data = grad_out
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// `k + (alpha / n) * sum of squares` over the channel window around each element.
fn lrn_denominators(x: &Tensor, n: usize, k: f64, alpha: f64) -> Result<Vec<f64>, NnError> {
    let (c, h, w) = dims3(x, "lrn input")?;
    let plane = h * w;
    let half = n / 2;
    let data = x.data();
    let mut s = vec![0.0; data.len()];
    for p in 0..plane {
        for ch in 0..c {
            let lo = ch.saturating_sub(half);
            let hi = (ch + half).min(c - 1);
            let sumsq: f64 = (lo..=hi).map(|j| data[j * plane + p].powi(2)).sum();
            s[ch * plane + p] = k + alpha / n as f64 * sumsq;
        }
    }
    Ok(s)
}

/// Cross-channel local response normalization.
pub fn lrn_forward(x: &Tensor, n: usize, k: f64, alpha: f64, beta: f64) -> Result<Tensor, NnError> {
    let s = lrn_denominators(x, n, k, alpha)?;
    let data = x.data().iter().zip(&s).map(|(&v, &d)| v * d.powf(-beta)).collect();
    Ok(Tensor::from_parts(x.shape().to_vec(), data))
}

pub fn lrn_backward(grad_out: &Tensor, x: &Tensor, n: usize, k: f64, alpha: f64, beta: f64) -> Result<Tensor, NnError> {
    let (c, h, w) = dims3(x, "lrn input")?;
    if grad_out.shape() != x.shape() {
        return Err(NnError::DimensionMismatch(
            "lrn gradient shape differs from input".into(),
        ));
    }
    let s = lrn_denominators(x, n, k, alpha)?;
    let plane = h * w;
    let half = n / 2;
    let xd = x.data();
    let g = grad_out.data();
    // t[c] = g[c] * x[c] * s[c]^(-beta - 1)
    let t: Vec<f64> = (0..xd.len()).map(|i| g[i] * xd[i] * s[i].powf(-beta - 1.0)).collect();
    let coeff = 2.0 * alpha * beta / n as f64;
    let mut gx = vec![0.0; xd.len()];
    for p in 0..plane {
        for ch in 0..c {
            let i = ch * plane + p;
            let lo = ch.saturating_sub(half);
            let hi = (ch + half).min(c - 1);
            let cross: f64 = (lo..=hi).map(|j| t[j * plane + p]).sum();
            gx[i] = g[i] * s[i].powf(-beta) - coeff * xd[i] * cross;
        }
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), gx))
}

/// Window maxima plus the flat input index each maximum came from. Ties keep
/// the first element in row-major window order.
pub fn maxpool_forward(x: &Tensor, size: usize, stride: usize) -> Result<(Tensor, Vec<usize>), NnError> {
    let (c, h, w) = dims3(x, "maxpool input")?;
    if size == 0 || stride == 0 || h < size || w < size {
        return Err(NnError::DimensionMismatch(format!(
            "pool window {size} does not fit input {h}x{w}"
        )));
    }
    let oh = (h - size) / stride + 1;
    let ow = (w - size) / stride + 1;
    let data = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = ch * h * w + (y * stride) * w + xo * stride;
                for i in 0..size {
                    for j in 0..size {
                        let k = ch * h * w + (y * stride + i) * w + xo * stride + j;
                        if data[k] > data[best] {
                            best = k;
                        }
                    }
                }
                out.push(data[best]);
                idx.push(best);
            }
        }
    }
    Ok((Tensor::from_parts(vec![c, oh, ow], out), idx))
}

/// Routes each output gradient to its recorded argmax.
pub fn maxpool_backward(grad_out: &Tensor, indices: &[usize], input_shape: &[usize]) -> Result<Tensor, NnError> {
    if grad_out.len() != indices.len() {
        return Err(NnError::DimensionMismatch(
            "maxpool gradient and index lengths differ".into(),
        ));
    }
    let mut gx = Tensor::zeros(input_shape);
    let buf = gx.data_mut();
    for (&g, &i) in grad_out.data().iter().zip(indices) {
        buf[i] += g;
    }
    Ok(gx)
}

/// `W x + b`.
pub fn fc_forward(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (m, d) = match *weights.shape() {
        [m, d] => (m, d),
        ref s => return Err(NnError::DimensionMismatch(format!("fc weights must be 2-d, got {s:?}"))),
    };
    if x.shape() != [d] || bias.shape() != [m] {
        return Err(NnError::DimensionMismatch(format!(
            "fc: weights [{m}, {d}], input {:?}, bias {:?}",
            x.shape(),
            bias.shape()
        )));
    }
    let xv = x.data();
    let out = weights
        .data()
        .chunks_exact(d)
        .zip(bias.data())
        .map(|(row, b)| b + row.iter().zip(xv).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Ok(Tensor::vector(out))
}

pub fn fc_backward(grad_out: &Tensor, x: &Tensor, weights: &Tensor) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (m, d) = match *weights.shape() {
        [m, d] => (m, d),
        ref s => return Err(NnError::DimensionMismatch(format!("fc weights must be 2-d, got {s:?}"))),
    };
    if x.shape() != [d] || grad_out.shape() != [m] {
        return Err(NnError::DimensionMismatch("fc gradient shapes do not match".into()));
    }
    let xv = x.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; d];
    let mut gw = vec![0.0; m * d];
    for (o, row) in weights.data().chunks_exact(d).enumerate() {
        let go = g[o];
        let grow = &mut gw[o * d..(o + 1) * d];
        for ((gwv, &xvv), (gxv, &wv)) in grow.iter_mut().zip(xv).zip(gx.iter_mut().zip(row)) {
            *gwv = go * xvv;
            *gxv += wv * go;
        }
    }
    Ok((
        Tensor::vector(gx),
        Tensor::from_parts(vec![m, d], gw),
        Tensor::vector(g.to_vec()),
    ))
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &Tensor) -> Tensor {
    let z = logits.data();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Tensor::from_parts(logits.shape().to_vec(), exps.into_iter().map(|e| e / total).collect())
}

pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln(max(p[label], 1e-12))`.
pub fn cross_entropy(probs: &Tensor, label: usize) -> Result<f64, NnError> {
    let p = probs.data().get(label).ok_or(NnError::LabelOutOfRange {
        label,
        classes: probs.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Gradient of `cross_entropy(softmax(z), label)` with respect to `z`: `probs - onehot(label)`.
pub fn softmax_cross_entropy_grad(probs: &Tensor, label: usize) -> Result<Tensor, NnError> {
    if label >= probs.len() {
        return Err(NnError::LabelOutOfRange {
            label,
            classes: probs.len(),
        });
    }
    let mut g = probs.clone();
    g.data_mut()[label] -= 1.0;
    Ok(g)
}
