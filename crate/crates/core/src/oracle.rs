//! Plaintext fixed-point reference of the whole pipeline: frame selection,
//! every layer, the approximate softmax, and label aggregation.
//!
//! The oracle follows the numeric plan of the secure path step for step:
//! same rounding, same single truncation site per output element, same
//! normalization and iteration count inside division. Secure truncation may
//! add one unit in the last place (the masking carry); the oracle computes
//! the exact floor, which is why equivalence checks carry per-element
//! tolerances instead of demanding bit equality. Everything here is a pure
//! function of its inputs.

use crate::error::{Error, Result};
use crate::nn::{Layer, ModelSpec, Shape};
use crate::preproc::{div_internal_frac, div_msb_max, div_norm_shift, DIV_GUARD_BITS, DIV_ITERATIONS};
use crate::protocols::reciprocal_seed_constant;
use crate::ring::{FixedPointCodec, RingElement};
use crate::sharing::dims_len;

/// A plaintext tensor of ring elements interpreted through the codec.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainTensor {
    pub dims: Vec<usize>,
    pub vals: Vec<RingElement>,
}

impl PlainTensor {
    pub fn new(dims: Vec<usize>, vals: Vec<RingElement>) -> Result<Self> {
        if vals.len() != dims_len(&dims) {
            return Err(Error::ShapeMismatch(format!(
                "{} values for dims {:?}",
                vals.len(),
                dims
            )));
        }
        Ok(PlainTensor { dims, vals })
    }

    pub fn from_reals(codec: &FixedPointCodec, dims: Vec<usize>, vals: &[f64]) -> Result<Self> {
        Ok(PlainTensor {
            dims,
            vals: codec.encode_all(vals)?,
        })
    }

    pub fn numel(&self) -> usize {
        self.vals.len()
    }

    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        if dims_len(&dims) != self.vals.len() {
            return Err(Error::ShapeMismatch("reshape".into()));
        }
        self.dims = dims;
        Ok(self)
    }
}

fn floor_shift(v: i128, shift: u32) -> i128 {
    v >> shift
}

pub fn plain_conv2d(
    frame: &PlainTensor,
    kernel: &PlainTensor,
    bias: &[RingElement],
    stride: usize,
    pad: usize,
    frac: u32,
) -> Result<PlainTensor> {
    let [h, w, c] = frame.dims[..] else {
        return Err(Error::ShapeMismatch("conv frame must be (h, w, c)".into()));
    };
    let [kh, kw, kc, oc] = kernel.dims[..] else {
        return Err(Error::ShapeMismatch("kernel must be (kh, kw, c, out_ch)".into()));
    };
    if kc != c || bias.len() != oc {
        return Err(Error::ShapeMismatch("kernel/bias channels".into()));
    }
    let oh = crate::nn::conv_output_extent(h, kh, stride, pad)?;
    let ow = crate::nn::conv_output_extent(w, kw, stride, pad)?;
    let mut out = Vec::with_capacity(oh * ow * oc);
    for oy in 0..oh {
        for ox in 0..ow {
            for (ocx, b) in bias.iter().enumerate() {
                let mut acc: i128 = (b.to_signed() as i128) << frac;
                for ky in 0..kh {
                    let iy = oy * stride + ky;
                    if iy < pad || iy >= h + pad {
                        continue;
                    }
                    let iy = iy - pad;
                    for kx in 0..kw {
                        let ix = ox * stride + kx;
                        if ix < pad || ix >= w + pad {
                            continue;
                        }
                        let ix = ix - pad;
                        for ci in 0..c {
                            let x = frame.vals[(iy * w + ix) * c + ci].to_signed() as i128;
                            let k = kernel.vals[((ky * kw + kx) * c + ci) * oc + ocx].to_signed() as i128;
                            acc += x * k;
                        }
                    }
                }
                out.push(RingElement::from_signed(floor_shift(acc, frac) as i64));
            }
        }
    }
    PlainTensor::new(vec![oh, ow, oc], out)
}

pub fn plain_avgpool(map: &PlainTensor, ph: usize, pw: usize, frac: u32) -> Result<PlainTensor> {
    let [h, w, c] = map.dims[..] else {
        return Err(Error::ShapeMismatch("avgpool needs (h, w, c)".into()));
    };
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::ShapeMismatch("pool divisibility".into()));
    }
    let codec = FixedPointCodec { frac_bits: frac };
    let inv = codec.encode(1.0 / (ph * pw) as f64)?.to_signed() as i128;
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Vec::with_capacity(oh * ow * c);
    for oy in 0..oh {
        for ox in 0..ow {
            for ci in 0..c {
                let mut sum: i128 = 0;
                for dy in 0..ph {
                    for dx in 0..pw {
                        sum += map.vals[((oy * ph + dy) * w + (ox * pw + dx)) * c + ci].to_signed() as i128;
                    }
                }
                out.push(RingElement::from_signed(floor_shift(sum * inv, frac) as i64));
            }
        }
    }
    PlainTensor::new(vec![oh, ow, c], out)
}

pub fn plain_dense(
    x: &PlainTensor,
    w: &PlainTensor,
    bias: &[RingElement],
    frac: u32,
) -> Result<PlainTensor> {
    let [out_dim, in_dim] = w.dims[..] else {
        return Err(Error::ShapeMismatch("dense weights must be (out, in)".into()));
    };
    if x.numel() != in_dim || bias.len() != out_dim {
        return Err(Error::ShapeMismatch("dense shapes".into()));
    }
    let mut out = Vec::with_capacity(out_dim);
    for (row, b) in bias.iter().enumerate() {
        let mut acc: i128 = (b.to_signed() as i128) << frac;
        for col in 0..in_dim {
            acc += (w.vals[row * in_dim + col].to_signed() as i128)
                * (x.vals[col].to_signed() as i128);
        }
        out.push(RingElement::from_signed(floor_shift(acc, frac) as i64));
    }
    PlainTensor::new(vec![out_dim], out)
}

pub fn plain_relu(t: &PlainTensor) -> PlainTensor {
    PlainTensor {
        dims: t.dims.clone(),
        vals: t
            .vals
            .iter()
            .map(|v| RingElement::from_signed(v.to_signed().max(0)))
            .collect(),
    }
}

/// Mirror of the secure division pipeline, with exact floors at every
/// truncation site.
pub fn plain_div(num: RingElement, den: RingElement, frac: u32) -> RingElement {
    let g = DIV_GUARD_BITS;
    let f = div_internal_frac(frac);
    let jmax = div_msb_max(frac);
    let norm_shift = div_norm_shift(frac);

    let v = (den.to_signed() as i128) << g;
    let num_f = (num.to_signed() as i128) << g;

    // one-hot scale from the MSB indicators; zero for out-of-range inputs
    let mut scale: i128 = 0;
    for j in 0..=jmax {
        let h_j = v >= (1i128 << j);
        let h_j1 = v >= (1i128 << (j + 1));
        if h_j && !h_j1 {
            scale = 1i128 << (jmax - j);
        }
    }

    let mut b = floor_shift(v * scale, norm_shift);
    let mut x = floor_shift(num_f * scale, norm_shift);
    let seed = reciprocal_seed_constant(f).0 as i128;
    let y0 = seed - 2 * b;
    x = floor_shift(x * y0, f);
    b = floor_shift(b * y0, f);
    let two = 2i128 << f;
    for _ in 0..DIV_ITERATIONS {
        let e = two - b;
        x = floor_shift(x * e, f);
        b = floor_shift(b * e, f);
    }
    RingElement::from_signed(floor_shift(x, g) as i64)
}

/// Mirror of the approximate softmax over fixed-point logits.
pub fn plain_soft(logits: &[RingElement], frac: u32) -> Vec<RingElement> {
    let classes = logits.len() as i64;
    let one = 1i64 << frac;
    let relu: Vec<i64> = logits.iter().map(|v| v.to_signed().max(0)).collect();
    let sum: i64 = relu.iter().sum();
    let positive = sum > 0;
    let denom = if positive { sum } else { classes * one };
    let inv = plain_div(RingElement::from_signed(one), RingElement::from_signed(denom), frac);
    relu.iter()
        .map(|&r| {
            let numer = if positive { r } else { one };
            let prod = (numer as i128) * (inv.to_signed() as i128);
            RingElement::from_signed(floor_shift(prod, frac) as i64)
        })
        .collect()
}

/// The real-valued approximate-softmax formula, for the float shadow.
pub fn float_soft(logits: &[f64]) -> Vec<f64> {
    let relu: Vec<f64> = logits.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = relu.iter().sum();
    if sum > 0.0 {
        relu.iter().map(|r| r / sum).collect()
    } else {
        vec![1.0 / logits.len() as f64; logits.len()]
    }
}

/// Fixed-point inference over one frame, layer by layer.
pub fn plain_finfer(
    model: &ModelSpec,
    weights: &PlainTensor,
    frame: &PlainTensor,
    frac: u32,
) -> Result<Vec<RingElement>> {
    let plans = model.plan()?;
    if weights.numel() != model.total_params()? {
        return Err(Error::ShapeMismatch("weight count".into()));
    }
    let mut acc = frame.clone();
    for plan in &plans {
        acc = match &plan.layer {
            Layer::Conv2d { out_ch, kh, kw, stride, pad, .. } => {
                let ws = plan.weights.as_ref().unwrap();
                let Shape::Map { c, .. } = plan.input else { unreachable!() };
                let kernel = PlainTensor::new(
                    vec![*kh, *kw, c, *out_ch],
                    weights.vals[ws.kernel.clone()].to_vec(),
                )?;
                plain_conv2d(&acc, &kernel, &weights.vals[ws.bias.clone()], *stride, *pad, frac)?
            }
            Layer::AvgPool { ph, pw } => plain_avgpool(&acc, *ph, *pw, frac)?,
            Layer::Relu => plain_relu(&acc),
            Layer::Flatten => acc.reshape(vec![plan.output.numel()])?,
            Layer::Dense { out_dim, .. } => {
                let ws = plan.weights.as_ref().unwrap();
                let w = PlainTensor::new(
                    vec![*out_dim, plan.input.numel()],
                    weights.vals[ws.kernel.clone()].to_vec(),
                )?;
                plain_dense(&acc, &w, &weights.vals[ws.bias.clone()], frac)?
            }
            Layer::ApproxSoftmax => PlainTensor::new(acc.dims.clone(), plain_soft(&acc.vals, frac))?,
        };
    }
    Ok(acc.vals)
}

/// Gather the 1-based frame indices out of an (N, h, w, c) video tensor.
pub fn plain_gather_frames(video: &PlainTensor, indices: &[usize]) -> Result<PlainTensor> {
    let [n_total, h, w, c] = video.dims[..] else {
        return Err(Error::ShapeMismatch("video must be (N, h, w, c)".into()));
    };
    let frame_len = h * w * c;
    let mut vals = Vec::with_capacity(indices.len() * frame_len);
    for &idx in indices {
        if idx == 0 || idx > n_total {
            return Err(Error::ShapeMismatch(format!(
                "frame index {idx} out of 1..={n_total}"
            )));
        }
        let base = (idx - 1) * frame_len;
        vals.extend_from_slice(&video.vals[base..base + frame_len]);
    }
    PlainTensor::new(vec![indices.len(), h, w, c], vals)
}

fn argmax_lowest_tie_i64(vals: &[i64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in vals.iter().enumerate() {
        if v > vals[best] {
            best = i;
        }
    }
    best
}

/// Single-frame-method classification in the clear: select frames, infer
/// class probabilities per frame, sum per class, take the argmax with
/// lowest-index tie-break.
pub fn oracle_classify(
    video: &PlainTensor,
    indices: &[usize],
    model: &ModelSpec,
    weights: &PlainTensor,
    frac: u32,
) -> Result<(u64, Vec<RingElement>)> {
    let frames = plain_gather_frames(video, indices)?;
    let [n, h, w, c] = frames.dims[..] else { unreachable!() };
    let frame_len = h * w * c;
    let mut prob_sum = vec![0i64; model.classes];
    for j in 0..n {
        let frame = PlainTensor::new(
            vec![h, w, c],
            frames.vals[j * frame_len..(j + 1) * frame_len].to_vec(),
        )?;
        let sm = plain_finfer(model, weights, &frame, frac)?;
        for (acc, v) in prob_sum.iter_mut().zip(&sm) {
            *acc += v.to_signed();
        }
    }
    let label = argmax_lowest_tie_i64(&prob_sum) as u64;
    Ok((
        label,
        prob_sum.into_iter().map(RingElement::from_signed).collect(),
    ))
}

/// Margin between the two largest aggregated scores, in decoded units.
pub fn top_two_margin(prob_sums: &[RingElement], codec: &FixedPointCodec) -> f64 {
    let mut sorted: Vec<i64> = prob_sums.iter().map(|v| v.to_signed()).collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    if sorted.len() < 2 {
        return f64::INFINITY;
    }
    codec.decode(RingElement::from_signed(sorted[0] - sorted[1]))
}

/// Double-precision shadow of the pipeline, used to report (not assert)
/// how far fixed-point quantization moves the labels.
pub fn oracle_float_classify(
    video: &PlainTensor,
    indices: &[usize],
    model: &ModelSpec,
    weights: &PlainTensor,
    frac: u32,
) -> Result<(u64, Vec<f64>)> {
    let codec = FixedPointCodec { frac_bits: frac };
    let dec = |v: &RingElement| codec.decode(*v);
    let frames = plain_gather_frames(video, indices)?;
    let [n, h, w, c] = frames.dims[..] else { unreachable!() };
    let frame_len = h * w * c;
    let plans = model.plan()?;
    let mut prob_sum = vec![0f64; model.classes];
    for j in 0..n {
        let mut acc: Vec<f64> = frames.vals[j * frame_len..(j + 1) * frame_len]
            .iter()
            .map(dec)
            .collect();
        let mut shape = Shape::Map { h, w, c };
        for plan in &plans {
            match &plan.layer {
                Layer::Conv2d { out_ch, kh, kw, stride, pad, .. } => {
                    let ws = plan.weights.as_ref().unwrap();
                    let Shape::Map { h, w, c } = shape else { unreachable!() };
                    let Shape::Map { h: oh, w: ow, .. } = plan.output else { unreachable!() };
                    let kvals: Vec<f64> = weights.vals[ws.kernel.clone()].iter().map(dec).collect();
                    let bvals: Vec<f64> = weights.vals[ws.bias.clone()].iter().map(dec).collect();
                    let mut out = vec![0f64; oh * ow * out_ch];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for oc in 0..*out_ch {
                                let mut s = bvals[oc];
                                for ky in 0..*kh {
                                    let iy = oy * stride + ky;
                                    if iy < *pad || iy >= h + pad {
                                        continue;
                                    }
                                    for kx in 0..*kw {
                                        let ix = ox * stride + kx;
                                        if ix < *pad || ix >= w + pad {
                                            continue;
                                        }
                                        for ci in 0..c {
                                            s += acc[((iy - pad) * w + (ix - pad)) * c + ci]
                                                * kvals[((ky * kw + kx) * c + ci) * out_ch + oc];
                                        }
                                    }
                                }
                                out[(oy * ow + ox) * out_ch + oc] = s;
                            }
                        }
                    }
                    acc = out;
                }
                Layer::AvgPool { ph, pw } => {
                    let Shape::Map { h, w, c } = shape else { unreachable!() };
                    let (oh, ow) = (h / ph, w / pw);
                    let mut out = vec![0f64; oh * ow * c];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ci in 0..c {
                                let mut s = 0f64;
                                for dy in 0..*ph {
                                    for dx in 0..*pw {
                                        s += acc[((oy * ph + dy) * w + (ox * pw + dx)) * c + ci];
                                    }
                                }
                                out[(oy * ow + ox) * c + ci] = s / (ph * pw) as f64;
                            }
                        }
                    }
                    acc = out;
                }
                Layer::Relu => {
                    for v in acc.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
                Layer::Flatten => {}
                Layer::Dense { out_dim, .. } => {
                    let ws = plan.weights.as_ref().unwrap();
                    let in_dim = plan.input.numel();
                    let wvals: Vec<f64> = weights.vals[ws.kernel.clone()].iter().map(dec).collect();
                    let bvals: Vec<f64> = weights.vals[ws.bias.clone()].iter().map(dec).collect();
                    let mut out = vec![0f64; *out_dim];
                    for (row, o) in out.iter_mut().enumerate() {
                        let mut s = bvals[row];
                        for col in 0..in_dim {
                            s += wvals[row * in_dim + col] * acc[col];
                        }
                        *o = s;
                    }
                    acc = out;
                }
                Layer::ApproxSoftmax => {
                    acc = float_soft(&acc);
                }
            }
            shape = plan.output;
        }
        for (s, v) in prob_sum.iter_mut().zip(&acc) {
            *s += v;
        }
    }
    let mut best = 0usize;
    for (i, &v) in prob_sum.iter().enumerate() {
        if v > prob_sum[best] {
            best = i;
        }
    }
    Ok((best as u64, prob_sum))
}
