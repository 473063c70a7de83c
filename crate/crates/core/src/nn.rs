//! Secure ConvNet layer evaluation and the approximate softmax that
//! replaces the exponential on the output layer.
//!
//! A model is an ordered list of layers whose shapes chain from the input
//! frame to a length-`C` logit vector; the final layer is always the
//! approximate softmax and every hidden activation is RELU, the layer
//! vocabulary for which efficient share-level protocols exist. Weights
//! live in one flat tensor, sliced per layer in manifest order:
//! convolution kernels as `[kh][kw][in_ch][out_ch]` followed by a bias per
//! output channel, dense layers as `[out][in]` followed by a bias per row.
//!
//! Multiplications accumulate raw double-precision products; the bias is
//! lifted by `2^a` and added before the single truncation per output
//! element, which keeps one rounding site per value on both the secure
//! path and the plaintext oracle.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::SessionContext;
use crate::ring::RingElement;
use crate::sharing::ShareTensor;
use crate::transport::Channel;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        out_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        weights: String,
    },
    #[serde(rename = "avgpool")]
    AvgPool {
        ph: usize,
        pw: usize,
    },
    Relu,
    Flatten,
    Dense {
        out_dim: usize,
        weights: String,
    },
    ApproxSoftmax,
}

/// Ordered layer descriptions with shape metadata; the public part of
/// Bob's model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input frame shape `[h, w, c]`.
    pub input: [usize; 3],
    /// Number of class labels.
    pub classes: usize,
    pub layers: Vec<Layer>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Map { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Shape {
    pub fn numel(&self) -> usize {
        match *self {
            Shape::Map { h, w, c } => h * w * c,
            Shape::Flat(n) => n,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Map { h, w, c } => vec![h, w, c],
            Shape::Flat(n) => vec![n],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightSlice {
    pub kernel: Range<usize>,
    pub bias: Range<usize>,
}

/// One layer with its resolved input/output shapes and weight location.
#[derive(Clone, Debug)]
pub struct LayerPlan {
    pub layer: Layer,
    pub input: Shape,
    pub output: Shape,
    pub weights: Option<WeightSlice>,
}

fn checked_count(parts: &[usize]) -> Result<usize> {
    let mut n: u64 = 1;
    for &p in parts {
        n = n
            .checked_mul(p as u64)
            .filter(|&n| n <= (1 << 32))
            .ok_or_else(|| Error::ModelSpec("parameter count overflows".into()))?;
    }
    Ok(n as usize)
}

pub fn conv_output_extent(extent: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = extent + 2 * pad;
    if padded < k || stride == 0 {
        return Err(Error::ModelSpec(format!(
            "kernel {k} does not fit extent {extent} with pad {pad}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Error::ModelSpec(e.to_string()))?;
        spec.plan()?;
        Ok(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    /// Resolve shapes and weight offsets, enforcing the invariants: shapes
    /// chain, pooling divides evenly, the last layer (and only it) is the
    /// approximate softmax, and the logits length equals `classes`.
    pub fn plan(&self) -> Result<Vec<LayerPlan>> {
        const MAX_EXTENT: usize = 1 << 16;
        if self.layers.is_empty() {
            return Err(Error::ModelSpec("no layers".into()));
        }
        let [h, w, c] = self.input;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::ModelSpec("empty input shape".into()));
        }
        if h > MAX_EXTENT || w > MAX_EXTENT || c > MAX_EXTENT || self.classes > MAX_EXTENT {
            return Err(Error::ModelSpec("implausibly large input shape".into()));
        }
        for (li, layer) in self.layers.iter().enumerate() {
            let too_big = match layer {
                Layer::Conv2d { out_ch, kh, kw, stride, pad, .. } => {
                    [*out_ch, *kh, *kw, *stride, *pad].iter().any(|&v| v > MAX_EXTENT)
                }
                Layer::AvgPool { ph, pw } => *ph > MAX_EXTENT || *pw > MAX_EXTENT,
                Layer::Dense { out_dim, .. } => *out_dim > MAX_EXTENT,
                _ => false,
            };
            if too_big {
                return Err(Error::ModelSpec(format!("layer {li}: implausibly large parameter")));
            }
        }
        let mut shape = Shape::Map { h, w, c };
        let mut offset = 0usize;
        let mut plans = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let last = li == self.layers.len() - 1;
            let (output, weights) = match layer {
                Layer::Conv2d { out_ch, kh, kw, stride, pad, .. } => {
                    let Shape::Map { h, w, c } = shape else {
                        return Err(Error::ModelSpec(format!("layer {li}: conv2d needs a feature map")));
                    };
                    if *out_ch == 0 || *kh == 0 || *kw == 0 {
                        return Err(Error::ModelSpec(format!("layer {li}: degenerate conv2d")));
                    }
                    let oh = conv_output_extent(h, *kh, *stride, *pad)?;
                    let ow = conv_output_extent(w, *kw, *stride, *pad)?;
                    let k_len = checked_count(&[*kh, *kw, c, *out_ch])?;
                    let slice = WeightSlice {
                        kernel: offset..offset + k_len,
                        bias: offset + k_len..offset + k_len + out_ch,
                    };
                    offset = slice.bias.end;
                    (Shape::Map { h: oh, w: ow, c: *out_ch }, Some(slice))
                }
                Layer::AvgPool { ph, pw } => {
                    let Shape::Map { h, w, c } = shape else {
                        return Err(Error::ModelSpec(format!("layer {li}: avgpool needs a feature map")));
                    };
                    if *ph == 0 || *pw == 0 || h % ph != 0 || w % pw != 0 {
                        return Err(Error::ModelSpec(format!(
                            "layer {li}: pool {ph}x{pw} does not divide {h}x{w}"
                        )));
                    }
                    (Shape::Map { h: h / ph, w: w / pw, c }, None)
                }
                Layer::Relu => (shape, None),
                Layer::Flatten => (Shape::Flat(shape.numel()), None),
                Layer::Dense { out_dim, .. } => {
                    let Shape::Flat(n) = shape else {
                        return Err(Error::ModelSpec(format!("layer {li}: dense needs a flat input")));
                    };
                    if *out_dim == 0 {
                        return Err(Error::ModelSpec(format!("layer {li}: dense output of width zero")));
                    }
                    let k_len = checked_count(&[*out_dim, n])?;
                    let slice = WeightSlice {
                        kernel: offset..offset + k_len,
                        bias: offset + k_len..offset + k_len + out_dim,
                    };
                    offset = slice.bias.end;
                    (Shape::Flat(*out_dim), Some(slice))
                }
                Layer::ApproxSoftmax => {
                    if !last {
                        return Err(Error::ModelSpec(format!(
                            "layer {li}: approx_softmax before the end"
                        )));
                    }
                    let Shape::Flat(n) = shape else {
                        return Err(Error::ModelSpec("approx_softmax needs logits".into()));
                    };
                    if n != self.classes {
                        return Err(Error::ModelSpec(format!(
                            "{n} logits for {} classes",
                            self.classes
                        )));
                    }
                    (shape, None)
                }
            };
            plans.push(LayerPlan { layer: layer.clone(), input: shape, output, weights });
            shape = output;
        }
        if !matches!(plans.last().map(|p| &p.layer), Some(Layer::ApproxSoftmax)) {
            return Err(Error::ModelSpec("final layer must be approx_softmax".into()));
        }
        Ok(plans)
    }

    pub fn total_params(&self) -> Result<usize> {
        Ok(self
            .plan()?
            .iter()
            .filter_map(|p| p.weights.as_ref())
            .map(|w| w.kernel.len() + w.bias.len())
            .sum())
    }
}

/// Lower a (h, w, c) share map into patch rows for the kernel matrix:
/// row per output position, columns ordered `(kh, kw, c)`. Padding inserts
/// shares of zero. Pure data movement, identical on every party.
fn im2col_share(
    frame: &ShareTensor,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Result<(ShareTensor, usize, usize)> {
    let [h, w, c] = frame.dims[..] else {
        return Err(Error::ShapeMismatch("im2col needs (h, w, c)".into()));
    };
    let oh = conv_output_extent(h, kh, stride, pad)?;
    let ow = conv_output_extent(w, kw, stride, pad)?;
    let cols = kh * kw * c;
    let mut first = vec![RingElement::ZERO; oh * ow * cols];
    let mut second = vec![RingElement::ZERO; oh * ow * cols];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = (oy * ow + ox) * cols;
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
                    let src = (iy * w + ix) * c;
                    let dst = row + (ky * kw + kx) * c;
                    first[dst..dst + c].copy_from_slice(&frame.first[src..src + c]);
                    second[dst..dst + c].copy_from_slice(&frame.second[src..src + c]);
                }
            }
        }
    }
    let patches = ShareTensor::new(frame.holder, vec![oh * ow, cols], first, second)?;
    Ok((patches, oh, ow))
}

fn add_bias_rows(acc: &ShareTensor, bias_lifted: &ShareTensor, rows: usize) -> Result<ShareTensor> {
    let width = bias_lifted.len();
    let mut out = acc.clone();
    for r in 0..rows {
        let base = r * width;
        for j in 0..width {
            out.first[base + j] += bias_lifted.first[j];
            out.second[base + j] += bias_lifted.second[j];
        }
    }
    Ok(out)
}

/// Secure 2-D convolution via im2col lowering: all products ride one
/// batched matrix multiplication and each output element is truncated
/// once, after accumulation.
pub fn secure_conv2d<C: Channel>(
    ctx: &mut SessionContext<C>,
    frame: &ShareTensor,
    kernel: &ShareTensor,
    bias: &ShareTensor,
    stride: usize,
    pad: usize,
) -> Result<ShareTensor> {
    let [kh, kw, kc, oc] = kernel.dims[..] else {
        return Err(Error::ShapeMismatch("kernel must be (kh, kw, c, out_ch)".into()));
    };
    let c_in = *frame.dims.get(2).ok_or_else(|| Error::ShapeMismatch("frame must be (h, w, c)".into()))?;
    if kc != c_in || bias.len() != oc {
        return Err(Error::ShapeMismatch("kernel/bias do not match frame channels".into()));
    }
    let (patches, oh, ow) = im2col_share(frame, kh, kw, stride, pad)?;
    let kmat = kernel.clone().reshape(vec![kh * kw * kc, oc])?;
    let raw = ctx.pi_dmm(&patches, &kmat)?;
    let lifted = bias.scale_public(RingElement(1u64 << ctx.codec.frac_bits));
    let with_bias = add_bias_rows(&raw, &lifted, oh * ow)?;
    let out = ctx.pi_trunc_vec(&with_bias, ctx.codec.frac_bits)?;
    out.reshape(vec![oh, ow, oc])
}

/// Secure average pooling: window sums scaled by the public constant
/// `encode(1 / (ph * pw))`, truncated once.
pub fn secure_avgpool<C: Channel>(
    ctx: &mut SessionContext<C>,
    map: &ShareTensor,
    ph: usize,
    pw: usize,
) -> Result<ShareTensor> {
    let [h, w, c] = map.dims[..] else {
        return Err(Error::ShapeMismatch("avgpool needs (h, w, c)".into()));
    };
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::ShapeMismatch(format!("pool {ph}x{pw} does not divide {h}x{w}")));
    }
    let (oh, ow) = (h / ph, w / pw);
    let mut sums = ShareTensor::zeros(map.holder, vec![oh, ow, c]);
    for oy in 0..oh {
        for ox in 0..ow {
            for dy in 0..ph {
                for dx in 0..pw {
                    let src = ((oy * ph + dy) * w + (ox * pw + dx)) * c;
                    let dst = (oy * ow + ox) * c;
                    for ch in 0..c {
                        sums.first[dst + ch] += map.first[src + ch];
                        sums.second[dst + ch] += map.second[src + ch];
                    }
                }
            }
        }
    }
    let inv = ctx.codec.encode(1.0 / (ph * pw) as f64)?;
    let scaled = sums.scale_public(inv);
    ctx.pi_trunc_vec(&scaled, ctx.codec.frac_bits)
}

/// Secure dense layer `Wx + b` on a flat share vector.
pub fn secure_dense<C: Channel>(
    ctx: &mut SessionContext<C>,
    x: &ShareTensor,
    w: &ShareTensor,
    bias: &ShareTensor,
) -> Result<ShareTensor> {
    let [out_dim, in_dim] = w.dims[..] else {
        return Err(Error::ShapeMismatch("dense weights must be (out, in)".into()));
    };
    if x.len() != in_dim || bias.len() != out_dim {
        return Err(Error::ShapeMismatch(format!(
            "dense {out_dim}x{in_dim} applied to {} inputs, {} biases",
            x.len(),
            bias.len()
        )));
    }
    let xv = x.clone().reshape(vec![in_dim, 1])?;
    let raw = ctx.pi_dmm(w, &xv)?;
    let lifted = bias.scale_public(RingElement(1u64 << ctx.codec.frac_bits));
    let with_bias = raw.reshape(vec![out_dim])?.add(&lifted)?;
    let out = ctx.pi_trunc_vec(&with_bias, ctx.codec.frac_bits)?;
    out.reshape(vec![out_dim])
}

/// Approximate softmax: RELU-normalized ratios with a uniform `1/C`
/// fallback when no logit is positive. Branches become multiplications by
/// the shared comparison bit, so the message pattern is branch-free.
pub fn pi_soft<C: Channel>(ctx: &mut SessionContext<C>, logits: &ShareTensor) -> Result<ShareTensor> {
    let classes = logits.len();
    if classes == 0 {
        return Err(Error::EmptyInput("softmax over no classes".into()));
    }
    let enc_one = ctx.codec.one();
    let enc_c = RingElement(enc_one.0 * classes as u64);

    let relu = ctx.pi_relu_vec(logits)?;
    let sum = ShareTensor::scalar(relu.sum());
    let zero = ctx.public_scalar(RingElement::ZERO);
    let cn = ctx.pi_lt_vec(&zero, &sum)?; // [0 < sum of RELUs]

    // denom = cn * sum + (1 - cn) * C
    let cn_sum = ctx.pi_dm_vec(&cn, &sum)?;
    let denom = cn_sum.add(&cn.scale_public(enc_c).neg().add_public(enc_c))?;

    let one = ctx.public_scalar(enc_one);
    let denom_inv = ctx.pi_div_vec(&one, &denom)?;

    // numer_i = cn * relu_i + (1 - cn), at fixed-point scale
    let cn_rep = {
        let mut first = Vec::with_capacity(classes);
        let mut second = Vec::with_capacity(classes);
        for _ in 0..classes {
            first.push(cn.first[0]);
            second.push(cn.second[0]);
        }
        ShareTensor::new(cn.holder, vec![classes], first, second)?
    };
    let cn_relu = ctx.pi_dm_vec(&cn_rep, &relu)?;
    let numer = cn_relu.add(&cn_rep.scale_public(enc_one).neg().add_public(enc_one))?;

    let inv_rep = {
        let mut first = Vec::with_capacity(classes);
        let mut second = Vec::with_capacity(classes);
        for _ in 0..classes {
            first.push(denom_inv.first[0]);
            second.push(denom_inv.second[0]);
        }
        ShareTensor::new(denom_inv.holder, vec![classes], first, second)?
    };
    ctx.pi_fpmul_vec(&numer, &inv_rep)
}

/// Secure inference over one frame: every layer in model order, ending in
/// the approximate softmax.
pub fn pi_finfer<C: Channel>(
    ctx: &mut SessionContext<C>,
    model: &ModelSpec,
    weights: &ShareTensor,
    frame: &ShareTensor,
) -> Result<ShareTensor> {
    let plans = model.plan()?;
    if frame.dims != vec![model.input[0], model.input[1], model.input[2]] {
        return Err(Error::ShapeMismatch(format!(
            "frame dims {:?} vs model input {:?}",
            frame.dims, model.input
        )));
    }
    if weights.len() != model.total_params()? {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for a model of {} parameters",
            weights.len(),
            model.total_params()?
        )));
    }
    let mut acc = frame.clone();
    for plan in &plans {
        acc = match &plan.layer {
            Layer::Conv2d { out_ch, kh, kw, stride, pad, .. } => {
                let ws = plan.weights.as_ref().unwrap();
                let Shape::Map { c, .. } = plan.input else { unreachable!() };
                let kernel = weights
                    .slice(ws.kernel.clone())
                    .reshape(vec![*kh, *kw, c, *out_ch])?;
                let bias = weights.slice(ws.bias.clone());
                secure_conv2d(ctx, &acc, &kernel, &bias, *stride, *pad)?
            }
            Layer::AvgPool { ph, pw } => secure_avgpool(ctx, &acc, *ph, *pw)?,
            Layer::Relu => {
                let dims = acc.dims.clone();
                ctx.pi_relu_vec(&acc)?.reshape(dims)?
            }
            Layer::Flatten => acc.reshape(vec![plan.output.numel()])?,
            Layer::Dense { out_dim, .. } => {
                let ws = plan.weights.as_ref().unwrap();
                let w = weights
                    .slice(ws.kernel.clone())
                    .reshape(vec![*out_dim, plan.input.numel()])?;
                let bias = weights.slice(ws.bias.clone());
                secure_dense(ctx, &acc, &w, &bias)?
            }
            Layer::ApproxSoftmax => pi_soft(ctx, &acc)?,
        };
    }
    Ok(acc)
}
