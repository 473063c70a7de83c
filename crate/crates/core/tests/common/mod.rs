//! Shared fixtures: toy and full-scale model shapes, seeded instance
//! generation, and dealing helpers.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use secvid_core::nn::{Layer, ModelSpec};
use secvid_core::oracle::PlainTensor;
use secvid_core::ring::{FixedPointCodec, RingElement};
use secvid_core::sharing::{deal_tensor, ShareTensor};

/// Small ConvNet for end-to-end tests: 16x16x1 frames, 7 classes,
/// about fifty thousand parameters.
pub fn toy_model() -> ModelSpec {
    ModelSpec {
        input: [16, 16, 1],
        classes: 7,
        layers: vec![
            Layer::Conv2d { out_ch: 8, kh: 3, kw: 3, stride: 1, pad: 1, weights: "conv1".into() },
            Layer::Relu,
            Layer::AvgPool { ph: 2, pw: 2 },
            Layer::Conv2d { out_ch: 16, kh: 3, kw: 3, stride: 1, pad: 1, weights: "conv2".into() },
            Layer::Relu,
            Layer::AvgPool { ph: 2, pw: 2 },
            Layer::Flatten,
            Layer::Dense { out_dim: 176, weights: "fc1".into() },
            Layer::Relu,
            Layer::Dense { out_dim: 7, weights: "fc2".into() },
            Layer::ApproxSoftmax,
        ],
    }
}

/// The evaluation architecture shape: 48x48 gray frames, seven classes,
/// [(CONV-RELU)-POOL]-[(CONV-RELU)*2-POOL]*2-[FC-RELU]*2-[FC-SOFTMAX],
/// about 1.49 million parameters.
pub fn fullsize_model() -> ModelSpec {
    ModelSpec {
        input: [48, 48, 1],
        classes: 7,
        layers: vec![
            Layer::Conv2d { out_ch: 32, kh: 3, kw: 3, stride: 1, pad: 1, weights: "conv1".into() },
            Layer::Relu,
            Layer::AvgPool { ph: 2, pw: 2 },
            Layer::Conv2d { out_ch: 64, kh: 3, kw: 3, stride: 1, pad: 1, weights: "conv2".into() },
            Layer::Relu,
            Layer::Conv2d { out_ch: 64, kh: 3, kw: 3, stride: 1, pad: 1, weights: "conv3".into() },
            Layer::Relu,
            Layer::AvgPool { ph: 2, pw: 2 },
            Layer::Conv2d { out_ch: 128, kh: 3, kw: 3, stride: 1, pad: 1, weights: "conv4".into() },
            Layer::Relu,
            Layer::Conv2d { out_ch: 128, kh: 3, kw: 3, stride: 1, pad: 1, weights: "conv5".into() },
            Layer::Relu,
            Layer::AvgPool { ph: 2, pw: 2 },
            Layer::Flatten,
            Layer::Dense { out_dim: 256, weights: "fc1".into() },
            Layer::Relu,
            Layer::Dense { out_dim: 128, weights: "fc2".into() },
            Layer::Relu,
            Layer::Dense { out_dim: 7, weights: "fc3".into() },
            Layer::ApproxSoftmax,
        ],
    }
}

/// Uniform weights scaled by the layer fan-in, the usual recipe that
/// keeps activations and logits at unit order.
pub fn random_weights(model: &ModelSpec, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let plans = model.plan().expect("valid model");
    let mut out = Vec::new();
    for plan in &plans {
        let Some(ws) = &plan.weights else { continue };
        let fan_in = match &plan.layer {
            Layer::Conv2d { kh, kw, .. } => {
                let c = match plan.input {
                    secvid_core::nn::Shape::Map { c, .. } => c,
                    _ => unreachable!(),
                };
                kh * kw * c
            }
            Layer::Dense { .. } => plan.input.numel(),
            _ => unreachable!(),
        };
        let scale = 1.0 / (fan_in as f64).sqrt();
        for _ in 0..ws.kernel.len() {
            out.push(rng.random_range(-scale..scale));
        }
        for _ in 0..ws.bias.len() {
            out.push(rng.random_range(-0.1..0.1));
        }
    }
    out
}

pub fn random_pixels(n: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

pub struct Instance {
    pub model: ModelSpec,
    pub video: PlainTensor,
    pub indices: Vec<usize>,
    pub weights: PlainTensor,
}

/// A seeded random classification instance over the toy model.
pub fn toy_instance(seed: u64, n_total: usize, n_selected: usize) -> Instance {
    let codec = FixedPointCodec::default();
    let model = toy_model();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let [h, w, c] = model.input;
    let pixels = random_pixels(n_total * h * w * c, &mut rng);
    let video = PlainTensor::from_reals(&codec, vec![n_total, h, w, c], &pixels).unwrap();
    let weights_f = random_weights(&model, &mut rng);
    let weights = PlainTensor::from_reals(&codec, vec![weights_f.len()], &weights_f).unwrap();
    let indices: Vec<usize> = (0..n_selected)
        .map(|_| rng.random_range(1..=n_total))
        .collect();
    Instance { model, video, indices, weights }
}

pub fn deal3(vals: &[RingElement], dims: &[usize], rng: &mut ChaCha12Rng) -> [ShareTensor; 3] {
    deal_tensor(vals, dims, rng).unwrap()
}

/// Deal every tensor of an instance for the three parties.
pub fn deal_instance(
    inst: &Instance,
    rng: &mut ChaCha12Rng,
) -> ([ShareTensor; 3], [ShareTensor; 3], [ShareTensor; 3]) {
    let selection = secvid_core::video::build_selection(&inst.indices, inst.video.dims[0]).unwrap();
    let video = deal3(&inst.video.vals, &inst.video.dims, rng);
    let sel = deal3(&selection, &[inst.indices.len(), inst.video.dims[0]], rng);
    let weights = deal3(&inst.weights.vals, &[inst.weights.numel()], rng);
    (video, sel, weights)
}
