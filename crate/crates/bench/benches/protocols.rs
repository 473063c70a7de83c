//! Micro-benchmarks of the protocol layer over the loopback transport.
//! Setup (dealing, wiring, preprocessing) is excluded from the measured
//! routine via `iter_batched`.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use secvid_core::nn::{Layer, ModelSpec};
use secvid_core::preproc::{budget_for, PreprocBudget};
use secvid_core::ring::{FixedPointCodec, RingElement};
use secvid_core::runner::{classify_local, local_contexts, run_three};
use secvid_core::sharing::deal_tensor;
use secvid_core::video::{build_selection, pi_fselect};

fn random_ring(n: usize, rng: &mut ChaCha12Rng) -> Vec<RingElement> {
    (0..n).map(|_| RingElement(rng.random())).collect()
}

fn bench_dm(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let n = 4096usize;
    let xs = deal_tensor(&random_ring(n, &mut rng), &[n], &mut rng).unwrap();
    let ys = deal_tensor(&random_ring(n, &mut rng), &[n], &mut rng).unwrap();
    c.bench_function("pi_dm_4096_lanes", |b| {
        b.iter_batched(
            || {
                (
                    local_contexts(&PreprocBudget::zero(), [1u8; 32], [1u8; 16]).unwrap(),
                    xs.clone(),
                    ys.clone(),
                )
            },
            |(ctxs, xs, ys)| {
                run_three(ctxs, move |p, ctx| {
                    ctx.pi_dm_vec(&xs[p.idx0()], &ys[p.idx0()])
                })
                .unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_lt(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let n = 1024usize;
    // operands bounded as the comparison contract requires
    let bounded: Vec<RingElement> = (0..n)
        .map(|_| RingElement::from_signed(rng.random_range(-(1i64 << 60)..(1i64 << 60))))
        .collect();
    let xs = deal_tensor(&bounded, &[n], &mut rng).unwrap();
    let ys = deal_tensor(&random_ring(n, &mut rng).iter().map(|v| RingElement(v.0 >> 4)).collect::<Vec<_>>(), &[n], &mut rng).unwrap();
    let budget = PreprocBudget::for_comparisons(n as u64);
    c.bench_function("pi_lt_1024_lanes", |b| {
        b.iter_batched(
            || {
                (
                    local_contexts(&budget, [2u8; 32], [2u8; 16]).unwrap(),
                    xs.clone(),
                    ys.clone(),
                )
            },
            |(ctxs, xs, ys)| {
                run_three(ctxs, move |p, ctx| {
                    ctx.pi_lt_vec(&xs[p.idx0()], &ys[p.idx0()])
                })
                .unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_fselect(c: &mut Criterion) {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let (n_total, h, w) = (32usize, 16usize, 16usize);
    let video = deal_tensor(
        &random_ring(n_total * h * w, &mut rng),
        &[n_total, h, w, 1],
        &mut rng,
    )
    .unwrap();
    let indices: Vec<usize> = (0..4).map(|k| 1 + 8 * k).collect();
    let sel = build_selection(&indices, n_total).unwrap();
    let sel_sh = deal_tensor(&sel, &[4, n_total], &mut rng).unwrap();
    c.bench_function("pi_fselect_4_of_32_frames", |b| {
        b.iter_batched(
            || {
                (
                    local_contexts(&PreprocBudget::zero(), [3u8; 32], [3u8; 16]).unwrap(),
                    video.clone(),
                    sel_sh.clone(),
                )
            },
            |(ctxs, video, sel)| {
                run_three(ctxs, move |p, ctx| {
                    pi_fselect(ctx, &video[p.idx0()], &sel[p.idx0()])
                })
                .unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_classify(c: &mut Criterion) {
    let codec = FixedPointCodec::default();
    let model = ModelSpec {
        input: [6, 6, 1],
        classes: 3,
        layers: vec![
            Layer::Conv2d { out_ch: 2, kh: 3, kw: 3, stride: 1, pad: 0, weights: "conv1".into() },
            Layer::Relu,
            Layer::AvgPool { ph: 2, pw: 2 },
            Layer::Flatten,
            Layer::Dense { out_dim: 3, weights: "fc1".into() },
            Layer::ApproxSoftmax,
        ],
    };
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let pixels: Vec<f64> = (0..4 * 36).map(|_| rng.random_range(0.0..1.0)).collect();
    let video = codec.encode_all(&pixels).unwrap();
    let weights_f: Vec<f64> = (0..47).map(|_| rng.random_range(-0.4..0.4)).collect();
    let weights = codec.encode_all(&weights_f).unwrap();
    let sel = build_selection(&[2, 4], 4).unwrap();
    let vsh = deal_tensor(&video, &[4, 6, 6, 1], &mut rng).unwrap();
    let ssh = deal_tensor(&sel, &[2, 4], &mut rng).unwrap();
    let wsh = deal_tensor(&weights, &[47], &mut rng).unwrap();
    let budget = budget_for(&model, &[4, 6, 6, 1], 2, 16).unwrap();

    let mut group = c.benchmark_group("classify");
    group.sample_size(10);
    group.bench_function("small_convnet_two_frames", |b| {
        b.iter(|| classify_local(&model, &vsh, &ssh, &wsh, &budget, [4u8; 32], [4u8; 16]).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_dm, bench_lt, bench_fselect, bench_classify);
criterion_main!(benches);
