//! Oblivious frame selection and single-frame-method video classification
//! with secure label aggregation.
//!
//! Selection multiplies a secret one-hot matrix against the flattened
//! video. The one-hot entries are raw ring 0/1, not fixed-point scaled, so
//! the products need no truncation and selection is bit-exact. Flattening
//! is a dims-only view change and moves no data.

use crate::error::{Error, Result};
use crate::nn::{pi_finfer, ModelSpec};
use crate::protocols::SessionContext;
use crate::ring::RingElement;
use crate::sharing::{reconstruct, ReplicatedShare, ShareTensor};
use crate::transport::Channel;

/// Build the plaintext one-hot selection matrix `B` (`n x N`, row-major)
/// from 1-based frame indices. Duplicate indices are allowed; they make
/// the corresponding frame count twice in the aggregation.
pub fn build_selection(indices: &[usize], n_frames: usize) -> Result<Vec<RingElement>> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("no frame indices".into()));
    }
    let mut rows = vec![RingElement::ZERO; indices.len() * n_frames];
    for (row, &idx) in indices.iter().enumerate() {
        if idx == 0 || idx > n_frames {
            return Err(Error::ShapeMismatch(format!(
                "frame index {idx} out of 1..={n_frames}"
            )));
        }
        rows[row * n_frames + (idx - 1)] = RingElement::ONE;
    }
    Ok(rows)
}

/// Oblivious frame selection: reshape, one secure matrix product, reshape.
pub fn pi_fselect<C: Channel>(
    ctx: &mut SessionContext<C>,
    video: &ShareTensor,
    selection: &ShareTensor,
) -> Result<ShareTensor> {
    let [n_total, h, w, c] = video.dims[..] else {
        return Err(Error::ShapeMismatch("video must be (N, h, w, c)".into()));
    };
    let [n_sel, n_cols] = selection.dims[..] else {
        return Err(Error::ShapeMismatch("selection must be (n, N)".into()));
    };
    if n_cols != n_total {
        return Err(Error::ShapeMismatch(format!(
            "selection over {n_cols} frames, video has {n_total}"
        )));
    }
    let flat = video.clone().reshape(vec![n_total, h * w * c])?;
    let picked = ctx.pi_dmm(selection, &flat)?;
    picked.reshape(vec![n_sel, h, w, c])
}

/// Classify a video with the single-frame method: select frames, infer a
/// probability distribution per frame, sum per class, and take the secure
/// argmax. Returns a share of the label as a raw ring integer.
pub fn pi_labelvideo<C: Channel>(
    ctx: &mut SessionContext<C>,
    video: &ShareTensor,
    selection: &ShareTensor,
    model: &ModelSpec,
    weights: &ShareTensor,
) -> Result<ReplicatedShare> {
    let frames = pi_fselect(ctx, video, selection)?;
    let [n_sel, h, w, c] = frames.dims[..] else { unreachable!() };
    let frame_len = h * w * c;
    let mut prob_sum = ShareTensor::zeros(ctx.party(), vec![model.classes]);
    for j in 0..n_sel {
        let frame = frames
            .slice(j * frame_len..(j + 1) * frame_len)
            .reshape(vec![h, w, c])?;
        let sm = pi_finfer(ctx, model, weights, &frame)?;
        prob_sum = prob_sum.add(&sm)?;
    }
    ctx.pi_argmax(&prob_sum)
}

/// Alice-side recombination of the parties' label shares. Two shares
/// suffice; passing all three checks every replication overlap.
pub fn reveal_label(shares: &[ReplicatedShare]) -> Result<u64> {
    if shares.len() < 2 {
        return Err(Error::Integrity("need at least two label shares".into()));
    }
    let mut value = None;
    for i in 0..shares.len() {
        for j in i + 1..shares.len() {
            let v = reconstruct(&shares[i], &shares[j])?;
            if let Some(prev) = value {
                if prev != v {
                    return Err(Error::Integrity("label shares disagree".into()));
                }
            }
            value = Some(v);
        }
    }
    Ok(value.unwrap().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preproc::PreprocBudget;
    use crate::ring::FixedPointCodec;
    use crate::runner::{local_contexts, run_three};
    use crate::sharing::{deal_tensor, reconstruct_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn selection_matrix_examples() {
        // select frames 2 and 4 of 4
        let b = build_selection(&[2, 4], 4).unwrap();
        let got: Vec<u64> = b.iter().map(|v| v.0).collect();
        assert_eq!(got, vec![0, 1, 0, 0, 0, 0, 0, 1]);
        // singleton video
        let b = build_selection(&[1], 1).unwrap();
        assert_eq!(b, vec![RingElement::ONE]);
        // every-15th-frame sampler
        let idx: Vec<usize> = (0..5).map(|k| 1 + 15 * k).collect();
        let b = build_selection(&idx, 120).unwrap();
        for (row, &i) in idx.iter().enumerate() {
            for col in 0..120 {
                let want = u64::from(col == i - 1);
                assert_eq!(b[row * 120 + col].0, want);
            }
        }
        assert!(build_selection(&[5], 4).is_err());
        assert!(build_selection(&[0], 4).is_err());
        assert!(build_selection(&[], 4).is_err());
    }

    #[test]
    fn fselect_fig2_instance_bit_exact() {
        // N=4 frames of 2x2x1; select frames 2 and 4
        let codec = FixedPointCodec::default();
        let pixels: Vec<f64> = (0..16).map(|i| i as f64 / 8.0).collect();
        let video = codec.encode_all(&pixels).unwrap();
        let selection = build_selection(&[2, 4], 4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(70);
        let vsh = deal_tensor(&video, &[4, 2, 2, 1], &mut rng).unwrap();
        let bsh = deal_tensor(&selection, &[2, 4], &mut rng).unwrap();
        let ctxs = local_contexts(&PreprocBudget::zero(), [70u8; 32], [5u8; 16]).unwrap();
        let outs = run_three(ctxs, move |p, ctx| {
            pi_fselect(ctx, &vsh[p.idx0()], &bsh[p.idx0()])
        })
        .unwrap();
        let got = reconstruct_tensor(&outs[0], &outs[2]).unwrap();
        assert_eq!(outs[0].dims, vec![2, 2, 2, 1]);
        assert_eq!(got, [&video[4..8], &video[12..16]].concat());
    }

    #[test]
    fn fselect_identity_returns_whole_video() {
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let video: Vec<RingElement> = (0..24).map(|_| RingElement(rng.random())).collect();
        let ident = build_selection(&[1, 2, 3], 3).unwrap();
        let vsh = deal_tensor(&video, &[3, 2, 2, 2], &mut rng).unwrap();
        let bsh = deal_tensor(&ident, &[3, 3], &mut rng).unwrap();
        let ctxs = local_contexts(&PreprocBudget::zero(), [71u8; 32], [5u8; 16]).unwrap();
        let outs = run_three(ctxs, move |p, ctx| {
            pi_fselect(ctx, &vsh[p.idx0()], &bsh[p.idx0()])
        })
        .unwrap();
        assert_eq!(reconstruct_tensor(&outs[1], &outs[2]).unwrap(), video);
    }

    #[test]
    fn fselect_random_gather_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(72);
        for trial in 0..10 {
            let n_total = rng.random_range(2..8usize);
            let n_sel = rng.random_range(1..5usize);
            let (h, w, c) = (2usize, 3usize, 1usize);
            let video: Vec<RingElement> = (0..n_total * h * w * c)
                .map(|_| RingElement(rng.random()))
                .collect();
            let indices: Vec<usize> = (0..n_sel).map(|_| rng.random_range(1..=n_total)).collect();
            let sel = build_selection(&indices, n_total).unwrap();
            let vsh = deal_tensor(&video, &[n_total, h, w, c], &mut rng).unwrap();
            let bsh = deal_tensor(&sel, &[n_sel, n_total], &mut rng).unwrap();
            let ctxs =
                local_contexts(&PreprocBudget::zero(), [72 + trial as u8; 32], [5u8; 16]).unwrap();
            let outs = run_three(ctxs, move |p, ctx| {
                pi_fselect(ctx, &vsh[p.idx0()], &bsh[p.idx0()])
            })
            .unwrap();
            let got = reconstruct_tensor(&outs[0], &outs[1]).unwrap();
            let frame_len = h * w * c;
            let want: Vec<RingElement> = indices
                .iter()
                .flat_map(|&i| video[(i - 1) * frame_len..i * frame_len].to_vec())
                .collect();
            assert_eq!(got, want, "trial {trial} indices {indices:?}");
        }
    }

    #[test]
    fn fselect_transcript_shape_is_selection_independent() {
        let mut rng = ChaCha12Rng::seed_from_u64(73);
        let video: Vec<RingElement> = (0..16).map(|_| RingElement(rng.random())).collect();
        let shapes: Vec<Vec<(u8, u8, u64)>> = [[1usize, 2], [3, 4]]
            .into_iter()
            .map(|idx| {
                let sel = build_selection(&idx, 4).unwrap();
                let vsh = deal_tensor(&video, &[4, 2, 2, 1], &mut rng).unwrap();
                let bsh = deal_tensor(&sel, &[2, 4], &mut rng).unwrap();
                let ctxs = local_contexts(&PreprocBudget::zero(), [73u8; 32], [5u8; 16]).unwrap();
                let outs = run_three(ctxs, move |p, ctx| {
                    pi_fselect(ctx, &vsh[p.idx0()], &bsh[p.idx0()])?;
                    Ok(ctx.take_transcript().shape())
                })
                .unwrap();
                outs.into_iter().flatten().collect()
            })
            .collect();
        assert!(!shapes[0].is_empty());
        assert_eq!(shapes[0], shapes[1]);
    }

    #[test]
    fn reveal_label_checks_integrity() {
        let shares = crate::sharing::deal_from_parts(
            RingElement(5),
            RingElement(1000),
            RingElement(2000),
        );
        assert_eq!(reveal_label(&shares).unwrap(), 5);
        assert_eq!(reveal_label(&shares[..2]).unwrap(), 5);
        let zero = crate::sharing::deal_from_parts(RingElement(0), RingElement(9), RingElement(8));
        assert_eq!(reveal_label(&zero).unwrap(), 0);
        let mut tampered = shares;
        tampered[1].first += RingElement(1);
        assert!(matches!(
            reveal_label(&tampered),
            Err(Error::Integrity(_))
        ));
        assert!(reveal_label(&shares[..1]).is_err());
    }
}
