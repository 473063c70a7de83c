//! Exact signed comparison from preprocessed random bits.
//!
//! To test the sign of `d` (with `|signed(d)| < 2^62`), the parties shift
//! it into `D = d + 2^62`, whose unsigned value lies strictly inside
//! `(0, 2^63)`, and open `c = D + r` under a mask `r` that is uniform over
//! the whole ring, so the opening reveals nothing. Writing `c' = c mod 2^63`
//! and `r' = r mod 2^63`, the integer identity
//!
//! ```text
//! D = c' - r' + 2^63 * [c' < r']
//! ```
//!
//! reduces `[D < 2^62]` to bitwise comparisons of the shared mask bits
//! against three public thresholds derived from `c'`:
//!
//! ```text
//! ltz = (1 - w) * [r' > c' - 2^62] + w * [r' > c' + 2^62],   w = [r' > c']
//! ```
//!
//! All three run as one batch of prefix-product circuits; thresholds that
//! fall outside `[0, 2^63)` are decided publicly but still evaluated, so
//! the transcript shape never depends on the opened values.

use super::SessionContext;
use crate::error::Result;
use crate::ring::RingElement;
use crate::sharing::ShareTensor;
use crate::transport::{Channel, PartyId};

const MASK63: u64 = (1u64 << 63) - 1;
const HALF62: u64 = 1u64 << 62;

/// Lanes per block; bounds the working set of the bit circuits while the
/// block count stays a function of public shapes only.
const LTZ_BLOCK: usize = 16384;

/// Lane-wise share of `[signed(d) < 0]` as a raw 0/1 ring element.
pub(super) fn ltz_vec<C: Channel>(
    ctx: &mut SessionContext<C>,
    d: &ShareTensor,
) -> Result<ShareTensor> {
    if d.len() > LTZ_BLOCK {
        let mut parts = Vec::new();
        let mut start = 0;
        while start < d.len() {
            let end = (start + LTZ_BLOCK).min(d.len());
            parts.push(ltz_block(ctx, &d.slice(start..end))?);
            start = end;
        }
        let refs: Vec<&ShareTensor> = parts.iter().collect();
        return ShareTensor::concat(&refs)?.reshape(d.dims.clone());
    }
    ltz_block(ctx, d)
}

fn ltz_block<C: Channel>(ctx: &mut SessionContext<C>, d: &ShareTensor) -> Result<ShareTensor> {
    let n = d.len();
    let party = ctx.party();
    if n == 0 {
        return Ok(ShareTensor::zeros(party, vec![0]));
    }

    // mask with 64 shared random bits per lane and open
    let bits = ctx.material.take_bits(64 * n)?;
    let mut r_first = vec![RingElement::ZERO; n];
    let mut r_second = vec![RingElement::ZERO; n];
    for lane in 0..n {
        let base = lane * 64;
        for j in 0..64u32 {
            r_first[lane] += RingElement(bits.first[base + j as usize].0.wrapping_shl(j));
            r_second[lane] += RingElement(bits.second[base + j as usize].0.wrapping_shl(j));
        }
    }
    let r = ShareTensor::new(party, vec![n], r_first, r_second)?;
    let shifted = d.add_public(RingElement(HALF62));
    let opened = ctx.open_vec(&shifted.add(&r)?)?;

    // three thresholds per lane, circuit-major lanes: q = t*n + lane
    let width = 3 * n;
    let mut k_vals = vec![0u64; width];
    let mut overrides: Vec<Option<u64>> = vec![None; width];
    for lane in 0..n {
        let cp = opened[lane].0 & MASK63;
        if cp < HALF62 {
            overrides[lane] = Some(1); // r' > negative threshold, always
        } else {
            k_vals[lane] = cp - HALF62;
        }
        k_vals[n + lane] = cp;
        let kb = cp + HALF62;
        if kb > MASK63 {
            overrides[2 * n + lane] = Some(0); // threshold at or above max(r')
            k_vals[2 * n + lane] = MASK63;
        } else {
            k_vals[2 * n + lane] = kb;
        }
    }

    let one_first = RingElement(u64::from(party == PartyId::P1));
    let one_second = RingElement(u64::from(party == PartyId::P3));

    // equality slabs: s[j] holds [r'_j == K_j] for every circuit lane
    let mut s: Vec<ShareTensor> = Vec::with_capacity(63);
    for j in 0..63 {
        let mut first = Vec::with_capacity(width);
        let mut second = Vec::with_capacity(width);
        for (q, &k) in k_vals.iter().enumerate() {
            let bidx = (q % n) * 64 + j;
            let (bf, bs) = (bits.first[bidx], bits.second[bidx]);
            if (k >> j) & 1 == 1 {
                first.push(bf);
                second.push(bs);
            } else {
                first.push(one_first - bf);
                second.push(one_second - bs);
            }
        }
        s.push(ShareTensor::new(party, vec![width], first, second)?);
    }

    // suffix products by doubling: after the loop s[j] = prod_{u=j..62} eq_u
    let mut wnd = 1usize;
    while wnd < 63 {
        let hi = 62 - wnd;
        let xs: Vec<&ShareTensor> = s[0..=hi].iter().collect();
        let ys: Vec<&ShareTensor> = s[wnd..=wnd + hi].iter().collect();
        let z = ctx.pi_dm_vec(&ShareTensor::concat(&xs)?, &ShareTensor::concat(&ys)?)?;
        for (j, slab) in s.iter_mut().enumerate().take(hi + 1) {
            *slab = z.slice(j * width..(j + 1) * width);
        }
        wnd *= 2;
    }

    // q_j = (prod of equalities strictly above j) * r'_j
    let ones = ShareTensor::from_public(party, vec![width], &vec![RingElement::ONE; width])?;
    let mut p_parts: Vec<&ShareTensor> = s[1..63].iter().collect();
    p_parts.push(&ones);
    let mut b_first = Vec::with_capacity(63 * width);
    let mut b_second = Vec::with_capacity(63 * width);
    for j in 0..63 {
        for q in 0..width {
            let bidx = (q % n) * 64 + j;
            b_first.push(bits.first[bidx]);
            b_second.push(bits.second[bidx]);
        }
    }
    let bcols = ShareTensor::new(party, vec![63 * width], b_first, b_second)?;
    let prods = ctx.pi_dm_vec(&ShareTensor::concat(&p_parts)?, &bcols)?;

    // [r' > K] = sum over zero bits of K of the highest-difference products
    let mut res_first = vec![RingElement::ZERO; width];
    let mut res_second = vec![RingElement::ZERO; width];
    for j in 0..63 {
        let off = j * width;
        for (q, &k) in k_vals.iter().enumerate() {
            if (k >> j) & 1 == 0 {
                res_first[q] += prods.first[off + q];
                res_second[q] += prods.second[off + q];
            }
        }
    }
    for (q, ov) in overrides.iter().enumerate() {
        if let Some(v) = ov {
            res_first[q] = RingElement(v * one_first.0);
            res_second[q] = RingElement(v * one_second.0);
        }
    }

    let below = ShareTensor::new(party, vec![n], res_first[..n].to_vec(), res_second[..n].to_vec())?;
    let wrap = ShareTensor::new(
        party,
        vec![n],
        res_first[n..2 * n].to_vec(),
        res_second[n..2 * n].to_vec(),
    )?;
    let above = ShareTensor::new(party, vec![n], res_first[2 * n..].to_vec(), res_second[2 * n..].to_vec())?;

    let diff = above.sub(&below)?;
    let correction = ctx.pi_dm_vec(&wrap, &diff)?;
    below.add(&correction)?.reshape(d.dims.clone())
}

#[cfg(test)]
mod tests {
    use crate::preproc::PreprocBudget;
    use crate::ring::RingElement;
    use crate::runner::{local_contexts, run_three};
    use crate::sharing::{deal_tensor, reconstruct_tensor, ShareTensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn run_lt(xs: Vec<i64>, ys: Vec<i64>, seed: u8) -> Vec<u64> {
        let n = xs.len();
        let xr: Vec<RingElement> = xs.iter().map(|&v| RingElement::from_signed(v)).collect();
        let yr: Vec<RingElement> = ys.iter().map(|&v| RingElement::from_signed(v)).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seed as u64);
        let xsh = deal_tensor(&xr, &[n], &mut rng).unwrap();
        let ysh = deal_tensor(&yr, &[n], &mut rng).unwrap();
        let budget = PreprocBudget::for_comparisons(n as u64);
        let ctxs = local_contexts(&budget, [seed; 32], [seed; 16]).unwrap();
        let outs = run_three(ctxs, move |p, ctx| {
            ctx.pi_lt_vec(&xsh[p.idx0()], &ysh[p.idx0()])
        })
        .unwrap();
        let a = reconstruct_tensor(&outs[0], &outs[1]).unwrap();
        let b = reconstruct_tensor(&outs[1], &outs[2]).unwrap();
        assert_eq!(a, b);
        a.into_iter().map(|v| v.0).collect()
    }

    #[test]
    fn lt_simple_cases() {
        let got = run_lt(
            vec![3 << 16, 5 << 16, 5 << 16, -1, 0, i64::MIN / 4 + 1],
            vec![5 << 16, 3 << 16, 5 << 16, 0, 0, 0],
            31,
        );
        assert_eq!(got, vec![1, 0, 0, 1, 0, 1]);
    }

    #[test]
    fn lt_exhaustive_small_domain() {
        // all signed pairs in [-8, 8] scaled by 2^2 (fixed point a = 2)
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut want = Vec::new();
        for x in -8i64..=8 {
            for y in -8i64..=8 {
                xs.push(x << 2);
                ys.push(y << 2);
                want.push(u64::from(x < y));
            }
        }
        assert_eq!(run_lt(xs, ys, 32), want);
    }

    #[test]
    fn lt_random_in_bound_pairs_and_antisymmetry() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let n = 10_000usize;
        let bound = 1i64 << 61;
        let xs: Vec<i64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        let ys: Vec<i64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        let fwd = run_lt(xs.clone(), ys.clone(), 34);
        let bwd = run_lt(ys.clone(), xs.clone(), 35);
        for i in 0..n {
            assert_eq!(fwd[i], u64::from(xs[i] < ys[i]), "lane {i}");
            let eq = u64::from(xs[i] == ys[i]);
            assert_eq!(fwd[i] + bwd[i] + eq, 1, "antisymmetry at lane {i}");
        }
    }

    #[test]
    fn relu_matches_max_and_lt_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(36);
        let n = 500usize;
        let mut vals: Vec<RingElement> = vec![
            RingElement::from_signed((2.5 * 65536.0) as i64),
            RingElement::from_signed(-(2.5 * 65536.0f64) as i64),
            RingElement::ZERO,
        ];
        for _ in 0..n - 3 {
            vals.push(RingElement::from_signed(rng.random_range(-(1i64 << 40)..(1i64 << 40))));
        }
        let zsh = deal_tensor(&vals, &[n], &mut rng).unwrap();
        let budget = PreprocBudget::for_relu(2 * n as u64);
        let ctxs = local_contexts(&budget, [36u8; 32], [2u8; 16]).unwrap();
        let outs = run_three(ctxs, move |p, ctx| {
            let mine = &zsh[p.idx0()];
            let relu = ctx.pi_relu_vec(mine)?;
            // identity: relu(z) == z * [0 < z]
            let zero = ShareTensor::from_public(p, vec![n], &vec![RingElement::ZERO; n])?;
            let pos = ctx.pi_lt_vec(&zero, mine)?;
            let alt = ctx.pi_dm_vec(mine, &pos)?;
            Ok((relu, alt))
        })
        .unwrap();
        let relu = reconstruct_tensor(&outs[0].0, &outs[1].0).unwrap();
        let alt = reconstruct_tensor(&outs[0].1, &outs[2].1).unwrap();
        for i in 0..n {
            let want = vals[i].to_signed().max(0);
            assert_eq!(relu[i].to_signed(), want, "lane {i}");
            assert_eq!(alt[i], relu[i], "identity at lane {i}");
        }
    }

    #[test]
    fn argmax_cases_and_oracle() {
        let run = |vals: Vec<i64>, seed: u8| -> u64 {
            let n = vals.len();
            let vr: Vec<RingElement> = vals.iter().map(|&v| RingElement::from_signed(v)).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(seed as u64);
            let vsh = deal_tensor(&vr, &[n], &mut rng).unwrap();
            let budget = PreprocBudget::for_argmax(n as u64);
            let ctxs = local_contexts(&budget, [seed; 32], [3u8; 16]).unwrap();
            let outs = run_three(ctxs, move |p, ctx| ctx.pi_argmax(&vsh[p.idx0()])).unwrap();
            crate::sharing::reconstruct(&outs[0], &outs[2]).unwrap().0
        };
        assert_eq!(run(vec![1 << 16, 7 << 16, 3 << 16], 40), 1);
        assert_eq!(run(vec![4 << 16], 41), 0);
        // lowest-index tie-break
        assert_eq!(run(vec![2 << 16, 9 << 16, 9 << 16], 42), 1);

    }

    #[test]
    fn argmax_thousand_random_vectors_match_oracle() {
        // 10^3 vectors of lengths 1..=16, all inside one session
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let n_vecs = 1000usize;
        let mut flat: Vec<RingElement> = Vec::new();
        let mut bounds = Vec::with_capacity(n_vecs);
        let mut want = Vec::with_capacity(n_vecs);
        let mut budget = PreprocBudget::zero();
        for _ in 0..n_vecs {
            let len = rng.random_range(1..=16usize);
            let vals: Vec<i64> = (0..len)
                .map(|_| rng.random_range(-(1i64 << 30)..(1i64 << 30)))
                .collect();
            let mut best = 0usize;
            for (i, &v) in vals.iter().enumerate() {
                if v > vals[best] {
                    best = i;
                }
            }
            want.push(best as u64);
            bounds.push((flat.len(), flat.len() + len));
            flat.extend(vals.into_iter().map(RingElement::from_signed));
            budget.merge(&PreprocBudget::for_argmax(len as u64));
        }
        let vsh = deal_tensor(&flat, &[flat.len()], &mut rng).unwrap();
        let bounds2 = bounds.clone();
        let ctxs = local_contexts(&budget, [44u8; 32], [3u8; 16]).unwrap();
        let outs = run_three(ctxs, move |p, ctx| {
            let mine = &vsh[p.idx0()];
            let mut shares = Vec::with_capacity(bounds2.len());
            for &(lo, hi) in &bounds2 {
                shares.push(ctx.pi_argmax(&mine.slice(lo..hi))?);
            }
            Ok(shares)
        })
        .unwrap();
        for i in 0..n_vecs {
            let got = crate::sharing::reconstruct(&outs[0][i], &outs[1][i]).unwrap();
            assert_eq!(got.0, want[i], "vector {i}");
        }
    }
}
