//! Fixed-point division: Newton–Raphson refinement of a reciprocal seed
//! after a secret normalization of the denominator into `[0.5, 1)`.
//!
//! The whole pipeline runs at `frac + 4` guard-bit precision. Secure
//! comparisons against the powers of two locate the denominator's leading
//! bit; the resulting one-hot picks an integer scale `2^(jmax - j)` that
//! normalizes both the denominator and the numerator track, and the same
//! refinement factors `(2 - b_k)` are applied to both, so the quotient
//! track converges to `num/den` directly. The iteration count is fixed,
//! keeping the communication pattern independent of the operands.

use super::SessionContext;
use crate::error::{Error, Result};
use crate::preproc::{div_internal_frac, div_msb_max, div_norm_shift, DIV_GUARD_BITS, DIV_ITERATIONS};
use crate::ring::RingElement;
use crate::sharing::ShareTensor;
use crate::transport::Channel;

/// Seed constant for the reciprocal of a value in `[0.5, 1)`:
/// `y0 = 2.9142 - 2n` keeps the initial error below 0.09.
pub fn reciprocal_seed_constant(frac: u32) -> RingElement {
    RingElement((2.9142f64 * (1u64 << frac) as f64).round() as u64)
}

pub(super) fn div_vec<C: Channel>(
    ctx: &mut SessionContext<C>,
    num: &ShareTensor,
    den: &ShareTensor,
) -> Result<ShareTensor> {
    if num.len() != den.len() {
        return Err(Error::ShapeMismatch(format!(
            "pi_div over {} vs {} lanes",
            num.len(),
            den.len()
        )));
    }
    let n = num.len();
    if n == 0 {
        return Ok(ShareTensor::zeros(ctx.party(), vec![0]));
    }
    let a = ctx.codec.frac_bits;
    let f = div_internal_frac(a);
    let jmax = div_msb_max(a);
    let norm_shift = div_norm_shift(a);
    let ncmp = jmax + 2; // indicators for j = 0 ..= jmax + 1

    // lift to the internal precision (exact, local)
    let up = RingElement(1u64 << DIV_GUARD_BITS);
    let num_f = num.scale_public(up);
    let den_f = den.scale_public(up);

    // h_j = [den_f >= 2^j] via one batched comparison, j-major lanes
    let mut den_rep_first = Vec::with_capacity(ncmp as usize * n);
    let mut den_rep_second = Vec::with_capacity(ncmp as usize * n);
    let mut pows = Vec::with_capacity(ncmp as usize * n);
    for j in 0..ncmp {
        den_rep_first.extend_from_slice(&den_f.first);
        den_rep_second.extend_from_slice(&den_f.second);
        pows.extend(std::iter::repeat_n(RingElement(1u64 << j), n));
    }
    let den_rep = ShareTensor::new(ctx.party(), vec![ncmp as usize * n], den_rep_first, den_rep_second)?;
    let pow_shares = ctx.public(vec![ncmp as usize * n], &pows)?;
    let lt = ctx.pi_lt_vec(&den_rep, &pow_shares)?; // [den_f < 2^j]

    // one-hot o_j = h_j - h_{j+1} = lt_{j+1} - lt_j; U = sum o_j 2^(jmax-j)
    let mut u_first = vec![RingElement::ZERO; n];
    let mut u_second = vec![RingElement::ZERO; n];
    for j in 0..=jmax {
        let w = RingElement(1u64 << (jmax - j));
        let lo = (j as usize) * n;
        let hi = (j as usize + 1) * n;
        for lane in 0..n {
            u_first[lane] += (lt.first[hi + lane] - lt.first[lo + lane]) * w;
            u_second[lane] += (lt.second[hi + lane] - lt.second[lo + lane]) * w;
        }
    }
    let scale = ShareTensor::new(ctx.party(), vec![n], u_first, u_second)?;

    // normalize denominator and numerator track with the same scale
    let both = ShareTensor::concat(&[&den_f, &num_f])?;
    let scale2 = ShareTensor::concat(&[&scale, &scale])?;
    let prods = ctx.pi_dm_vec(&both, &scale2)?;
    let normed = ctx.pi_trunc_vec(&prods, norm_shift)?;
    let mut b = normed.slice(0..n); // denominator, now in [0.5, 1) at f bits
    let mut x = normed.slice(n..2 * n); // quotient track, q * n_norm

    // seed y0 = 2.9142 - 2 b, then y-fold both tracks
    let seed_c = reciprocal_seed_constant(f);
    let y0 = b
        .scale_public(RingElement::from_signed(-2))
        .add_public(seed_c);
    let two_f = RingElement(2u64 << f);
    let pair = ShareTensor::concat(&[&b, &x])?;
    let y0y0 = ShareTensor::concat(&[&y0, &y0])?;
    let prods = ctx.pi_dm_vec(&pair, &y0y0)?;
    let scaled = ctx.pi_trunc_vec(&prods, f)?;
    b = scaled.slice(0..n);
    x = scaled.slice(n..2 * n);

    for _ in 0..DIV_ITERATIONS {
        let e = b.neg().add_public(two_f);
        let pair = ShareTensor::concat(&[&b, &x])?;
        let ee = ShareTensor::concat(&[&e, &e])?;
        let prods = ctx.pi_dm_vec(&pair, &ee)?;
        let scaled = ctx.pi_trunc_vec(&prods, f)?;
        b = scaled.slice(0..n);
        x = scaled.slice(n..2 * n);
    }

    // drop the guard bits
    let out = ctx.pi_trunc_vec(&x, DIV_GUARD_BITS)?;
    out.reshape(num.dims.clone())
}

#[cfg(test)]
mod tests {
    use crate::preproc::PreprocBudget;
    use crate::ring::FixedPointCodec;
    use crate::runner::{local_contexts, run_three};
    use crate::sharing::{deal_tensor, reconstruct_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn run_div(nums: &[f64], dens: &[f64], seed: u8) -> Vec<f64> {
        let codec = FixedPointCodec::default();
        let n = nums.len();
        let ne = codec.encode_all(nums).unwrap();
        let de = codec.encode_all(dens).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed as u64);
        let nsh = deal_tensor(&ne, &[n], &mut rng).unwrap();
        let dsh = deal_tensor(&de, &[n], &mut rng).unwrap();
        let budget = PreprocBudget::for_div(16, n as u64);
        let ctxs = local_contexts(&budget, [seed; 32], [4u8; 16]).unwrap();
        let outs = run_three(ctxs, move |p, ctx| {
            ctx.pi_div_vec(&nsh[p.idx0()], &dsh[p.idx0()])
        })
        .unwrap();
        let vals = reconstruct_tensor(&outs[0], &outs[1]).unwrap();
        vals.into_iter().map(|v| codec.decode(v)).collect()
    }

    #[test]
    fn reciprocal_of_four() {
        let got = run_div(&[1.0], &[4.0], 60)[0];
        assert!((got - 0.25).abs() / 0.25 <= 1e-3, "got {got}");
    }

    #[test]
    fn six_over_three() {
        let got = run_div(&[6.0], &[3.0], 61)[0];
        assert!((got - 2.0).abs() / 2.0 <= 1e-3, "got {got}");
    }

    #[test]
    fn self_division_is_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(62);
        let xs: Vec<f64> = (0..50).map(|_| rng.random_range(0.01..1000.0)).collect();
        for got in run_div(&xs, &xs, 63) {
            assert!((got - 1.0).abs() <= 1e-3, "got {got}");
        }
    }

    #[test]
    fn negative_numerator() {
        let got = run_div(&[-6.0], &[3.0], 64)[0];
        assert!((got + 2.0).abs() / 2.0 <= 1e-3, "got {got}");
    }

    #[test]
    fn wide_denominator_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(65);
        // extremes of the supported denominator range, then log-uniform fill
        let mut nums = vec![2e6, 5e8, 2.0 * 6.2e-5];
        let mut dens = vec![1e6, 1e9, 6.2e-5];
        let mut want = vec![2.0, 0.5, 2.0];
        for _ in 0..200 {
            let den = 10f64.powf(rng.random_range(-2.0..4.0));
            let q = 10f64.powf(rng.random_range(-1.0..2.0));
            nums.push(q * den);
            dens.push(den);
            want.push(q);
        }
        let got = run_div(&nums, &dens, 66);
        for i in 0..got.len() {
            // compare against the quotient of the actually-encoded operands
            let codec = FixedPointCodec::default();
            let truth = codec.decode(codec.encode(nums[i]).unwrap())
                / codec.decode(codec.encode(dens[i]).unwrap());
            let rel = (got[i] - truth).abs() / truth.abs();
            assert!(rel <= 1e-3, "lane {i}: {} / {} -> {} (want {truth})", nums[i], dens[i], got[i]);
            let _ = want[i];
        }
    }
}
