//! The MPC primitive layer over replicated shares: multiplication, matrix
//! multiplication, truncation, comparison, RELU, argmax, and division.
//!
//! Every operation is vectorized; element lanes of one call ride the same
//! communication rounds, so message counts and sizes depend only on public
//! shapes. All traffic flows the same way as the multiplication protocol:
//! each party sends to its predecessor and receives from its successor.

mod compare;
mod divide;

pub use divide::reciprocal_seed_constant;

use crate::error::{Error, Result};
use crate::preproc::Material;
use crate::ring::{FixedPointCodec, RingElement};
use crate::sharing::{ReplicatedShare, ShareTensor, ZeroShareSource};
use crate::transport::{Channel, PartyId, Transcript};

/// Public offset added before a masked opening in truncation: positions
/// any in-range signed value strictly inside `(0, 2^63)`.
pub(crate) const TRUNC_OFFSET: u64 = 1 << 62;

/// One party's execution state for one protocol run: its channel end, the
/// zero-sharing source, preprocessing cursors, and the fixed-point codec.
/// Single-owner; rounds strictly increase per peer.
pub struct SessionContext<C: Channel> {
    chan: C,
    zero: ZeroShareSource,
    pub material: Material,
    pub codec: FixedPointCodec,
    send_rounds: [u32; 3],
    recv_rounds: [u32; 3],
}

impl<C: Channel> SessionContext<C> {
    pub fn new(chan: C, zero: ZeroShareSource, material: Material, codec: FixedPointCodec) -> Self {
        SessionContext {
            chan,
            zero,
            material,
            codec,
            send_rounds: [0; 3],
            recv_rounds: [0; 3],
        }
    }

    #[inline]
    pub fn party(&self) -> PartyId {
        self.chan.party()
    }

    pub fn transcript(&self) -> &Transcript {
        self.chan.transcript()
    }

    pub fn take_transcript(&mut self) -> Transcript {
        self.chan.take_transcript()
    }

    pub fn into_channel(self) -> C {
        self.chan
    }

    /// Send to the predecessor and receive the successor's message of the
    /// matching round; the only traffic pattern the protocols use.
    fn exchange_prev(&mut self, words: &[u64]) -> Result<Vec<u64>> {
        let to = self.party().prev();
        let from = self.party().next();
        let send_round = self.send_rounds[to.idx0()];
        self.send_rounds[to.idx0()] += 1;
        self.chan.send(to, send_round, words)?;
        let recv_round = self.recv_rounds[from.idx0()];
        self.recv_rounds[from.idx0()] += 1;
        let got = self.chan.recv(from, recv_round)?;
        if got.len() != words.len() {
            return Err(Error::Framing(format!(
                "peer sent {} words, expected {}",
                got.len(),
                words.len()
            )));
        }
        Ok(got)
    }

    fn check_own(&self, t: &ShareTensor) -> Result<()> {
        if t.holder != self.party() {
            return Err(Error::Integrity(format!(
                "tensor held by {} used by {}",
                t.holder,
                self.party()
            )));
        }
        Ok(())
    }

    /// Share of a public constant vector.
    pub fn public(&self, dims: Vec<usize>, vals: &[RingElement]) -> Result<ShareTensor> {
        ShareTensor::from_public(self.party(), dims, vals)
    }

    pub fn public_scalar(&self, val: RingElement) -> ShareTensor {
        ShareTensor::from_public(self.party(), vec![1], &[val]).unwrap()
    }

    /// Reveal shared values to all parties: everyone forwards its second
    /// component to its predecessor, one ring element per lane per party.
    pub fn open_vec(&mut self, x: &ShareTensor) -> Result<Vec<RingElement>> {
        self.check_own(x)?;
        let words: Vec<u64> = x.second.iter().map(|v| v.0).collect();
        let third = self.exchange_prev(&words)?;
        Ok(x.first
            .iter()
            .zip(&x.second)
            .zip(&third)
            .map(|((&a, &b), &c)| a + b + RingElement(c))
            .collect())
    }

    /// Secure elementwise product in the ring, no rescaling. One ring
    /// element of traffic per lane per party.
    pub fn pi_dm_vec(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        self.check_own(x)?;
        self.check_own(y)?;
        if x.len() != y.len() {
            return Err(Error::ShapeMismatch(format!(
                "pi_dm over {} vs {} lanes",
                x.len(),
                y.len()
            )));
        }
        let n = x.len();
        let zeros = self.zero.take_zeros(n);
        let mut v = Vec::with_capacity(n);
        for (i, u) in zeros.into_iter().enumerate() {
            let z = x.first[i] * y.first[i] + x.first[i] * y.second[i] + x.second[i] * y.first[i];
            v.push((z + u).0);
        }
        let w = self.exchange_prev(&v)?;
        ShareTensor::new(
            self.party(),
            x.dims.clone(),
            v.into_iter().map(RingElement).collect(),
            w.into_iter().map(RingElement).collect(),
        )
    }

    pub fn pi_dm(&mut self, x: ReplicatedShare, y: ReplicatedShare) -> Result<ReplicatedShare> {
        let out = self.pi_dm_vec(&ShareTensor::scalar(x), &ShareTensor::scalar(y))?;
        Ok(out.get(0))
    }

    /// Secure matrix product of a `p x m` by an `m x r` share matrix;
    /// `p * r` ring elements of traffic per party in a single round.
    pub fn pi_dmm(&mut self, a: &ShareTensor, b: &ShareTensor) -> Result<ShareTensor> {
        self.check_own(a)?;
        self.check_own(b)?;
        let (p, m) = match a.dims[..] {
            [p, m] => (p, m),
            _ => return Err(Error::ShapeMismatch("pi_dmm lhs must be 2-D".into())),
        };
        let (m2, r) = match b.dims[..] {
            [m2, r] => (m2, r),
            _ => return Err(Error::ShapeMismatch("pi_dmm rhs must be 2-D".into())),
        };
        if m != m2 {
            return Err(Error::ShapeMismatch(format!(
                "pi_dmm inner dims {m} vs {m2}"
            )));
        }
        let mut z = vec![RingElement::ZERO; p * r];
        gemm_acc(&mut z, &a.first, &b.first, p, m, r);
        gemm_acc(&mut z, &a.first, &b.second, p, m, r);
        gemm_acc(&mut z, &a.second, &b.first, p, m, r);
        let zeros = self.zero.take_zeros(p * r);
        let v: Vec<u64> = z
            .into_iter()
            .zip(zeros)
            .map(|(zi, ui)| (zi + ui).0)
            .collect();
        let w = self.exchange_prev(&v)?;
        ShareTensor::new(
            self.party(),
            vec![p, r],
            v.into_iter().map(RingElement).collect(),
            w.into_iter().map(RingElement).collect(),
        )
    }

    /// Rescale after a fixed-point product: reconstructs to the signed
    /// value floor-divided by `2^shift`, up to one unit in the last place.
    ///
    /// Requires `|signed(z)| < 2^62` and one masking pair per lane.
    pub fn pi_trunc_vec(&mut self, z: &ShareTensor, shift: u32) -> Result<ShareTensor> {
        self.check_own(z)?;
        let n = z.len();
        let (r, r_hi) = self.material.take_pairs(shift, n)?;
        let masked = z.add(&r)?.add_public(RingElement(TRUNC_OFFSET));
        let opened = self.open_vec(&masked)?;
        // opened is the exact integer z + 2^62 + r: shift it publicly and
        // remove the mask's and the offset's high parts
        let off_hi = RingElement(TRUNC_OFFSET >> shift);
        let consts: Vec<RingElement> = opened
            .iter()
            .map(|c| RingElement(c.0 >> shift) - off_hi)
            .collect();
        let out = r_hi.neg().add_public_vec(&consts)?;
        out.reshape(z.dims.clone())
    }

    /// Fixed-point multiply at the codec precision: ring product then
    /// truncation of the surplus fractional bits.
    pub fn pi_fpmul_vec(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        let prod = self.pi_dm_vec(x, y)?;
        self.pi_trunc_vec(&prod, self.codec.frac_bits)
    }

    /// Strict comparison: lane-wise share of 1 where `signed(x) < signed(y)`,
    /// 0 otherwise (so equality yields 0). Operands must stay below `2^61`
    /// in magnitude. Consumes 64 preprocessed random bits per lane.
    pub fn pi_lt_vec(&mut self, x: &ShareTensor, y: &ShareTensor) -> Result<ShareTensor> {
        let d = x.sub(y)?;
        compare::ltz_vec(self, &d)
    }

    pub fn pi_lt(&mut self, x: ReplicatedShare, y: ReplicatedShare) -> Result<ReplicatedShare> {
        let out = self.pi_lt_vec(&ShareTensor::scalar(x), &ShareTensor::scalar(y))?;
        Ok(out.get(0))
    }

    /// `max(0, z)` lane-wise, exact: comparison against zero followed by
    /// one secure multiplication with the raw 0/1 outcome.
    pub fn pi_relu_vec(&mut self, z: &ShareTensor) -> Result<ShareTensor> {
        let pos = compare::ltz_vec(self, &z.neg())?; // [z > 0]
        self.pi_dm_vec(z, &pos)
    }

    /// Index of the maximum under signed order, ties toward the lowest
    /// index; returned as a share of a raw ring integer in `0..m`.
    pub fn pi_argmax(&mut self, v: &ShareTensor) -> Result<ReplicatedShare> {
        self.check_own(v)?;
        let m = v.len();
        if m == 0 {
            return Err(Error::EmptyInput("argmax of an empty vector".into()));
        }
        let mut mx = v.slice(0..1);
        let mut idx = self.public(vec![1], &[RingElement::ZERO])?;
        for i in 1..m {
            let vi = v.slice(i..i + 1);
            let p = self.pi_lt_vec(&mx, &vi)?; // strict: ties keep the earlier index
            let d_val = vi.sub(&mx)?;
            let d_idx = idx.neg().add_public(RingElement(i as u64));
            let pp = ShareTensor::concat(&[&p, &p])?;
            let dd = ShareTensor::concat(&[&d_val, &d_idx])?;
            let delta = self.pi_dm_vec(&pp, &dd)?;
            mx = mx.add(&delta.slice(0..1))?;
            idx = idx.add(&delta.slice(1..2))?;
        }
        Ok(idx.get(0))
    }

    /// Fixed-point division: secret normalization of the denominator into
    /// `[0.5, 1)` followed by a fixed number of Newton refinement steps at
    /// guard-bit precision. The denominator must decode into
    /// `[2^(2-a), 2^30]` and the quotient magnitude must stay below
    /// `2^10`; out-of-range inputs yield garbage without any error, since
    /// secrecy prevents detection.
    pub fn pi_div_vec(&mut self, num: &ShareTensor, den: &ShareTensor) -> Result<ShareTensor> {
        divide::div_vec(self, num, den)
    }

}

fn gemm_acc(acc: &mut [RingElement], a: &[RingElement], b: &[RingElement], p: usize, m: usize, r: usize) {
    for i in 0..p {
        let arow = &a[i * m..(i + 1) * m];
        let crow = &mut acc[i * r..(i + 1) * r];
        for (k, &av) in arow.iter().enumerate() {
            let brow = &b[k * r..(k + 1) * r];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj += av * bj;
            }
        }
    }
}
