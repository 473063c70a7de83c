//! Input-independent correlated randomness: shared random bits consumed by
//! comparison, and masking pairs `(r, floor(r / 2^shift))` consumed by
//! truncation. A trusted dealer generates the material before inputs are
//! known; the online protocols only ever read it forward through cursors,
//! so nothing is silently reused.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::containers::{ShareFile, ShareRole};
use crate::error::{Error, Result};
use crate::ring::RingElement;
use crate::sharing::{deal_tensor, ShareTensor};
use crate::transport::{PartyId, SessionId};

/// Random bits consumed per secure comparison: 64 to mask the full ring
/// word (the top bit only blinds the opened value).
pub const BITS_PER_COMPARISON: u64 = 64;

/// Masks for truncation are drawn uniformly below this bound, the widest
/// range for which the opened value `z + 2^62 + r` cannot wrap the ring.
pub const TRUNC_MASK_BITS: u32 = 63;

/// Extra fractional bits carried internally by secure division.
pub const DIV_GUARD_BITS: u32 = 4;

/// Newton/Goldschmidt refinement steps in secure division. Fixed so the
/// communication pattern never depends on the operands.
pub const DIV_ITERATIONS: usize = 5;

/// Internal fixed-point precision of division for codec precision `a`.
pub fn div_internal_frac(a: u32) -> u32 {
    a + DIV_GUARD_BITS
}

/// Largest possible most-significant-bit index of an in-range denominator
/// (decoded magnitude up to `2^30`) at the internal precision.
pub fn div_msb_max(a: u32) -> u32 {
    30 + div_internal_frac(a)
}

/// Shift that lands the normalized denominator at the internal precision.
pub fn div_norm_shift(a: u32) -> u32 {
    div_msb_max(a) + 1 - div_internal_frac(a)
}

/// Comparisons issued by one division (MSB indicators).
pub fn div_comparisons(a: u32) -> u64 {
    div_msb_max(a) as u64 + 2
}

/// Counts of correlated-randomness items a computation needs, keyed by
/// consumer: random bits, and truncation pairs per shift amount.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreprocBudget {
    pub bits: u64,
    pub pairs: BTreeMap<u32, u64>,
}

impl PreprocBudget {
    pub fn zero() -> Self {
        PreprocBudget::default()
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0 && self.pairs.values().all(|&v| v == 0)
    }

    pub fn add_bits(&mut self, n: u64) {
        self.bits += n;
    }

    pub fn add_pairs(&mut self, shift: u32, n: u64) {
        *self.pairs.entry(shift).or_insert(0) += n;
    }

    pub fn merge(&mut self, other: &PreprocBudget) {
        self.bits += other.bits;
        for (&shift, &n) in &other.pairs {
            self.add_pairs(shift, n);
        }
    }

    pub fn scaled(&self, k: u64) -> PreprocBudget {
        PreprocBudget {
            bits: self.bits * k,
            pairs: self.pairs.iter().map(|(&s, &n)| (s, n * k)).collect(),
        }
    }

    pub fn pairs_at(&self, shift: u32) -> u64 {
        self.pairs.get(&shift).copied().unwrap_or(0)
    }

    // Per-operation costs. These are the single source of truth: the online
    // protocols consume exactly these amounts, and `budget_for` composes
    // them, which the tests cross-check against actual consumption.

    pub fn for_comparisons(lanes: u64) -> Self {
        PreprocBudget {
            bits: lanes * BITS_PER_COMPARISON,
            pairs: BTreeMap::new(),
        }
    }

    pub fn for_trunc(shift: u32, lanes: u64) -> Self {
        let mut b = PreprocBudget::zero();
        b.add_pairs(shift, lanes);
        b
    }

    pub fn for_fpmul(a: u32, lanes: u64) -> Self {
        Self::for_trunc(a, lanes)
    }

    pub fn for_relu(lanes: u64) -> Self {
        Self::for_comparisons(lanes)
    }

    pub fn for_argmax(len: u64) -> Self {
        Self::for_comparisons(len.saturating_sub(1))
    }

    pub fn for_div(a: u32, lanes: u64) -> Self {
        let f = div_internal_frac(a);
        let mut b = Self::for_comparisons(div_comparisons(a) * lanes);
        // normalization of denominator and of the quotient track
        b.add_pairs(div_norm_shift(a), 2 * lanes);
        // two fixed-point products seeding the iteration, two per step
        b.add_pairs(f, (2 + 2 * DIV_ITERATIONS as u64) * lanes);
        // final downshift back to codec precision
        b.add_pairs(DIV_GUARD_BITS, lanes);
        b
    }

    pub fn for_soft(a: u32, classes: u64) -> Self {
        let mut b = Self::for_relu(classes);
        b.merge(&Self::for_comparisons(1)); // sign of the RELU sum
        b.merge(&Self::for_div(a, 1));
        b.merge(&Self::for_fpmul(a, classes)); // numerators times 1/denominator
        b
    }
}

/// Material sufficient for one full secure classification: `n_selected`
/// inference passes over the model plus the final label argmax. Frame
/// selection itself consumes nothing (one-hot products are exact).
pub fn budget_for(
    model: &crate::nn::ModelSpec,
    video_dims: &[usize; 4],
    n_selected: usize,
    frac: u32,
) -> Result<PreprocBudget> {
    use crate::nn::Layer;
    let plans = model.plan()?;
    let [n_total, h, w, c] = *video_dims;
    if [h, w, c] != model.input {
        return Err(Error::ShapeMismatch(format!(
            "video frames {h}x{w}x{c} vs model input {:?}",
            model.input
        )));
    }
    if n_selected == 0 || n_total == 0 {
        return Err(Error::ShapeMismatch("empty selection or video".into()));
    }
    let mut per_frame = PreprocBudget::zero();
    for plan in &plans {
        match &plan.layer {
            Layer::Conv2d { .. } | Layer::AvgPool { .. } | Layer::Dense { .. } => {
                per_frame.merge(&PreprocBudget::for_trunc(frac, plan.output.numel() as u64));
            }
            Layer::Relu => {
                per_frame.merge(&PreprocBudget::for_relu(plan.output.numel() as u64));
            }
            Layer::Flatten => {}
            Layer::ApproxSoftmax => {
                per_frame.merge(&PreprocBudget::for_soft(frac, model.classes as u64));
            }
        }
    }
    let mut total = per_frame.scaled(n_selected as u64);
    total.merge(&PreprocBudget::for_argmax(model.classes as u64));
    Ok(total)
}

struct PairLot {
    r: ShareTensor,
    r_hi: ShareTensor,
    cursor: usize,
}

/// One party's preprocessing material for one session.
pub struct Material {
    pub session_id: SessionId,
    pub holder: PartyId,
    bits: ShareTensor,
    bit_cursor: usize,
    pairs: BTreeMap<u32, PairLot>,
}

impl Material {
    pub fn empty(session_id: SessionId, holder: PartyId) -> Self {
        Material {
            session_id,
            holder,
            bits: ShareTensor::zeros(holder, vec![0]),
            bit_cursor: 0,
            pairs: BTreeMap::new(),
        }
    }

    pub fn take_bits(&mut self, n: usize) -> Result<ShareTensor> {
        if self.bit_cursor + n > self.bits.len() {
            return Err(Error::BudgetExhausted(format!(
                "need {n} random bits, {} left",
                self.bits.len() - self.bit_cursor
            )));
        }
        let out = self.bits.slice(self.bit_cursor..self.bit_cursor + n);
        self.bit_cursor += n;
        Ok(out)
    }

    pub fn take_pairs(&mut self, shift: u32, n: usize) -> Result<(ShareTensor, ShareTensor)> {
        let lot = self.pairs.get_mut(&shift).ok_or_else(|| {
            Error::BudgetExhausted(format!("no truncation pairs for shift {shift}"))
        })?;
        if lot.cursor + n > lot.r.len() {
            return Err(Error::BudgetExhausted(format!(
                "need {n} truncation pairs at shift {shift}, {} left",
                lot.r.len() - lot.cursor
            )));
        }
        let r = lot.r.slice(lot.cursor..lot.cursor + n);
        let r_hi = lot.r_hi.slice(lot.cursor..lot.cursor + n);
        lot.cursor += n;
        Ok((r, r_hi))
    }

    /// What has been consumed so far; the budget tests compare this
    /// against `budget_for`.
    pub fn consumed(&self) -> PreprocBudget {
        PreprocBudget {
            bits: self.bit_cursor as u64,
            pairs: self
                .pairs
                .iter()
                .map(|(&s, lot)| (s, lot.cursor as u64))
                .collect(),
        }
    }

    pub fn provisioned(&self) -> PreprocBudget {
        PreprocBudget {
            bits: self.bits.len() as u64,
            pairs: self
                .pairs
                .iter()
                .map(|(&s, lot)| (s, lot.r.len() as u64))
                .collect(),
        }
    }
}

/// Generate the three parties' material for `budget`. Deterministic in
/// `seed`; each item satisfies its type invariant by construction.
pub fn dealer_generate(
    budget: &PreprocBudget,
    seed: [u8; 32],
    session_id: SessionId,
) -> Result<[Material; 3]> {
    let mut rng = ChaCha12Rng::from_seed(seed);

    let n_bits = budget.bits as usize;
    let bit_vals: Vec<RingElement> = (0..n_bits)
        .map(|_| RingElement(rng.next_u64() & 1))
        .collect();
    let bit_shares = deal_tensor(&bit_vals, &[n_bits], &mut rng)?;

    let mut pair_shares: BTreeMap<u32, ([ShareTensor; 3], [ShareTensor; 3])> = BTreeMap::new();
    for (&shift, &count) in &budget.pairs {
        if shift == 0 || shift >= TRUNC_MASK_BITS {
            return Err(Error::Config(format!("unsupported truncation shift {shift}")));
        }
        let n = count as usize;
        let mut r_vals = Vec::with_capacity(n);
        let mut hi_vals = Vec::with_capacity(n);
        for _ in 0..n {
            let r = rng.next_u64() >> (64 - TRUNC_MASK_BITS);
            r_vals.push(RingElement(r));
            hi_vals.push(RingElement(r >> shift));
        }
        let r_shares = deal_tensor(&r_vals, &[n], &mut rng)?;
        let hi_shares = deal_tensor(&hi_vals, &[n], &mut rng)?;
        pair_shares.insert(shift, (r_shares, hi_shares));
    }

    let mut out: Vec<Material> = PartyId::ALL
        .into_iter()
        .map(|p| Material::empty(session_id, p))
        .collect();
    for (i, m) in out.iter_mut().enumerate() {
        m.bits = bit_shares[i].clone();
    }
    for (shift, (r_shares, hi_shares)) in pair_shares {
        for (i, m) in out.iter_mut().enumerate() {
            m.pairs.insert(
                shift,
                PairLot {
                    r: r_shares[i].clone(),
                    r_hi: hi_shares[i].clone(),
                    cursor: 0,
                },
            );
        }
    }
    Ok(out.try_into().map_err(|_| ()).unwrap())
}

fn bits_path(dir: &Path, party: PartyId) -> PathBuf {
    dir.join(format!("preproc-bits.p{}.mpcs", party.index()))
}

fn pairs_path(dir: &Path, party: PartyId, shift: u32) -> PathBuf {
    dir.join(format!("preproc-pairs{shift}.p{}.mpcs", party.index()))
}

/// Write one party's material as typed share files under `dir`.
pub fn write_material(dir: &Path, material: &Material) -> Result<()> {
    let party = material.holder;
    ShareFile::new(material.session_id, ShareRole::PreprocBits, 0, material.bits.clone())
        .to_file(&bits_path(dir, party))?;
    for (&shift, lot) in &material.pairs {
        // interleave r and r_hi: dims (count, 2)
        let n = lot.r.len();
        let mut first = Vec::with_capacity(2 * n);
        let mut second = Vec::with_capacity(2 * n);
        for i in 0..n {
            first.push(lot.r.first[i]);
            first.push(lot.r_hi.first[i]);
            second.push(lot.r.second[i]);
            second.push(lot.r_hi.second[i]);
        }
        let tensor = ShareTensor::new(party, vec![n, 2], first, second)?;
        ShareFile::new(material.session_id, ShareRole::PreprocPairs, shift as u8, tensor)
            .to_file(&pairs_path(dir, party, shift))?;
    }
    Ok(())
}

/// Load one party's material, checking the session binding.
pub fn load_material(
    dir: &Path,
    party: PartyId,
    session_id: SessionId,
    budget: &PreprocBudget,
) -> Result<Material> {
    let mut material = Material::empty(session_id, party);
    material.bits =
        ShareFile::load_expected(&bits_path(dir, party), session_id, ShareRole::PreprocBits, party)?;
    for &shift in budget.pairs.keys() {
        let tensor = ShareFile::load_expected(
            &pairs_path(dir, party, shift),
            session_id,
            ShareRole::PreprocPairs,
            party,
        )?;
        if tensor.dims.len() != 2 || tensor.dims[1] != 2 {
            return Err(Error::Format("pair file dims must be (count, 2)".into()));
        }
        let n = tensor.dims[0];
        let mut r = ShareTensor::zeros(party, vec![n]);
        let mut r_hi = ShareTensor::zeros(party, vec![n]);
        for i in 0..n {
            r.first[i] = tensor.first[2 * i];
            r.second[i] = tensor.second[2 * i];
            r_hi.first[i] = tensor.first[2 * i + 1];
            r_hi.second[i] = tensor.second[2 * i + 1];
        }
        material.pairs.insert(shift, PairLot { r, r_hi, cursor: 0 });
    }
    Ok(material)
}
