//! Replicated secret sharing among three parties.
//!
//! A value `x` is split into `x1 + x2 + x3 = x mod 2^64`; party 1 holds
//! `(x1, x2)`, party 2 holds `(x2, x3)`, party 3 holds `(x3, x1)`. Any two
//! parties jointly hold all three components; no single party learns
//! anything. Dealing happens on the input owners' machines, never on the
//! servers.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::ring::RingElement;
use crate::transport::PartyId;

/// One party's share of a single ring element: `first` is component
/// `x_i`, `second` is `x_{i+1}` (cyclic), for holder `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplicatedShare {
    pub first: RingElement,
    pub second: RingElement,
    pub holder: PartyId,
}

/// Split `x` into components with explicit randomness `x1`, `x2`.
pub fn deal_from_parts(x: RingElement, x1: RingElement, x2: RingElement) -> [ReplicatedShare; 3] {
    let x3 = x - x1 - x2;
    [
        ReplicatedShare { first: x1, second: x2, holder: PartyId::P1 },
        ReplicatedShare { first: x2, second: x3, holder: PartyId::P2 },
        ReplicatedShare { first: x3, second: x1, holder: PartyId::P3 },
    ]
}

/// Split `x` with uniformly random components.
pub fn deal(x: RingElement, rng: &mut impl RngCore) -> [ReplicatedShare; 3] {
    let x1 = RingElement(rng.next_u64());
    let x2 = RingElement(rng.next_u64());
    deal_from_parts(x, x1, x2)
}

/// Recombine from any two parties' shares, checking the overlapping
/// component the replication invariant promises they agree on.
pub fn reconstruct(s: &ReplicatedShare, t: &ReplicatedShare) -> Result<RingElement> {
    if s.holder == t.holder {
        return Err(Error::Integrity("shares from the same holder".into()));
    }
    // order so that u is followed cyclically by v
    let (u, v) = if t.holder == s.holder.next() {
        (s, t)
    } else {
        (t, s)
    };
    if u.second != v.first {
        return Err(Error::Integrity(format!(
            "overlap mismatch between {} and {}",
            u.holder, v.holder
        )));
    }
    Ok(u.first + u.second + v.second)
}

/// A tensor of shares held by one party, stored as two flat component
/// vectors. `dims` describe the logical shape; reshapes never touch the
/// payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareTensor {
    pub holder: PartyId,
    pub dims: Vec<usize>,
    pub first: Vec<RingElement>,
    pub second: Vec<RingElement>,
}

pub fn dims_len(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl ShareTensor {
    pub fn new(holder: PartyId, dims: Vec<usize>, first: Vec<RingElement>, second: Vec<RingElement>) -> Result<Self> {
        let n = dims_len(&dims);
        if first.len() != n || second.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "payload {} / {} vs dims product {n}",
                first.len(),
                second.len()
            )));
        }
        Ok(ShareTensor { holder, dims, first, second })
    }

    pub fn zeros(holder: PartyId, dims: Vec<usize>) -> Self {
        let n = dims_len(&dims);
        ShareTensor {
            holder,
            dims,
            first: vec![RingElement::ZERO; n],
            second: vec![RingElement::ZERO; n],
        }
    }

    /// Share of a public constant tensor: component 1 carries the value,
    /// components 2 and 3 are zero.
    pub fn from_public(holder: PartyId, dims: Vec<usize>, vals: &[RingElement]) -> Result<Self> {
        let n = dims_len(&dims);
        if vals.len() != n {
            return Err(Error::ShapeMismatch(format!("{} values for dims product {n}", vals.len())));
        }
        let zero = vec![RingElement::ZERO; n];
        let (first, second) = match holder {
            PartyId::P1 => (vals.to_vec(), zero),
            PartyId::P2 => (zero.clone(), zero),
            _ => (zero, vals.to_vec()),
        };
        Ok(ShareTensor { holder, dims, first, second })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.first.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn get(&self, i: usize) -> ReplicatedShare {
        ReplicatedShare {
            first: self.first[i],
            second: self.second[i],
            holder: self.holder,
        }
    }

    pub fn scalar(share: ReplicatedShare) -> Self {
        ShareTensor {
            holder: share.holder,
            dims: vec![],
            first: vec![share.first],
            second: vec![share.second],
        }
    }

    /// Pure view change; payload is untouched.
    pub fn reshape(mut self, dims: Vec<usize>) -> Result<Self> {
        if dims_len(&dims) != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} ({} elements) to {:?}",
                self.dims,
                self.len(),
                dims
            )));
        }
        self.dims = dims;
        Ok(self)
    }

    /// Concatenate along a fresh leading axis; used to gather batch lanes.
    pub fn concat(parts: &[&ShareTensor]) -> Result<Self> {
        let holder = parts.first().ok_or_else(|| Error::EmptyInput("concat of nothing".into()))?.holder;
        let mut first = Vec::new();
        let mut second = Vec::new();
        for p in parts {
            if p.holder != holder {
                return Err(Error::Integrity("concat across holders".into()));
            }
            first.extend_from_slice(&p.first);
            second.extend_from_slice(&p.second);
        }
        let n = first.len();
        Ok(ShareTensor { holder, dims: vec![n], first, second })
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> ShareTensor {
        ShareTensor {
            holder: self.holder,
            dims: vec![range.len()],
            first: self.first[range.clone()].to_vec(),
            second: self.second[range].to_vec(),
        }
    }

    fn check_peer(&self, other: &ShareTensor) -> Result<()> {
        if self.holder != other.holder {
            return Err(Error::Integrity("mixing holders in local arithmetic".into()));
        }
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch(format!(
                "elementwise op over {} vs {} elements",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &ShareTensor) -> Result<ShareTensor> {
        self.check_peer(other)?;
        Ok(ShareTensor {
            holder: self.holder,
            dims: self.dims.clone(),
            first: self.first.iter().zip(&other.first).map(|(&a, &b)| a + b).collect(),
            second: self.second.iter().zip(&other.second).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &ShareTensor) -> Result<ShareTensor> {
        self.check_peer(other)?;
        Ok(ShareTensor {
            holder: self.holder,
            dims: self.dims.clone(),
            first: self.first.iter().zip(&other.first).map(|(&a, &b)| a - b).collect(),
            second: self.second.iter().zip(&other.second).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn neg(&self) -> ShareTensor {
        ShareTensor {
            holder: self.holder,
            dims: self.dims.clone(),
            first: self.first.iter().map(|&a| -a).collect(),
            second: self.second.iter().map(|&a| -a).collect(),
        }
    }

    /// Add a public constant to every element. Only component 1 absorbs
    /// the constant, so the reconstruction shifts by exactly `k`.
    pub fn add_public(&self, k: RingElement) -> ShareTensor {
        let mut out = self.clone();
        match self.holder {
            PartyId::P1 => out.first.iter_mut().for_each(|v| *v += k),
            PartyId::P2 => {}
            _ => out.second.iter_mut().for_each(|v| *v += k),
        }
        out
    }

    /// Add a public tensor elementwise (component-1 convention).
    pub fn add_public_vec(&self, ks: &[RingElement]) -> Result<ShareTensor> {
        if ks.len() != self.len() {
            return Err(Error::ShapeMismatch("public vector length".into()));
        }
        let mut out = self.clone();
        match self.holder {
            PartyId::P1 => out.first.iter_mut().zip(ks).for_each(|(v, &k)| *v += k),
            PartyId::P2 => {}
            _ => out.second.iter_mut().zip(ks).for_each(|(v, &k)| *v += k),
        }
        Ok(out)
    }

    /// Multiply every element by a public ring constant (local).
    pub fn scale_public(&self, k: RingElement) -> ShareTensor {
        ShareTensor {
            holder: self.holder,
            dims: self.dims.clone(),
            first: self.first.iter().map(|&a| a * k).collect(),
            second: self.second.iter().map(|&a| a * k).collect(),
        }
    }

    /// Sum all elements into a scalar share (local).
    pub fn sum(&self) -> ReplicatedShare {
        ReplicatedShare {
            first: self.first.iter().copied().sum(),
            second: self.second.iter().copied().sum(),
            holder: self.holder,
        }
    }
}

/// Deal a whole tensor; returns one `ShareTensor` per party.
pub fn deal_tensor(vals: &[RingElement], dims: &[usize], rng: &mut impl RngCore) -> Result<[ShareTensor; 3]> {
    if vals.len() != dims_len(dims) {
        return Err(Error::ShapeMismatch(format!(
            "{} values for dims {:?}",
            vals.len(),
            dims
        )));
    }
    let n = vals.len();
    let mut comp1 = Vec::with_capacity(n);
    let mut comp2 = Vec::with_capacity(n);
    let mut comp3 = Vec::with_capacity(n);
    for &x in vals {
        let x1 = RingElement(rng.next_u64());
        let x2 = RingElement(rng.next_u64());
        comp1.push(x1);
        comp2.push(x2);
        comp3.push(x - x1 - x2);
    }
    Ok([
        ShareTensor { holder: PartyId::P1, dims: dims.to_vec(), first: comp1.clone(), second: comp2.clone() },
        ShareTensor { holder: PartyId::P2, dims: dims.to_vec(), first: comp2, second: comp3.clone() },
        ShareTensor { holder: PartyId::P3, dims: dims.to_vec(), first: comp3, second: comp1 },
    ])
}

/// Recombine a tensor from two parties' share tensors.
pub fn reconstruct_tensor(a: &ShareTensor, b: &ShareTensor) -> Result<Vec<RingElement>> {
    if a.dims != b.dims {
        return Err(Error::ShapeMismatch("reconstructing mismatched dims".into()));
    }
    if a.holder == b.holder {
        return Err(Error::Integrity("shares from the same holder".into()));
    }
    let (u, v) = if b.holder == a.holder.next() { (a, b) } else { (b, a) };
    let mut out = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        if u.second[i] != v.first[i] {
            return Err(Error::Integrity(format!("overlap mismatch at element {i}")));
        }
        out.push(u.first[i] + u.second[i] + v.second[i]);
    }
    Ok(out)
}

/// The keyed function family behind zero-sharing. Evaluations are indexed
/// by a message counter and must be identical on the two parties holding
/// the key.
pub trait Prf: Send {
    fn fill(&mut self, start_counter: u64, out: &mut [u64]);
}

/// ChaCha12 in counter mode, truncated to 64-bit words.
pub struct ChaChaPrf {
    rng: ChaCha12Rng,
}

impl ChaChaPrf {
    pub fn new(key: [u8; 32]) -> Self {
        ChaChaPrf { rng: ChaCha12Rng::from_seed(key) }
    }
}

impl Prf for ChaChaPrf {
    fn fill(&mut self, start_counter: u64, out: &mut [u64]) {
        // one 64-bit output = two 32-bit words of keystream
        self.rng.set_word_pos(start_counter as u128 * 2);
        for w in out.iter_mut() {
            *w = self.rng.next_u64();
        }
    }
}

/// Test stub: every evaluation is zero, so all zero-shares are zero.
pub struct ZeroPrf;

impl Prf for ZeroPrf {
    fn fill(&mut self, _start_counter: u64, out: &mut [u64]) {
        out.fill(0);
    }
}

/// Per-party source of additive sharings of zero.
///
/// Party `i` holds `key_i` (shared with party `i+1`) and `key_{i-1}`
/// (shared with party `i-1`) and derives
/// `u_i = PRF(key_i, t) - PRF(key_{i-1}, t)`; over the three parties the
/// values telescope to zero. Stateful: confined to the session thread.
pub struct ZeroShareSource {
    with_next: Box<dyn Prf>,
    with_prev: Box<dyn Prf>,
    counter: u64,
}

impl ZeroShareSource {
    pub fn new(key_with_next: [u8; 32], key_with_prev: [u8; 32]) -> Self {
        ZeroShareSource {
            with_next: Box::new(ChaChaPrf::new(key_with_next)),
            with_prev: Box::new(ChaChaPrf::new(key_with_prev)),
            counter: 0,
        }
    }

    /// All-zero stub for deterministic test vectors.
    pub fn stub() -> Self {
        ZeroShareSource {
            with_next: Box::new(ZeroPrf),
            with_prev: Box::new(ZeroPrf),
            counter: 0,
        }
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_zero(&mut self) -> RingElement {
        let mut buf = [0u64; 1];
        let mut out = [RingElement::ZERO];
        self.with_next.fill(self.counter, &mut buf);
        out[0] = RingElement(buf[0]);
        self.with_prev.fill(self.counter, &mut buf);
        out[0] -= RingElement(buf[0]);
        self.counter += 1;
        out[0]
    }

    pub fn take_zeros(&mut self, n: usize) -> Vec<RingElement> {
        let mut a = vec![0u64; n];
        let mut b = vec![0u64; n];
        self.with_next.fill(self.counter, &mut a);
        self.with_prev.fill(self.counter, &mut b);
        self.counter += n as u64;
        a.into_iter()
            .zip(b)
            .map(|(x, y)| RingElement(x.wrapping_sub(y)))
            .collect()
    }
}

/// Build the three parties' zero-share sources from the three pairwise
/// keys `key[i]`, shared between party `i+1` and party `i+2` (0-indexed
/// over the key array). Dealer-side convenience for local runs and tests.
pub fn zero_share_sources(keys: [[u8; 32]; 3]) -> [ZeroShareSource; 3] {
    // party i (1-based) uses key index i-1 with its next party and key
    // index (i-2 mod 3) with its previous party
    [
        ZeroShareSource::new(keys[0], keys[2]),
        ZeroShareSource::new(keys[1], keys[0]),
        ZeroShareSource::new(keys[2], keys[1]),
    ]
}
