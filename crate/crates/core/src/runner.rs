//! Single-host orchestration: three session threads over the loopback
//! transport. Used by `classify --local`, the benches, and most tests.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::nn::ModelSpec;
use crate::preproc::{dealer_generate, PreprocBudget};
use crate::protocols::SessionContext;
use crate::ring::FixedPointCodec;
use crate::sharing::{zero_share_sources, ShareTensor};
use crate::transport::{loopback, LoopbackChannel, PartyId, SessionId, Transcript};
use crate::video::{pi_labelvideo, reveal_label};

/// Derive the three pairwise PRF keys and the dealer seed from one master
/// seed, so local runs are reproducible end to end.
pub fn derive_keys(seed: [u8; 32]) -> ([[u8; 32]; 3], [u8; 32]) {
    let mut rng = ChaCha12Rng::from_seed(seed);
    let mut keys = [[0u8; 32]; 3];
    for k in keys.iter_mut() {
        rng.fill_bytes(k);
    }
    let mut dealer = [0u8; 32];
    rng.fill_bytes(&mut dealer);
    (keys, dealer)
}

/// Three wired-up session contexts with freshly dealt preprocessing.
pub fn local_contexts(
    budget: &PreprocBudget,
    seed: [u8; 32],
    session_id: SessionId,
) -> Result<[SessionContext<LoopbackChannel>; 3]> {
    let (keys, dealer_seed) = derive_keys(seed);
    let materials = dealer_generate(budget, dealer_seed, session_id)?;
    let sources = zero_share_sources(keys);
    let chans = loopback(session_id);
    let codec = FixedPointCodec::default();
    let mut out = Vec::with_capacity(3);
    for ((chan, zero), material) in chans.into_iter().zip(sources).zip(materials) {
        out.push(SessionContext::new(chan, zero, material, codec));
    }
    Ok(out.try_into().map_err(|_| ()).unwrap())
}

/// Run one closure per party on its own thread; propagate the first error.
pub fn run_three<T, F>(
    ctxs: [SessionContext<LoopbackChannel>; 3],
    f: F,
) -> Result<[T; 3]>
where
    T: Send,
    F: Fn(PartyId, &mut SessionContext<LoopbackChannel>) -> Result<T> + Send + Sync,
{
    let f = &f;
    let results: Vec<Result<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ctxs
            .into_iter()
            .map(|mut ctx| {
                scope.spawn(move || {
                    let party = ctx.party();
                    f(party, &mut ctx)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Transport("party thread panicked".into())))
            })
            .collect()
    });
    let mut out = Vec::with_capacity(3);
    for r in results {
        out.push(r?);
    }
    Ok(out.try_into().map_err(|_| ()).unwrap())
}

/// Everything a local classification run reports besides the label.
pub struct LocalRunOutput {
    pub label: u64,
    pub transcripts: [Transcript; 3],
    pub consumed: [PreprocBudget; 3],
}

/// Run the full secure classification on three in-process parties from
/// already-dealt shares, reveal the label, and return the per-party
/// transcripts and preprocessing consumption.
pub fn classify_local(
    model: &ModelSpec,
    video_shares: &[ShareTensor; 3],
    selection_shares: &[ShareTensor; 3],
    weight_shares: &[ShareTensor; 3],
    budget: &PreprocBudget,
    seed: [u8; 32],
    session_id: SessionId,
) -> Result<LocalRunOutput> {
    let ctxs = local_contexts(budget, seed, session_id)?;
    let outs = run_three(ctxs, |party, ctx| {
        let i = party.idx0();
        let share = pi_labelvideo(
            ctx,
            &video_shares[i],
            &selection_shares[i],
            model,
            &weight_shares[i],
        )?;
        Ok((share, ctx.take_transcript(), ctx.material.consumed()))
    })?;
    let shares: Vec<_> = outs.iter().map(|(s, _, _)| *s).collect();
    let label = reveal_label(&shares)?;
    let mut transcripts = Vec::with_capacity(3);
    let mut consumed = Vec::with_capacity(3);
    for (_, t, c) in outs {
        transcripts.push(t);
        consumed.push(c);
    }
    Ok(LocalRunOutput {
        label,
        transcripts: transcripts.try_into().map_err(|_| ()).unwrap(),
        consumed: consumed.try_into().map_err(|_| ()).unwrap(),
    })
}
