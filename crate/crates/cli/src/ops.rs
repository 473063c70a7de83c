use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use secvid_core::containers::{ShareFile, ShareRole, TensorContainer, TensorData};
use secvid_core::nn::ModelSpec;
use secvid_core::oracle::{oracle_classify, oracle_float_classify, PlainTensor};
use secvid_core::preproc::{budget_for, dealer_generate, load_material, write_material};
use secvid_core::protocols::SessionContext;
use secvid_core::ring::{FixedPointCodec, RingElement};
use secvid_core::runner::classify_local;
use secvid_core::sharing::{deal_tensor, ShareTensor, ZeroShareSource};
use secvid_core::transport::{session_id_from_str, SessionId, TcpChannel, Transcript};
use secvid_core::video::{build_selection, pi_labelvideo, reveal_label};
use secvid_core::PartyId;

use crate::config::{parse_key, PartyConfig};
use crate::DealCommon;

fn parse_seed(seed: Option<&str>) -> Result<[u8; 32]> {
    match seed {
        None => Ok(rand::random()),
        Some(s) => {
            let bytes = hex::decode(s).context("--seed must be hex")?;
            if bytes.len() != 32 {
                bail!("--seed must be 32 bytes (64 hex digits)");
            }
            Ok(bytes.try_into().unwrap())
        }
    }
}

fn share_path(dir: &Path, base: &str, party: PartyId) -> PathBuf {
    dir.join(format!("{base}.p{}.mpcs", party.index()))
}

fn write_shares(
    dir: &Path,
    base: &str,
    session: SessionId,
    role: ShareRole,
    shares: [ShareTensor; 3],
    force: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for share in shares {
        let path = share_path(dir, base, share.holder);
        if path.exists() && !force {
            bail!("{} exists; pass --force to overwrite", path.display());
        }
        ShareFile::new(session, role, 0, share).to_file(&path)?;
    }
    Ok(())
}

/// Ring payload of a container, encoding real values through the codec.
fn container_to_ring(container: &TensorContainer) -> Result<Vec<RingElement>> {
    let codec = FixedPointCodec::default();
    match &container.data {
        TensorData::Ring(vals) => Ok(vals.clone()),
        TensorData::Real(vals) => Ok(codec.encode_all(vals)?),
    }
}

pub fn deal_video(input: &Path, common: &DealCommon) -> Result<()> {
    let container = TensorContainer::from_file(input)
        .with_context(|| format!("reading {}", input.display()))?;
    if container.dims.len() != 4 {
        bail!(
            "video tensor must be (N, h, w, c), got {:?}",
            container.dims
        );
    }
    let vals = container_to_ring(&container)?;
    let session = session_id_from_str(&common.session);
    let mut rng = ChaCha12Rng::from_seed(parse_seed(common.seed.as_deref())?);
    let shares = deal_tensor(&vals, &container.dims, &mut rng)?;
    write_shares(&common.out, "video", session, ShareRole::Video, shares, common.force)?;
    eprintln!("dealt video {:?} into {}", container.dims, common.out.display());
    Ok(())
}

pub fn deal_model(manifest: &Path, weights: &Path, common: &DealCommon) -> Result<()> {
    let model = ModelSpec::from_json_file(manifest)?;
    let container = TensorContainer::from_file(weights)?;
    let vals = container_to_ring(&container)?;
    let expect = model.total_params()?;
    if vals.len() != expect {
        bail!(
            "weight tensor has {} values, manifest needs {expect}",
            vals.len()
        );
    }
    let session = session_id_from_str(&common.session);
    let mut rng = ChaCha12Rng::from_seed(parse_seed(common.seed.as_deref())?);
    let shares = deal_tensor(&vals, &[expect], &mut rng)?;
    write_shares(&common.out, "weights", session, ShareRole::Weights, shares, common.force)?;
    eprintln!("dealt {expect} model parameters into {}", common.out.display());
    Ok(())
}

pub fn deal_selection(indices: &[usize], frames: usize, common: &DealCommon) -> Result<()> {
    let rows = build_selection(indices, frames)?;
    let session = session_id_from_str(&common.session);
    let mut rng = ChaCha12Rng::from_seed(parse_seed(common.seed.as_deref())?);
    let shares = deal_tensor(&rows, &[indices.len(), frames], &mut rng)?;
    write_shares(&common.out, "selection", session, ShareRole::Selection, shares, common.force)?;
    eprintln!(
        "dealt selection of {} frames out of {frames} into {}",
        indices.len(),
        common.out.display()
    );
    Ok(())
}

pub fn preproc(budget_from: &Path, frames: usize, select: usize, common: &DealCommon) -> Result<()> {
    let model = ModelSpec::from_json_file(budget_from)?;
    let [h, w, c] = model.input;
    let budget = budget_for(&model, &[frames, h, w, c], select, FixedPointCodec::default().frac_bits)?;
    let session = session_id_from_str(&common.session);
    let seed = parse_seed(common.seed.as_deref())?;
    std::fs::create_dir_all(&common.out)?;
    let probe = common.out.join("preproc-bits.p1.mpcs");
    if probe.exists() && !common.force {
        bail!("{} exists; pass --force to overwrite", probe.display());
    }
    let materials = dealer_generate(&budget, seed, session)?;
    for m in &materials {
        write_material(&common.out, m)?;
    }
    let pair_total: u64 = budget.pairs.values().sum();
    eprintln!(
        "generated {} random bits and {} truncation pairs per party into {}",
        budget.bits,
        pair_total,
        common.out.display()
    );
    Ok(())
}

fn load_party_shares(
    dir: &Path,
    session: SessionId,
    party: PartyId,
) -> Result<(ShareTensor, ShareTensor, ShareTensor)> {
    let video = ShareFile::load_expected(&share_path(dir, "video", party), session, ShareRole::Video, party)?;
    let selection = ShareFile::load_expected(
        &share_path(dir, "selection", party),
        session,
        ShareRole::Selection,
        party,
    )?;
    let weights = ShareFile::load_expected(
        &share_path(dir, "weights", party),
        session,
        ShareRole::Weights,
        party,
    )?;
    Ok((video, selection, weights))
}

fn video_dims(video: &ShareTensor) -> Result<[usize; 4]> {
    match video.dims[..] {
        [n, h, w, c] => Ok([n, h, w, c]),
        _ => bail!("video share must be 4-D, got {:?}", video.dims),
    }
}

fn write_transcript_shape(path: &Path, transcript: &Transcript) -> Result<()> {
    let shape = transcript.shape();
    let text = serde_json::to_string(&shape)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn party(
    config_path: &Path,
    session_str: &str,
    timeout_secs: u64,
    emit_transcript: Option<&Path>,
) -> Result<()> {
    let cfg = PartyConfig::load(config_path)?;
    let party = cfg.party_id();
    let session = session_id_from_str(session_str);
    let model = ModelSpec::from_json_file(&cfg.manifest)?;
    let (video, selection, weights) = load_party_shares(&cfg.shares_dir, session, party)?;
    let dims = video_dims(&video)?;
    let n_sel = *selection
        .dims
        .first()
        .ok_or_else(|| anyhow::anyhow!("empty selection share"))?;
    let codec = FixedPointCodec::default();
    let budget = budget_for(&model, &dims, n_sel, codec.frac_bits)?;
    let material = load_material(&cfg.shares_dir, party, session, &budget)?;

    let chan = TcpChannel::connect(
        party,
        &cfg.listen,
        &cfg.peer_addrs(),
        session,
        Duration::from_secs(timeout_secs),
    )?;
    let zero = ZeroShareSource::new(
        parse_key(&cfg.prf_key_with_next, "prf_key_with_next")?,
        parse_key(&cfg.prf_key_with_prev, "prf_key_with_prev")?,
    );
    let mut ctx = SessionContext::new(chan, zero, material, codec);
    let label_share = pi_labelvideo(&mut ctx, &video, &selection, &model, &weights)?;
    let tensor = ShareTensor::scalar(label_share);
    ShareFile::new(session, ShareRole::Label, 0, tensor).to_file(&cfg.label_out)?;
    if let Some(path) = emit_transcript {
        write_transcript_shape(path, ctx.transcript())?;
    }
    eprintln!(
        "party {party}: label share written to {}",
        cfg.label_out.display()
    );
    Ok(())
}

pub fn classify_local_cmd(
    shares_dir: &Path,
    manifest: &Path,
    session_str: &str,
    seed: Option<&str>,
    emit_transcript: Option<&Path>,
) -> Result<()> {
    let session = session_id_from_str(session_str);
    let model = ModelSpec::from_json_file(manifest)?;
    let mut videos = Vec::new();
    let mut selections = Vec::new();
    let mut weights = Vec::new();
    for party in PartyId::ALL {
        let (v, s, w) = load_party_shares(shares_dir, session, party)?;
        videos.push(v);
        selections.push(s);
        weights.push(w);
    }
    let videos: [ShareTensor; 3] = videos.try_into().unwrap();
    let selections: [ShareTensor; 3] = selections.try_into().unwrap();
    let weights: [ShareTensor; 3] = weights.try_into().unwrap();
    let dims = video_dims(&videos[0])?;
    let codec = FixedPointCodec::default();
    let budget = budget_for(&model, &dims, selections[0].dims[0], codec.frac_bits)?;
    let out = classify_local(
        &model,
        &videos,
        &selections,
        &weights,
        &budget,
        parse_seed(seed)?,
        session,
    )?;
    if let Some(dir) = emit_transcript {
        std::fs::create_dir_all(dir)?;
        for (party, t) in PartyId::ALL.into_iter().zip(&out.transcripts) {
            write_transcript_shape(&dir.join(format!("transcript.p{}.json", party.index())), t)?;
        }
    }
    println!("{}", out.label);
    Ok(())
}

pub fn reveal(paths: &[PathBuf]) -> Result<()> {
    let mut shares = Vec::new();
    for path in paths {
        let f = ShareFile::from_file(path)?;
        if f.role != ShareRole::Label {
            bail!("{} is not a label share", path.display());
        }
        if f.tensor.len() != 1 {
            bail!("{} does not hold a scalar", path.display());
        }
        shares.push(f.tensor.get(0));
    }
    let label = reveal_label(&shares)?;
    println!("{label}");
    Ok(())
}

pub fn oracle_cmd(
    video_path: &Path,
    indices: &[usize],
    model_path: &Path,
    weights_path: &Path,
    scores: bool,
    float_shadow: bool,
) -> Result<()> {
    let codec = FixedPointCodec::default();
    let model = ModelSpec::from_json_file(model_path)?;
    let video_c = TensorContainer::from_file(video_path)?;
    if video_c.dims.len() != 4 {
        bail!("video tensor must be (N, h, w, c)");
    }
    let video = PlainTensor::new(video_c.dims.clone(), container_to_ring(&video_c)?)?;
    let weights_c = TensorContainer::from_file(weights_path)?;
    let weights = PlainTensor::new(vec![weights_c.data.len()], container_to_ring(&weights_c)?)?;
    let (label, sums) = oracle_classify(&video, indices, &model, &weights, codec.frac_bits)?;
    println!("{label}");
    if scores {
        for (i, s) in sums.iter().enumerate() {
            println!("class {i}: {:.6}", codec.decode(*s));
        }
    }
    if float_shadow {
        let (flabel, _) = oracle_float_classify(&video, indices, &model, &weights, codec.frac_bits)?;
        if flabel == label {
            eprintln!("float shadow agrees: label {flabel}");
        } else {
            eprintln!("float shadow disagrees: fixed-point {label}, float {flabel} (near tie)");
        }
    }
    Ok(())
}

pub fn bench(
    manifest: &Path,
    frames: usize,
    select: usize,
    runs: usize,
    seed: Option<&str>,
) -> Result<()> {
    use rand::Rng;
    if runs == 0 {
        bail!("--runs must be positive");
    }
    let codec = FixedPointCodec::default();
    let model = ModelSpec::from_json_file(manifest)?;
    let [h, w, c] = model.input;
    let seed = parse_seed(seed)?;
    let mut rng = ChaCha12Rng::from_seed(seed);

    // synthetic instance: uniform pixels, fan-in-scaled weights
    let pixels: Vec<f64> = (0..frames * h * w * c).map(|_| rng.random_range(0.0..1.0)).collect();
    let video = codec.encode_all(&pixels)?;
    let weights_f = synth_weights(&model, &mut rng)?;
    let weights = codec.encode_all(&weights_f)?;
    let step = (frames.max(select) / select).max(1);
    let indices: Vec<usize> = (0..select).map(|k| (1 + k * step).min(frames)).collect();
    let selection = build_selection(&indices, frames)?;

    let video_sh = deal_tensor(&video, &[frames, h, w, c], &mut rng)?;
    let sel_sh = deal_tensor(&selection, &[select, frames], &mut rng)?;
    let weight_sh = deal_tensor(&weights, &[weights.len()], &mut rng)?;
    let budget = budget_for(&model, &[frames, h, w, c], select, codec.frac_bits)?;

    let mut total_secs = 0f64;
    let mut per_party_bytes = [0u64; 3];
    let mut label = 0u64;
    for run in 0..runs {
        let mut run_seed = seed;
        run_seed[0] = run_seed[0].wrapping_add(run as u8);
        let session = session_id_from_str(&format!("bench-{run}"));
        let start = Instant::now();
        let out = classify_local(&model, &video_sh, &sel_sh, &weight_sh, &budget, run_seed, session)?;
        total_secs += start.elapsed().as_secs_f64();
        for (acc, t) in per_party_bytes.iter_mut().zip(&out.transcripts) {
            *acc += t.total_bytes();
        }
        label = out.label;
    }
    let avg_secs = total_secs / runs as f64;
    let avg_gb: Vec<f64> = per_party_bytes
        .iter()
        .map(|&b| b as f64 / runs as f64 / 1e9)
        .collect();
    println!("setting       avg time (s)   avg comm per party (GB)");
    println!("passive 3PC   {avg_secs:<14.2} {:.6}", avg_gb[0]);
    eprintln!(
        "label {label}; per-party GB: {:.6} / {:.6} / {:.6} over {runs} run(s), {frames} frames, {select} selected",
        avg_gb[0], avg_gb[1], avg_gb[2]
    );
    Ok(())
}

fn synth_weights(model: &ModelSpec, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
    use rand::Rng;
    use secvid_core::nn::{Layer, Shape};
    let plans = model.plan()?;
    let mut out = Vec::new();
    for plan in &plans {
        let Some(ws) = &plan.weights else { continue };
        let fan_in = match &plan.layer {
            Layer::Conv2d { kh, kw, .. } => {
                let Shape::Map { c, .. } = plan.input else { unreachable!() };
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
    Ok(out)
}
