//! Party configuration: identity, addresses, PRF key material, and the
//! paths of the share files a server is allowed to read. There is no field
//! for any plaintext input; a party config can only name share files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use secvid_core::PartyId;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyConfig {
    /// This party's id (1, 2 or 3).
    pub party: u8,
    /// Address this party accepts peer connections on.
    pub listen: String,
    /// Peer id -> address.
    pub peers: BTreeMap<String, String>,
    /// 32-byte hex key shared with the next party (cyclic).
    pub prf_key_with_next: String,
    /// 32-byte hex key shared with the previous party.
    pub prf_key_with_prev: String,
    /// Model manifest (public shapes).
    pub manifest: PathBuf,
    /// Directory with this party's share and preprocessing files.
    pub shares_dir: PathBuf,
    /// Where to write this party's share of the label.
    pub label_out: PathBuf,
}

pub fn parse_key(hex_key: &str, what: &str) -> Result<[u8; 32]> {
    let bytes = hex::decode(hex_key).with_context(|| format!("{what}: invalid hex"))?;
    let arr: [u8; 32] = bytes
        .try_into()
        .map_err(|_| anyhow::anyhow!("{what}: key must be 32 bytes"))?;
    Ok(arr)
}

impl PartyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: PartyConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        let party = PartyId::new(cfg.party)?;
        let mut seen = vec![party];
        for id in cfg.peers.keys() {
            let peer: u8 = id.parse().context("peer ids must be 1, 2 or 3")?;
            let peer = PartyId::new(peer)?;
            if seen.contains(&peer) {
                bail!("duplicate party id {peer} in config");
            }
            seen.push(peer);
        }
        if seen.len() != 3 {
            bail!("config must name this party and both peers");
        }
        Ok(cfg)
    }

    pub fn party_id(&self) -> PartyId {
        PartyId::new(self.party).expect("validated at load")
    }

    pub fn peer_addrs(&self) -> Vec<(PartyId, String)> {
        self.peers
            .iter()
            .map(|(id, addr)| (PartyId::new(id.parse().unwrap()).unwrap(), addr.clone()))
            .collect()
    }
}
