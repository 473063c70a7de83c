//! Reliable, ordered, framed point-to-point channels among the three
//! parties, with a transcript recorder.
//!
//! Two implementations share one [`Channel`] trait: an in-process loopback
//! used by tests and the single-host `classify --local` mode, and a TCP
//! transport for networked deployments. Failures abort the session; there
//! is no retry.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender};
use std::thread;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// One of the three computing servers, 1-indexed as in the protocol
/// description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartyId(u8);

impl PartyId {
    pub const P1: PartyId = PartyId(1);
    pub const P2: PartyId = PartyId(2);
    pub const P3: PartyId = PartyId(3);
    pub const ALL: [PartyId; 3] = [PartyId(1), PartyId(2), PartyId(3)];

    pub fn new(index: u8) -> Result<PartyId> {
        if (1..=3).contains(&index) {
            Ok(PartyId(index))
        } else {
            Err(Error::Config(format!("party id must be 1, 2 or 3, got {index}")))
        }
    }

    #[inline]
    pub fn index(self) -> u8 {
        self.0
    }

    /// Zero-based index, for array addressing.
    #[inline]
    pub fn idx0(self) -> usize {
        (self.0 - 1) as usize
    }

    /// Cyclic successor: 1 -> 2 -> 3 -> 1.
    #[inline]
    pub fn next(self) -> PartyId {
        PartyId(self.0 % 3 + 1)
    }

    /// Cyclic predecessor: 1 -> 3 -> 2 -> 1.
    #[inline]
    pub fn prev(self) -> PartyId {
        PartyId((self.0 + 1) % 3 + 1)
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// Session identifiers are 16 opaque bytes.
pub type SessionId = [u8; 16];

/// Derive a session id from an operator-supplied string: 32 hex digits are
/// decoded verbatim, anything else is folded into 16 bytes.
pub fn session_id_from_str(s: &str) -> SessionId {
    let mut id = [0u8; 16];
    let bytes = s.as_bytes();
    if bytes.len() == 32 && bytes.iter().all(|b| b.is_ascii_hexdigit()) {
        for (i, chunk) in bytes.chunks(2).enumerate() {
            let hi = (chunk[0] as char).to_digit(16).unwrap() as u8;
            let lo = (chunk[1] as char).to_digit(16).unwrap() as u8;
            id[i] = (hi << 4) | lo;
        }
    } else {
        for (i, &b) in bytes.iter().enumerate() {
            id[i % 16] = id[i % 16].wrapping_mul(31).wrapping_add(b);
        }
    }
    id
}

/// A wire message: payload is a sequence of little-endian 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub session_id: SessionId,
    pub round: u32,
    pub payload: Vec<u64>,
}

/// 16-byte session id, u32 round, u32 payload byte length.
pub const FRAME_HEADER_LEN: usize = 24;

/// Upper bound on a single frame payload; anything larger is malformed.
pub const MAX_FRAME_BYTES: u32 = 1 << 30;

impl Frame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let byte_len = (self.payload.len() * 8) as u32;
        let mut out = Vec::with_capacity(FRAME_HEADER_LEN + byte_len as usize);
        out.extend_from_slice(&self.session_id);
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&byte_len.to_le_bytes());
        for w in &self.payload {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Read one frame; any truncation or size violation is a framing error.
    pub fn read_from(r: &mut impl Read) -> Result<Frame> {
        let mut header = [0u8; FRAME_HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Framing(format!("short header: {e}")))?;
        let mut session_id = [0u8; 16];
        session_id.copy_from_slice(&header[..16]);
        let round = u32::from_le_bytes(header[16..20].try_into().unwrap());
        let byte_len = u32::from_le_bytes(header[20..24].try_into().unwrap());
        if byte_len % 8 != 0 || byte_len > MAX_FRAME_BYTES {
            return Err(Error::Framing(format!("bad payload length {byte_len}")));
        }
        let mut buf = vec![0u8; byte_len as usize];
        r.read_exact(&mut buf)
            .map_err(|e| Error::Framing(format!("truncated payload: {e}")))?;
        let payload = buf
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Frame {
            session_id,
            round,
            payload,
        })
    }
}

/// One sent message: (sender, receiver, round, payload byte length).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub sender: PartyId,
    pub receiver: PartyId,
    pub round: u32,
    pub bytes: u64,
}

/// Append-only record of every message a party sent.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    /// Shape view: round numbers stripped, order preserved. Two protocol
    /// runs over equal public parameters must produce equal shapes no
    /// matter what the secret inputs were.
    pub fn shape(&self) -> Vec<(u8, u8, u64)> {
        self.entries
            .iter()
            .map(|e| (e.sender.index(), e.receiver.index(), e.bytes))
            .collect()
    }

    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.bytes).sum()
    }
}

/// A party's endpoint: ordered, framed channels to both peers.
pub trait Channel {
    fn party(&self) -> PartyId;

    /// Enqueue `words` toward `to`. Rounds toward a fixed receiver must be
    /// strictly increasing; a reused round is a protocol-order error.
    fn send(&mut self, to: PartyId, round: u32, words: &[u64]) -> Result<()>;

    /// Block until the frame with this `(from, round)` arrives and return
    /// its payload.
    fn recv(&mut self, from: PartyId, round: u32) -> Result<Vec<u64>>;

    fn transcript(&self) -> &Transcript;

    fn take_transcript(&mut self) -> Transcript;
}

fn check_round_order(last: &mut Option<u32>, round: u32, to: PartyId) -> Result<()> {
    if let Some(prev) = *last {
        if round <= prev {
            return Err(Error::ProtocolOrder(format!(
                "round {round} toward {to} not after round {prev}"
            )));
        }
    }
    *last = Some(round);
    Ok(())
}

type FrameResult = std::result::Result<Frame, String>;

struct PeerQueues {
    incoming: Receiver<FrameResult>,
    pending: BTreeMap<u32, Vec<u64>>,
    last_sent: Option<u32>,
}

impl PeerQueues {
    fn recv_round(&mut self, from: PartyId, round: u32, session_id: &SessionId) -> Result<Vec<u64>> {
        if let Some(p) = self.pending.remove(&round) {
            return Ok(p);
        }
        loop {
            let frame = self
                .incoming
                .recv()
                .map_err(|_| Error::Transport(format!("connection to {from} lost")))?
                .map_err(Error::Framing)?;
            if frame.session_id != *session_id {
                return Err(Error::Framing(format!("frame from {from} has foreign session id")));
            }
            if frame.round == round {
                return Ok(frame.payload);
            }
            if self.pending.insert(frame.round, frame.payload).is_some() {
                return Err(Error::Framing(format!(
                    "duplicate round {} from {from}",
                    frame.round
                )));
            }
        }
    }
}

/// In-process transport: three endpoints wired pairwise over queues.
pub struct LoopbackChannel {
    party: PartyId,
    session_id: SessionId,
    outgoing: [Option<Sender<FrameResult>>; 3],
    peers: [Option<PeerQueues>; 3],
    transcript: Transcript,
}

/// Build the three wired endpoints of a loopback session.
pub fn loopback(session_id: SessionId) -> [LoopbackChannel; 3] {
    let mut channels: Vec<LoopbackChannel> = PartyId::ALL
        .into_iter()
        .map(|p| LoopbackChannel {
            party: p,
            session_id,
            outgoing: [None, None, None],
            peers: [None, None, None],
            transcript: Transcript::default(),
        })
        .collect();
    for s in 0..3usize {
        for r in 0..3usize {
            if s == r {
                continue;
            }
            let (tx, rx) = mpsc::channel();
            channels[s].outgoing[r] = Some(tx);
            channels[r].peers[s] = Some(PeerQueues {
                incoming: rx,
                pending: BTreeMap::new(),
                last_sent: None,
            });
        }
    }
    channels.try_into().map_err(|_| ()).unwrap()
}

impl LoopbackChannel {
    /// Deliver a raw frame, bypassing send-side ordering checks. Test hook
    /// for out-of-order arrival.
    #[doc(hidden)]
    pub fn inject_raw(&mut self, to: &mut LoopbackChannel, round: u32, payload: Vec<u64>) {
        let frame = Frame {
            session_id: self.session_id,
            round,
            payload,
        };
        self.outgoing[to.party.idx0()]
            .as_ref()
            .unwrap()
            .send(Ok(frame))
            .unwrap();
    }
}

impl Channel for LoopbackChannel {
    fn party(&self) -> PartyId {
        self.party
    }

    fn send(&mut self, to: PartyId, round: u32, words: &[u64]) -> Result<()> {
        if to == self.party {
            return Err(Error::ProtocolOrder("send to self".into()));
        }
        let slot = self.peers[to.idx0()]
            .as_mut()
            .map(|q| &mut q.last_sent)
            .expect("peer wired");
        check_round_order(slot, round, to)?;
        let frame = Frame {
            session_id: self.session_id,
            round,
            payload: words.to_vec(),
        };
        self.outgoing[to.idx0()]
            .as_ref()
            .unwrap()
            .send(Ok(frame))
            .map_err(|_| Error::Transport(format!("peer {to} gone")))?;
        self.transcript.push(TranscriptEntry {
            sender: self.party,
            receiver: to,
            round,
            bytes: (words.len() * 8) as u64,
        });
        Ok(())
    }

    fn recv(&mut self, from: PartyId, round: u32) -> Result<Vec<u64>> {
        if from == self.party {
            return Err(Error::ProtocolOrder("recv from self".into()));
        }
        let session_id = self.session_id;
        self.peers[from.idx0()]
            .as_mut()
            .expect("peer wired")
            .recv_round(from, round, &session_id)
    }

    fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn take_transcript(&mut self) -> Transcript {
        std::mem::take(&mut self.transcript)
    }
}

struct TcpPeer {
    queues: PeerQueues,
    writer_tx: Sender<Vec<u8>>,
}

/// TCP transport endpoint. Per peer, a writer thread drains an outgoing
/// queue and a reader thread parses frames into an incoming queue;
/// `send` must not block even when all three parties transmit large
/// batches at once.
pub struct TcpChannel {
    party: PartyId,
    session_id: SessionId,
    peers: [Option<TcpPeer>; 3],
    transcript: Transcript,
}

fn spawn_peer_threads(stream: TcpStream) -> Result<(Sender<Vec<u8>>, Receiver<FrameResult>)> {
    stream
        .set_nodelay(true)
        .map_err(|e| Error::Transport(format!("nodelay: {e}")))?;
    let mut write_half = stream
        .try_clone()
        .map_err(|e| Error::Transport(format!("clone stream: {e}")))?;
    let mut read_half = stream;

    let (out_tx, out_rx) = mpsc::channel::<Vec<u8>>();
    thread::spawn(move || {
        while let Ok(buf) = out_rx.recv() {
            if write_half.write_all(&buf).and_then(|_| write_half.flush()).is_err() {
                break;
            }
        }
    });

    let (in_tx, in_rx) = mpsc::channel();
    thread::spawn(move || loop {
        match Frame::read_from(&mut read_half) {
            Ok(frame) => {
                if in_tx.send(Ok(frame)).is_err() {
                    break;
                }
            }
            Err(e) => {
                let _ = in_tx.send(Err(e.to_string()));
                break;
            }
        }
    });

    Ok((out_tx, in_rx))
}

impl TcpChannel {
    /// Establish the full mesh for one party. For every pair, the lower id
    /// accepts and the higher id dials; a 17-byte handshake carries the
    /// dialer's id and the session id. Aborts when `timeout` elapses before
    /// both links are up.
    pub fn connect(
        party: PartyId,
        listen_addr: &str,
        peer_addrs: &[(PartyId, String)],
        session_id: SessionId,
        timeout: Duration,
    ) -> Result<TcpChannel> {
        let deadline = Instant::now() + timeout;
        let expect_incoming: Vec<PartyId> = PartyId::ALL
            .into_iter()
            .filter(|p| p.index() > party.index())
            .collect();
        let dial_out: Vec<PartyId> = PartyId::ALL
            .into_iter()
            .filter(|p| p.index() < party.index())
            .collect();

        let mut streams: [Option<TcpStream>; 3] = [None, None, None];

        let accept_rx = if expect_incoming.is_empty() {
            None
        } else {
            let listener = TcpListener::bind(listen_addr)
                .map_err(|e| Error::Transport(format!("bind {listen_addr}: {e}")))?;
            let n = expect_incoming.len();
            let (tx, rx) = mpsc::channel();
            thread::spawn(move || {
                for _ in 0..n {
                    match listener.accept() {
                        Ok((mut stream, _)) => {
                            let mut hello = [0u8; 17];
                            if stream.read_exact(&mut hello).is_err() {
                                continue;
                            }
                            let _ = tx.send((hello, stream));
                        }
                        Err(_) => break,
                    }
                }
            });
            Some(rx)
        };

        for peer in dial_out {
            let addr = peer_addrs
                .iter()
                .find(|(p, _)| *p == peer)
                .map(|(_, a)| a.clone())
                .ok_or_else(|| Error::Config(format!("no address for peer {peer}")))?;
            let mut stream = loop {
                match TcpStream::connect(&addr) {
                    Ok(s) => break s,
                    Err(e) => {
                        if Instant::now() >= deadline {
                            return Err(Error::Transport(format!(
                                "timed out connecting to {peer} at {addr}: {e}"
                            )));
                        }
                        thread::sleep(Duration::from_millis(50));
                    }
                }
            };
            let mut hello = [0u8; 17];
            hello[0] = party.index();
            hello[1..].copy_from_slice(&session_id);
            stream
                .write_all(&hello)
                .map_err(|e| Error::Transport(format!("handshake to {peer}: {e}")))?;
            streams[peer.idx0()] = Some(stream);
        }

        if let Some(rx) = accept_rx {
            for _ in 0..expect_incoming.len() {
                let remaining = deadline
                    .checked_duration_since(Instant::now())
                    .ok_or_else(|| Error::Transport("timed out waiting for peers".into()))?;
                let (hello, stream) = rx
                    .recv_timeout(remaining)
                    .map_err(|_| Error::Transport("timed out waiting for peers".into()))?;
                let sender = PartyId::new(hello[0])
                    .map_err(|_| Error::Framing(format!("handshake with bad party id {}", hello[0])))?;
                if hello[1..] != session_id {
                    return Err(Error::Framing(format!("peer {sender} joined with foreign session id")));
                }
                streams[sender.idx0()] = Some(stream);
            }
        }

        let mut peers: [Option<TcpPeer>; 3] = [None, None, None];
        for p in PartyId::ALL {
            if p == party {
                continue;
            }
            let stream = streams[p.idx0()]
                .take()
                .ok_or_else(|| Error::Transport(format!("no link to {p}")))?;
            let (writer_tx, incoming) = spawn_peer_threads(stream)?;
            peers[p.idx0()] = Some(TcpPeer {
                queues: PeerQueues {
                    incoming,
                    pending: BTreeMap::new(),
                    last_sent: None,
                },
                writer_tx,
            });
        }

        Ok(TcpChannel {
            party,
            session_id,
            peers,
            transcript: Transcript::default(),
        })
    }
}

impl Channel for TcpChannel {
    fn party(&self) -> PartyId {
        self.party
    }

    fn send(&mut self, to: PartyId, round: u32, words: &[u64]) -> Result<()> {
        let peer = self.peers[to.idx0()]
            .as_mut()
            .ok_or_else(|| Error::Transport(format!("no link to {to}")))?;
        check_round_order(&mut peer.queues.last_sent, round, to)?;
        let frame = Frame {
            session_id: self.session_id,
            round,
            payload: words.to_vec(),
        };
        peer.writer_tx
            .send(frame.to_bytes())
            .map_err(|_| Error::Transport(format!("connection to {to} lost")))?;
        self.transcript.push(TranscriptEntry {
            sender: self.party,
            receiver: to,
            round,
            bytes: (words.len() * 8) as u64,
        });
        Ok(())
    }

    fn recv(&mut self, from: PartyId, round: u32) -> Result<Vec<u64>> {
        let session_id = self.session_id;
        self.peers[from.idx0()]
            .as_mut()
            .ok_or_else(|| Error::Transport(format!("no link to {from}")))?
            .queues
            .recv_round(from, round, &session_id)
    }

    fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn take_transcript(&mut self) -> Transcript {
        std::mem::take(&mut self.transcript)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn party_cycle() {
        assert_eq!(PartyId::P1.next(), PartyId::P2);
        assert_eq!(PartyId::P2.next(), PartyId::P3);
        assert_eq!(PartyId::P3.next(), PartyId::P1);
        assert_eq!(PartyId::P1.prev(), PartyId::P3);
        assert_eq!(PartyId::P3.prev(), PartyId::P2);
        assert!(PartyId::new(0).is_err());
        assert!(PartyId::new(4).is_err());
    }

    #[test]
    fn loopback_echo() {
        let [mut c1, mut c2, _c3] = loopback([7u8; 16]);
        c1.send(PartyId::P2, 0, &[1, 2, 3]).unwrap();
        assert_eq!(c2.recv(PartyId::P1, 0).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn single_ring_element_is_eight_bytes() {
        let [mut c1, _c2, mut c3] = loopback([0u8; 16]);
        c1.send(PartyId::P3, 0, &[42]).unwrap();
        c3.recv(PartyId::P1, 0).unwrap();
        assert_eq!(c1.transcript().entries()[0].bytes, 8);
    }

    #[test]
    fn matrix_batch_payload_length() {
        let words = vec![0u64; 48 * 48];
        let [mut c1, mut c2, _c3] = loopback([0u8; 16]);
        c1.send(PartyId::P2, 0, &words).unwrap();
        c2.recv(PartyId::P1, 0).unwrap();
        assert_eq!(c1.transcript().entries()[0].bytes, 18432);
    }

    #[test]
    fn duplicate_round_rejected() {
        let [mut c1, _c2, _c3] = loopback([0u8; 16]);
        c1.send(PartyId::P2, 5, &[1]).unwrap();
        let err = c1.send(PartyId::P2, 5, &[2]).unwrap_err();
        assert!(matches!(err, Error::ProtocolOrder(_)));
        let err = c1.send(PartyId::P2, 4, &[2]).unwrap_err();
        assert!(matches!(err, Error::ProtocolOrder(_)));
    }

    #[test]
    fn out_of_order_rounds_are_buffered() {
        let [mut c1, mut c2, _c3] = loopback([0u8; 16]);
        c1.inject_raw(&mut c2, 1, vec![11]);
        c1.inject_raw(&mut c2, 0, vec![10]);
        assert_eq!(c2.recv(PartyId::P1, 0).unwrap(), vec![10]);
        assert_eq!(c2.recv(PartyId::P1, 1).unwrap(), vec![11]);
    }

    #[test]
    fn truncated_frame_is_framing_error() {
        let frame = Frame {
            session_id: [1u8; 16],
            round: 3,
            payload: vec![1, 2, 3],
        };
        let bytes = frame.to_bytes();
        let mut short = &bytes[..bytes.len() - 4];
        assert!(matches!(Frame::read_from(&mut short), Err(Error::Framing(_))));
        let mut full = &bytes[..];
        assert_eq!(Frame::read_from(&mut full).unwrap(), frame);
    }

    #[test]
    fn bad_payload_length_rejected() {
        let mut bytes = vec![0u8; FRAME_HEADER_LEN];
        bytes[20..24].copy_from_slice(&9u32.to_le_bytes()); // not a multiple of 8
        assert!(matches!(
            Frame::read_from(&mut bytes.as_slice()),
            Err(Error::Framing(_))
        ));
    }

    #[test]
    fn transcript_shape_strips_rounds() {
        let [mut c1, mut c2, _c3] = loopback([0u8; 16]);
        assert!(c1.transcript().shape().is_empty());
        c1.send(PartyId::P2, 0, &[1]).unwrap();
        c1.send(PartyId::P2, 1, &[1, 2]).unwrap();
        c2.recv(PartyId::P1, 0).unwrap();
        c2.recv(PartyId::P1, 1).unwrap();
        assert_eq!(c1.transcript().shape(), vec![(1, 2, 8), (1, 2, 16)]);
    }

    #[test]
    fn session_id_parsing() {
        let hex = session_id_from_str("000102030405060708090a0b0c0d0e0f");
        assert_eq!(hex[..4], [0, 1, 2, 3]);
        let a = session_id_from_str("demo");
        let b = session_id_from_str("demo2");
        assert_ne!(a, b);
    }

    #[test]
    fn tcp_three_party_mesh() {
        let session = [9u8; 16];
        let ports: Vec<u16> = (0..3)
            .map(|_| {
                let l = TcpListener::bind("127.0.0.1:0").unwrap();
                l.local_addr().unwrap().port()
            })
            .collect();
        let addrs: Vec<String> = ports.iter().map(|p| format!("127.0.0.1:{p}")).collect();

        let handles: Vec<_> = PartyId::ALL
            .into_iter()
            .map(|party| {
                let addrs = addrs.clone();
                thread::spawn(move || {
                    let peers: Vec<(PartyId, String)> = PartyId::ALL
                        .into_iter()
                        .filter(|p| *p != party)
                        .map(|p| (p, addrs[p.idx0()].clone()))
                        .collect();
                    let mut ch = TcpChannel::connect(
                        party,
                        &addrs[party.idx0()],
                        &peers,
                        session,
                        Duration::from_secs(10),
                    )
                    .unwrap();
                    // everyone sends one word to prev, receives from next
                    ch.send(party.prev(), 0, &[party.index() as u64]).unwrap();
                    let got = ch.recv(party.next(), 0).unwrap();
                    assert_eq!(got, vec![party.next().index() as u64]);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    }

    #[test]
    fn tcp_carries_large_frames() {
        let session = [11u8; 16];
        let ports: Vec<u16> = (0..3)
            .map(|_| {
                let l = TcpListener::bind("127.0.0.1:0").unwrap();
                l.local_addr().unwrap().port()
            })
            .collect();
        let addrs: Vec<String> = ports.iter().map(|p| format!("127.0.0.1:{p}")).collect();
        let handles: Vec<_> = PartyId::ALL
            .into_iter()
            .map(|party| {
                let addrs = addrs.clone();
                thread::spawn(move || {
                    let peers: Vec<(PartyId, String)> = PartyId::ALL
                        .into_iter()
                        .filter(|p| *p != party)
                        .map(|p| (p, addrs[p.idx0()].clone()))
                        .collect();
                    let mut ch = TcpChannel::connect(
                        party,
                        &addrs[party.idx0()],
                        &peers,
                        session,
                        Duration::from_secs(10),
                    )
                    .unwrap();
                    // a megaword frame in each direction of the ring, all
                    // parties writing before any of them reads
                    let words: Vec<u64> = (0..1_000_000u64)
                        .map(|i| i.wrapping_mul(party.index() as u64))
                        .collect();
                    ch.send(party.prev(), 0, &words).unwrap();
                    let got = ch.recv(party.next(), 0).unwrap();
                    assert_eq!(got.len(), 1_000_000);
                    let from = party.next().index() as u64;
                    assert_eq!(got[999_999], 999_999u64.wrapping_mul(from));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    }

    #[test]
    fn tcp_missing_peer_times_out() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("127.0.0.1:{}", l.local_addr().unwrap().port());
        drop(l);
        // party 3 dials parties 1 and 2; nobody is listening
        let err = match TcpChannel::connect(
            PartyId::P3,
            "127.0.0.1:0",
            &[(PartyId::P1, addr.clone()), (PartyId::P2, addr)],
            [0u8; 16],
            Duration::from_millis(300),
        ) {
            Ok(_) => panic!("connect should time out"),
            Err(e) => e,
        };
        assert!(matches!(err, Error::Transport(_)));
    }
}
