//! Bit-exact file formats for tensors, shares, and preprocessing material.
//!
//! Base container layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MPCT"
//! 4       1     version (= 1)
//! 5       1     dtype: 0 = ring u64, 1 = real f64
//! 6       1     ndim
//! 7       1     kind: 0 = plain tensor, 1 = share file
//! [share files only]
//! 8       16    session id
//! 24      1     holder party id (1..3)
//! 25      1     role tag
//! 26      1     param (preprocessing shift amount; 0 elsewhere)
//! 27      1     zero
//! [both]
//! ..      8*ndim  dims, u64 each
//! ..      8*prod(dims)  payload, row-major
//! ```
//!
//! Share-file payloads store the holder's two components interleaved, so
//! their recorded dims carry a trailing `2` over the logical shape.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ring::RingElement;
use crate::sharing::{dims_len, ShareTensor};
use crate::transport::{PartyId, SessionId};

pub const MAGIC: [u8; 4] = *b"MPCT";
pub const VERSION: u8 = 1;

const KIND_TENSOR: u8 = 0;
const KIND_SHARE: u8 = 1;

const MAX_NDIM: u8 = 8;

/// Upper bound on elements a container may declare; rejects headers whose
/// dims product would overflow or demand absurd allocations.
const MAX_ELEMENTS: u64 = 1 << 28;

fn checked_len(dims: &[usize]) -> Result<usize> {
    let mut n: u64 = 1;
    for &d in dims {
        n = n
            .checked_mul(d as u64)
            .filter(|&n| n <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format(format!("dims {dims:?} exceed the element limit")))?;
    }
    Ok(n as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Ring(Vec<RingElement>),
    Real(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::Ring(v) => v.len(),
            TensorData::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> u8 {
        match self {
            TensorData::Ring(_) => 0,
            TensorData::Real(_) => 1,
        }
    }
}

/// A plaintext tensor container.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorContainer {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

fn write_dims(w: &mut impl Write, dims: &[usize]) -> Result<()> {
    for &d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    Ok(())
}

fn read_dims(r: &mut impl Read, ndim: u8) -> Result<Vec<usize>> {
    let mut dims = Vec::with_capacity(ndim as usize);
    let mut buf = [0u8; 8];
    for _ in 0..ndim {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("truncated dims: {e}")))?;
        let d = u64::from_le_bytes(buf);
        if d > (1 << 32) {
            return Err(Error::Format(format!("implausible dimension {d}")));
        }
        dims.push(d as usize);
    }
    Ok(dims)
}

fn read_words(r: &mut impl Read, n: usize) -> Result<Vec<u64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn base_header(dtype: u8, ndim: u8, kind: u8) -> [u8; 8] {
    let mut h = [0u8; 8];
    h[..4].copy_from_slice(&MAGIC);
    h[4] = VERSION;
    h[5] = dtype;
    h[6] = ndim;
    h[7] = kind;
    h
}

fn check_base_header(h: &[u8; 8]) -> Result<(u8, u8, u8)> {
    if h[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if h[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", h[4])));
    }
    if h[6] > MAX_NDIM {
        return Err(Error::Format(format!("ndim {} too large", h[6])));
    }
    Ok((h[5], h[6], h[7]))
}

impl TensorContainer {
    pub fn ring(dims: Vec<usize>, vals: Vec<RingElement>) -> Result<Self> {
        if vals.len() != dims_len(&dims) {
            return Err(Error::Format(format!(
                "{} values for dims {:?}",
                vals.len(),
                dims
            )));
        }
        Ok(TensorContainer { dims, data: TensorData::Ring(vals) })
    }

    pub fn real(dims: Vec<usize>, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != dims_len(&dims) {
            return Err(Error::Format(format!(
                "{} values for dims {:?}",
                vals.len(),
                dims
            )));
        }
        Ok(TensorContainer { dims, data: TensorData::Real(vals) })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        if self.dims.len() > MAX_NDIM as usize {
            return Err(Error::Format("too many dimensions".into()));
        }
        w.write_all(&base_header(self.data.dtype(), self.dims.len() as u8, KIND_TENSOR))?;
        write_dims(w, &self.dims)?;
        match &self.data {
            TensorData::Ring(vals) => {
                for v in vals {
                    w.write_all(&v.0.to_le_bytes())?;
                }
            }
            TensorData::Real(vals) => {
                for v in vals {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut h = [0u8; 8];
        r.read_exact(&mut h)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        let (dtype, ndim, kind) = check_base_header(&h)?;
        if kind != KIND_TENSOR {
            return Err(Error::Format("expected a plain tensor container".into()));
        }
        let dims = read_dims(r, ndim)?;
        let n = checked_len(&dims)?;
        let words = read_words(r, n)?;
        let data = match dtype {
            0 => TensorData::Ring(words.into_iter().map(RingElement).collect()),
            1 => TensorData::Real(words.into_iter().map(f64::from_bits).collect()),
            other => return Err(Error::Format(format!("unknown dtype {other}"))),
        };
        Ok(TensorContainer { dims, data })
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let out = Self::read_from(&mut r)?;
        ensure_eof(&mut r)?;
        Ok(out)
    }
}

fn ensure_eof(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(()),
        Ok(_) => Err(Error::Format("trailing bytes after payload".into())),
        Err(e) => Err(e.into()),
    }
}

/// What a share file carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShareRole {
    Video,
    Selection,
    Weights,
    PreprocBits,
    PreprocPairs,
    Label,
}

impl ShareRole {
    pub fn tag(self) -> u8 {
        match self {
            ShareRole::Video => 0,
            ShareRole::Selection => 1,
            ShareRole::Weights => 2,
            ShareRole::PreprocBits => 3,
            ShareRole::PreprocPairs => 4,
            ShareRole::Label => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => ShareRole::Video,
            1 => ShareRole::Selection,
            2 => ShareRole::Weights,
            3 => ShareRole::PreprocBits,
            4 => ShareRole::PreprocPairs,
            5 => ShareRole::Label,
            other => return Err(Error::Format(format!("unknown share role {other}"))),
        })
    }
}

/// One party's share of a tensor, bound to a session.
#[derive(Clone, Debug, PartialEq)]
pub struct ShareFile {
    pub session_id: SessionId,
    pub role: ShareRole,
    /// Preprocessing shift amount for pair files; zero otherwise.
    pub param: u8,
    pub tensor: ShareTensor,
}

impl ShareFile {
    pub fn new(session_id: SessionId, role: ShareRole, param: u8, tensor: ShareTensor) -> Self {
        ShareFile { session_id, role, param, tensor }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut dims = self.tensor.dims.clone();
        dims.push(2);
        if dims.len() > MAX_NDIM as usize {
            return Err(Error::Format("too many dimensions".into()));
        }
        w.write_all(&base_header(0, dims.len() as u8, KIND_SHARE))?;
        w.write_all(&self.session_id)?;
        w.write_all(&[self.tensor.holder.index(), self.role.tag(), self.param, 0])?;
        write_dims(w, &dims)?;
        for i in 0..self.tensor.len() {
            w.write_all(&self.tensor.first[i].0.to_le_bytes())?;
            w.write_all(&self.tensor.second[i].0.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut h = [0u8; 8];
        r.read_exact(&mut h)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        let (dtype, ndim, kind) = check_base_header(&h)?;
        if kind != KIND_SHARE {
            return Err(Error::Format("expected a share container".into()));
        }
        if dtype != 0 {
            return Err(Error::Format("share payloads must be ring elements".into()));
        }
        let mut ext = [0u8; 20];
        r.read_exact(&mut ext)
            .map_err(|e| Error::Format(format!("truncated share header: {e}")))?;
        let mut session_id = [0u8; 16];
        session_id.copy_from_slice(&ext[..16]);
        let holder = PartyId::new(ext[16]).map_err(|_| Error::Format(format!("bad holder {}", ext[16])))?;
        let role = ShareRole::from_tag(ext[17])?;
        let param = ext[18];
        let mut dims = read_dims(r, ndim)?;
        if dims.pop() != Some(2) {
            return Err(Error::Format("share dims must end in component axis 2".into()));
        }
        let n = checked_len(&dims)?;
        let words = read_words(r, n * 2)?;
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for pair in words.chunks_exact(2) {
            first.push(RingElement(pair[0]));
            second.push(RingElement(pair[1]));
        }
        Ok(ShareFile {
            session_id,
            role,
            param,
            tensor: ShareTensor::new(holder, dims, first, second)?,
        })
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let out = Self::read_from(&mut r)?;
        ensure_eof(&mut r)?;
        Ok(out)
    }

    /// Load and check session, role and holder in one step.
    pub fn load_expected(
        path: &Path,
        session_id: SessionId,
        role: ShareRole,
        holder: PartyId,
    ) -> Result<ShareTensor> {
        let f = Self::from_file(path)?;
        if f.session_id != session_id {
            return Err(Error::Format(format!("{}: foreign session id", path.display())));
        }
        if f.role != role {
            return Err(Error::Format(format!("{}: unexpected role", path.display())));
        }
        if f.tensor.holder != holder {
            return Err(Error::Format(format!(
                "{}: holder {} but party {holder} expected",
                path.display(),
                f.tensor.holder
            )));
        }
        Ok(f.tensor)
    }
}
