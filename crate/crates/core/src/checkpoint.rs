//! Binary model checkpoints.
//!
//! Layout (little-endian): `b"CSCD"`, `u32` version, `u32` M, L, K, N_train,
//! then `f64` parameter arrays in [`UnfoldedModel::param_groups`] order, then
//! a CRC32 of every preceding byte.

use std::io::{Read, Write};
use std::path::Path;

use crate::csc::{Dictionary, UNIT_NORM_TOL};
use crate::error::{Error, Result};
use crate::unfolded::UnfoldedModel;

pub const MAGIC: &[u8; 4] = b"CSCD";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 5;

fn put_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Serializes a model. Only models whose banks all have length `L` fit the
/// format.
pub fn encode(model: &UnfoldedModel) -> Result<Vec<u8>> {
    let l = model.kernel_len();
    if model.w1_len() != l || model.w2_len() != l {
        return Err(Error::Checkpoint(format!(
            "bank lengths {}/{} differ from kernel length {l}",
            model.w1_len(),
            model.w2_len()
        )));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * model.num_params() + 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut buf, model.num_kernels())?;
    put_u32(&mut buf, l)?;
    put_u32(&mut buf, model.folds())?;
    put_u32(&mut buf, model.n_train())?;
    for group in model.param_groups() {
        for v in group {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32(&mut self) -> u32 {
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        v
    }

    fn f64s(&mut self, n: usize) -> Vec<f64> {
        let out = self.bytes[self.pos..self.pos + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.pos += 8 * n;
        out
    }
}

pub fn decode(bytes: &[u8]) -> Result<UnfoldedModel> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("CRC mismatch".into()));
    }
    let mut cur = Cursor { bytes: body, pos: 4 };
    let version = cur.u32();
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let (m, l, k, n_train) = (
        cur.u32() as usize,
        cur.u32() as usize,
        cur.u32() as usize,
        cur.u32() as usize,
    );
    if m == 0 || l == 0 || k == 0 {
        return Err(Error::Checkpoint(format!("degenerate shape M={m} L={l} K={k}")));
    }
    let expected = m * l + k * m * l + (k - 1) * m * m * l + k * m;
    if body.len() != HEADER_LEN + 8 * expected {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, shape needs {}",
            body.len() - HEADER_LEN,
            8 * expected
        )));
    }
    let decoder = cur.f64s(m * l);
    let w1 = (0..k).map(|_| cur.f64s(m * l)).collect();
    let w2 = (0..k - 1).map(|_| cur.f64s(m * m * l)).collect();
    let theta = (0..k).map(|_| cur.f64s(m)).collect();
    let decoder = Dictionary::new(m, l, decoder).map_err(|e| {
        Error::Checkpoint(format!("decoder not unit-norm within {UNIT_NORM_TOL}: {e}"))
    })?;
    UnfoldedModel::from_parts(decoder, k, l, l, w1, w2, theta, n_train)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(model: &UnfoldedModel, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(model)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<UnfoldedModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
