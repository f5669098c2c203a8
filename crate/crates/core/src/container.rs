//! Checksummed binary container used by model and pipeline checkpoints.
//!
//! Layout (little endian): 8-byte magic, u32 version, u64 metadata length,
//! metadata JSON, u64 float count, f64 values, then a SHA-256 digest of
//! every preceding byte.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const DIGEST_LEN: usize = 32;

pub fn encode<M: Serialize>(magic: &[u8; 8], version: u32, meta: &M, floats: &[f64]) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(meta)?;
    let mut out = Vec::with_capacity(8 + 4 + 8 + meta.len() + 8 + floats.len() * 8 + DIGEST_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(floats.len() as u64).to_le_bytes());
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated document".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode<M: DeserializeOwned>(magic: &[u8; 8], version: u32, bytes: &[u8]) -> Result<(M, Vec<f64>)> {
    if bytes.len() < 8 + 4 + DIGEST_LEN {
        return Err(Error::Checkpoint("document too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != magic {
        return Err(Error::Checkpoint("wrong document type".into()));
    }
    let found = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if found != version {
        return Err(Error::Checkpoint(format!("version {found}, expected {version}")));
    }
    let meta_len = r.u64()? as usize;
    let meta: M = serde_json::from_slice(r.take(meta_len)?)?;
    let n = r.u64()? as usize;
    let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("bad length".into()))?)?;
    let floats = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((meta, floats))
}
