//! Adapter checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! "LSAT"  u16 version  u32 entry_count
//! per entry (ascending layer name):
//!     u32 name_len, name (UTF-8)
//!     u32 d, u32 k, u32 r, f64 scaling
//!     A as d*r f64 row-major, then B as r*k f64 row-major
//! u32 tag_len, tag (UTF-8)
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{AdapterSet, LoraAdapter};
use crate::codec::{len_u32, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn encode_adapter_set<T: Scalar>(set: &AdapterSet<T>) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.header();
    w.u32(len_u32(set.len(), "entry count")?);
    for ad in set.iter() {
        let (d, k) = ad.shape();
        w.str(ad.target())?;
        w.u32(len_u32(d, "d")?);
        w.u32(len_u32(k, "k")?);
        w.u32(len_u32(ad.rank(), "r")?);
        w.f64(ad.scaling().as_f64());
        w.matrix(ad.a());
        w.matrix(ad.b());
    }
    w.str(set.tag())?;
    Ok(w.finish())
}

pub fn decode_adapter_set<T: Scalar>(bytes: &[u8]) -> Result<AdapterSet<T>> {
    let mut r = ByteReader::new(bytes);
    r.header()?;
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let entry_start = r.offset();
        let name = r.str()?;
        let d = r.u32()? as usize;
        let k = r.u32()? as usize;
        let rank = r.u32()? as usize;
        let scaling_at = r.offset();
        let scaling = r.f64()?;
        let s = T::cast(scaling);
        if !scaling.is_finite() || s.as_f64().to_bits() != scaling.to_bits() {
            return Err(Error::Format { offset: scaling_at, msg: format!("invalid scaling {scaling}") });
        }
        let a = r.matrix::<T>(d, rank)?;
        let b = r.matrix::<T>(rank, k)?;
        let ad = LoraAdapter::from_factors(&name, a, b, s)
            .map_err(|e| Error::Format { offset: entry_start, msg: e.to_string() })?;
        entries.push((entry_start, ad));
    }
    let tag = r.str()?;
    r.expect_end()?;
    let mut set = AdapterSet::new(tag);
    for (offset, ad) in entries {
        let name = ad.target().to_string();
        if set.insert(ad).is_some() {
            return Err(Error::Format { offset, msg: format!("duplicate layer {name}") });
        }
    }
    Ok(set)
}

pub fn save_adapter_set<T: Scalar>(set: &AdapterSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_adapter_set(set)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_adapter_set<T: Scalar>(path: impl AsRef<Path>) -> Result<AdapterSet<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_adapter_set(&bytes)
}

/// SHA-256 of the encoded checkpoint, hex.
pub fn adapter_set_digest<T: Scalar>(set: &AdapterSet<T>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(encode_adapter_set(set)?)))
}
