//! Binary container: 8-byte magic, u64 LE manifest length, JSON manifest,
//! then little-endian f32 arrays in manifest order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the array section.
    pub offset: u64,
}

pub(crate) fn array_index<'a>(arrays: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<ArrayEntry> {
    let mut offset = 0;
    arrays
        .into_iter()
        .map(|(name, t)| {
            let e = ArrayEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            };
            offset += 4 * t.numel() as u64;
            e
        })
        .collect()
}

pub(crate) fn write<'a>(
    magic: &[u8; 8],
    manifest: &impl Serialize,
    arrays: impl IntoIterator<Item = &'a Tensor>,
) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(manifest)?;
    let mut out = Vec::with_capacity(16 + json.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in arrays {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Splits `bytes` into the manifest and the raw array section.
pub(crate) fn split<'b, M: for<'de> Deserialize<'de>>(
    magic: &[u8; 8],
    bytes: &'b [u8],
    err: fn(String) -> Error,
) -> Result<(M, &'b [u8])> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(err("bad magic".into()));
    }
    let json_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[16..];
    if json_len > body.len() as u64 {
        return Err(err("truncated manifest".into()));
    }
    let (json, data) = body.split_at(json_len as usize);
    let manifest = serde_json::from_slice(json).map_err(|e| err(format!("bad manifest: {e}")))?;
    Ok((manifest, data))
}

/// Reads every indexed array; the section must be consumed exactly.
pub(crate) fn read_arrays(
    index: &[ArrayEntry],
    data: &[u8],
    err: fn(String) -> Error,
) -> Result<Vec<(String, Tensor)>> {
    let mut expected = 0u64;
    let mut arrays = Vec::with_capacity(index.len());
    for e in index {
        if e.offset != expected {
            return Err(err(format!("array {} at offset {}, expected {expected}", e.name, e.offset)));
        }
        let n: usize = e.shape.iter().product();
        let end = e.offset + 4 * n as u64;
        if end > data.len() as u64 {
            return Err(err(format!("truncated data in array {}", e.name)));
        }
        let values = data[e.offset as usize..end as usize]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        arrays.push((e.name.clone(), Tensor::new(e.shape.clone(), values)?));
        expected = end;
    }
    if expected != data.len() as u64 {
        return Err(err(format!("{} trailing bytes after the last array", data.len() as u64 - expected)));
    }
    Ok(arrays)
}
