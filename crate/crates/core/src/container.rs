//! The `RVID` video container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | field                                      |
//! |-------|--------------------------------------------|
//! | 4     | magic `RVID`                               |
//! | 2     | version, `u16` = 1                         |
//! | 20    | `N, L, H, W, Ch` as `u32`                  |
//! | 1     | dtype tag, `1` = float32                   |
//! | ...   | `N*L*H*W*Ch` float32 values, row-major over (item, frame, row, col, channel) |
//!
//! Values are held as `f64` in memory and narrowed to `f32` on write, so a
//! read-write cycle reproduces a file byte-for-byte.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::video::{VideoBatch, VideoShape, VideoTensor};

pub const MAGIC: &[u8; 4] = b"RVID";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 20 + 1;

pub fn encode_container(batch: &VideoBatch) -> Vec<u8> {
    let shape = batch.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * batch.len() * shape.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [
        batch.len(),
        shape.frames,
        shape.height,
        shape.width,
        shape.channels,
    ] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.push(DTYPE_F32);
    for item in batch {
        for &v in item.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<VideoBatch> {
    let bad = |reason: String| Error::format("RVID container", reason);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 5];
    for (i, d) in dims.iter_mut().enumerate() {
        let at = 6 + 4 * i;
        *d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    }
    let dtype = bytes[26];
    if dtype != DTYPE_F32 {
        return Err(bad(format!("unsupported dtype tag {dtype}")));
    }
    let [n, frames, height, width, channels] = dims;
    if n == 0 {
        return Err(bad("empty batch".into()));
    }
    let shape = VideoShape::new(frames, height, width, channels)
        .map_err(|e| bad(e.to_string()))?;
    let expected = dims
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(bad(format!(
            "payload size mismatch: header implies {expected} bytes, found {}",
            payload.len()
        )));
    }
    let per_item = shape.len() * 4;
    let items = payload
        .chunks_exact(per_item)
        .map(|chunk| {
            let data: Vec<f64> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(bad("non-finite pixel value".into()));
            }
            VideoTensor::from_vec(shape, data)
        })
        .collect::<Result<Vec<_>>>()?;
    VideoBatch::new(items)
}

pub fn write_container(batch: &VideoBatch, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_container(batch))?;
    Ok(())
}

pub fn read_container(path: impl AsRef<Path>) -> Result<VideoBatch> {
    decode_container(&fs::read(path)?)
}
