//! The `RMWT` model weight file.
//!
//! ```text
//! "RMWT" | version u16 = 1 | kind u8 (1 = affine, 2 = toy network)
//!        | n u32 | n x u32 architecture fields
//!        | parameter count u64 | float32 parameters
//! ```
//!
//! Architecture fields are `frames, height, width, channels, extra, T`,
//! where `extra` is the bucket count (affine) or hidden width (toy network).
//! The toy network appends one temporal dilation per layer. Little-endian
//! throughout.

use std::fs;
use std::path::Path;

use crate::bytes::Reader;
use crate::error::{Error, Result};
use crate::model::toynet::{MAX_LAYERS, MAX_VOXELS};
use crate::model::{AffineScoreModel, ScoreModel, ToyVideoNet, ToyVideoNetConfig, TrainableModel};
use crate::video::VideoShape;

pub const MODEL_MAGIC: &[u8; 4] = b"RMWT";
const VERSION: u16 = 1;
const KIND_AFFINE: u8 = 1;
const KIND_TOY: u8 = 2;
const BASE_FIELDS: usize = 6;
/// Affine models are dense in the frame size; cap it so a header cannot
/// request an absurd allocation.
const MAX_AFFINE_FRAME: usize = 4096;

pub fn encode_model(model: &TrainableModel) -> Vec<u8> {
    let (kind, shape, extra, steps, dilations) = match model {
        TrainableModel::Affine(m) => (KIND_AFFINE, m.shape(), m.buckets(), m.steps(), &[][..]),
        TrainableModel::Toy(m) => {
            let c = m.config();
            (KIND_TOY, c.shape, c.hidden, c.steps, &c.dilations[..])
        }
    };
    let params = model.parameters();
    let fields = [
        shape.frames,
        shape.height,
        shape.width,
        shape.channels,
        extra,
        steps,
    ];
    let n = fields.len() + dilations.len();
    let mut out = Vec::with_capacity(4 + 2 + 1 + 4 + 4 * n + 8 + 4 * params.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for &v in fields.iter().chain(dilations) {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainableModel> {
    let bad = |reason: String| Error::format("RMWT model", reason);
    let mut r = Reader::new("RMWT model", bytes);
    if r.take(4)? != MODEL_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let n = r.u32()? as usize;
    let expected_fields = match kind {
        KIND_AFFINE => BASE_FIELDS..=BASE_FIELDS,
        KIND_TOY => BASE_FIELDS + 2..=BASE_FIELDS + MAX_LAYERS,
        other => return Err(bad(format!("unknown model kind {other}"))),
    };
    if !expected_fields.contains(&n) {
        return Err(bad(format!("{n} architecture fields for model kind {kind}")));
    }
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        fields.push(r.u32()? as usize);
    }
    let [frames, height, width, channels, extra, steps] = fields[..BASE_FIELDS] else {
        unreachable!("field count checked above")
    };
    let shape =
        VideoShape::new(frames, height, width, channels).map_err(|e| bad(e.to_string()))?;
    let voxels = frames
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width));
    if !matches!(voxels, Some(v) if v <= MAX_VOXELS) {
        return Err(bad("video dimensions too large".into()));
    }

    let count = r.u64()?;
    if count.checked_mul(4) != Some(r.remaining() as u64) {
        return Err(bad(format!(
            "{count} parameters declared, {} payload bytes present",
            r.remaining()
        )));
    }
    let mismatch = |expected: Option<usize>| match expected {
        Some(e) if e as u64 == count => Ok(()),
        _ => Err(bad(format!("parameter count {count} does not match architecture"))),
    };

    let mut model = match kind {
        KIND_AFFINE => {
            let d = shape.frame_len();
            if d > MAX_AFFINE_FRAME {
                return Err(bad(format!("affine frame size {d} too large")));
            }
            mismatch(extra.checked_mul(d * d + d))?;
            TrainableModel::Affine(
                AffineScoreModel::zeros(shape, extra, steps).map_err(|e| bad(e.to_string()))?,
            )
        }
        _ => {
            if channels > 4096 || extra > 4096 {
                return Err(bad("toy network widths too large".into()));
            }
            let config = ToyVideoNetConfig {
                shape,
                hidden: extra,
                steps,
                dilations: fields[BASE_FIELDS..].to_vec(),
            };
            config.validate().map_err(|e| bad(e.to_string()))?;
            mismatch(Some(config.parameter_count()))?;
            TrainableModel::Toy(ToyVideoNet::zeros(config).map_err(|e| bad(e.to_string()))?)
        }
    };

    let params: Vec<f64> = r
        .take(r.remaining())?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter".into()));
    }
    model.set_parameters(&params)?;
    Ok(model)
}

pub fn write_model(model: &TrainableModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<TrainableModel> {
    decode_model(&fs::read(path)?)
}
