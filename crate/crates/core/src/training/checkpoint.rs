//! The `RTCK` trainer checkpoint: everything needed to resume training
//! bit-exactly.
//!
//! ```text
//! "RTCK" | version u16 = 1 | steps taken u64
//!        | rng: seed [u8; 32] | stream u64 | word position u128
//!        | config length u32 | config as key = value text
//!        | model length u64 | RMWT model
//!        | parameter count u64 | f64 parameters | f64 EMA shadow
//!        | optimizer u8 (0 = sgd, 1 = adam)
//!        | adam only: step u64 | f64 first moments | f64 second moments
//! ```
//!
//! The embedded model carries the architecture (and f32 weights usable on
//! their own); the f64 parameters that follow are the exact training state.
//! Little-endian throughout.

use std::fs;
use std::path::Path;

use crate::bytes::Reader;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::model::{decode_model, encode_model, ScoreModel, TrainableModel};
use crate::rng::{RandomStream, StreamState};
use crate::training::{EmaState, OptimizerState, TrainConfig, Trainer};

pub const TRAINER_MAGIC: &[u8; 4] = b"RTCK";
const VERSION: u16 = 1;
const OPT_SGD: u8 = 0;
const OPT_ADAM: u8 = 1;
const MAX_CONFIG_LEN: usize = 1 << 16;

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_trainer(trainer: &Trainer<TrainableModel>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TRAINER_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&trainer.steps_taken().to_le_bytes());
    let rng = trainer.rng().state();
    out.extend_from_slice(&rng.seed);
    out.extend_from_slice(&rng.stream.to_le_bytes());
    out.extend_from_slice(&rng.word_pos.to_le_bytes());
    let config = trainer.config().to_key_values().to_string();
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    let model = encode_model(trainer.model());
    out.extend_from_slice(&(model.len() as u64).to_le_bytes());
    out.extend_from_slice(&model);
    let params = trainer.model().parameters();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    push_f64s(&mut out, params);
    push_f64s(&mut out, trainer.ema().shadow());
    match trainer.optimizer() {
        OptimizerState::Sgd => out.push(OPT_SGD),
        OptimizerState::Adam { m, v, t } => {
            out.push(OPT_ADAM);
            out.extend_from_slice(&t.to_le_bytes());
            push_f64s(&mut out, m);
            push_f64s(&mut out, v);
        }
    }
    out
}

fn read_f64s(r: &mut Reader<'_>, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v = r.f64()?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::format("RTCK checkpoint", "non-finite value"))
            }
        })
        .collect()
}

pub fn decode_trainer(bytes: &[u8]) -> Result<Trainer<TrainableModel>> {
    let bad = |reason: String| Error::format("RTCK checkpoint", reason);
    let mut r = Reader::new("RTCK checkpoint", bytes);
    if r.take(4)? != TRAINER_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let step = r.u64()?;
    let rng = RandomStream::from_state(StreamState {
        seed: r.array()?,
        stream: r.u64()?,
        word_pos: r.u128()?,
    });

    let config_len = r.u32()? as usize;
    if config_len > MAX_CONFIG_LEN {
        return Err(bad(format!("config section of {config_len} bytes")));
    }
    let text = std::str::from_utf8(r.take(config_len)?)
        .map_err(|_| bad("config is not UTF-8".into()))?;
    let kv = KeyValues::parse(text).map_err(|e| bad(e.to_string()))?;
    kv.reject_unknown(TrainConfig::KEYS)
        .map_err(|e| bad(e.to_string()))?;
    let config = TrainConfig::from_key_values(&kv).map_err(|e| bad(e.to_string()))?;

    let model_len = r.u64()?;
    if model_len > r.remaining() as u64 {
        return Err(bad("truncated model section".into()));
    }
    let mut model = decode_model(r.take(model_len as usize)?)?;

    let n = r.u64()?;
    let expected = model.parameters().len();
    if n != expected as u64 {
        return Err(bad(format!("{n} parameters for a model with {expected}")));
    }
    // Parameters and shadow, plus the optimizer tag.
    if (r.remaining() as u64) < 16 * n + 1 {
        return Err(bad("truncated".into()));
    }
    let params = read_f64s(&mut r, expected)?;
    // The embedded weights are always the f32 narrowing of the exact state.
    let narrowed = model.parameters().iter().zip(&params).all(|(&w, &p)| w as f32 == p as f32);
    if !narrowed {
        return Err(bad("parameters disagree with the embedded model".into()));
    }
    model.set_parameters(&params)?;
    let ema = EmaState::from_shadow(read_f64s(&mut r, expected)?);
    let optimizer = match r.u8()? {
        OPT_SGD => OptimizerState::Sgd,
        OPT_ADAM => {
            let t = r.u64()?;
            if (r.remaining() as u64) < 16 * n {
                return Err(bad("truncated".into()));
            }
            OptimizerState::Adam {
                t,
                m: read_f64s(&mut r, expected)?,
                v: read_f64s(&mut r, expected)?,
            }
        }
        other => return Err(bad(format!("unknown optimizer tag {other}"))),
    };
    if r.remaining() != 0 {
        return Err(bad(format!("{} trailing bytes", r.remaining())));
    }
    if optimizer.kind() != config.optimizer {
        return Err(bad("optimizer state does not match config".into()));
    }
    Trainer::from_parts(config, model, optimizer, ema, rng, step)
        .map_err(|e| bad(e.to_string()))
}

pub fn write_trainer(trainer: &Trainer<TrainableModel>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_trainer(trainer))?;
    Ok(())
}

pub fn read_trainer(path: impl AsRef<Path>) -> Result<Trainer<TrainableModel>> {
    decode_trainer(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_gaussian_video, GaussianVideoConfig};
    use crate::masking::MaskPolicy;
    use crate::model::{ToyVideoNet, ToyVideoNetConfig};
    use crate::training::OptimizerKind;
    use crate::video::VideoShape;

    fn setup(optimizer: OptimizerKind) -> (Trainer<TrainableModel>, GaussianVideoConfig) {
        let shape = VideoShape::new(4, 2, 2, 1).unwrap();
        let config = TrainConfig {
            policy: MaskPolicy::new(2, 0.25).unwrap(),
            diffusion_steps: 20,
            learning_rate: 1e-3,
            batch_size: 4,
            micro_batch: 2,
            ema_rate: 0.9,
            optimizer,
            seed: 5,
            ..TrainConfig::default()
        };
        let mut rng = RandomStream::from_seed(1);
        let net = ToyVideoNet::new(ToyVideoNetConfig::new(shape, 20).with_hidden(3), &mut rng).unwrap();
        let trainer = Trainer::new(config, TrainableModel::Toy(net)).unwrap();
        (trainer, GaussianVideoConfig { shape, rho: 0.8, scale: 0.5 })
    }

    fn run(trainer: &mut Trainer<TrainableModel>, data: &GaussianVideoConfig, seed: u64, steps: usize) {
        let mut rng = RandomStream::from_seed(seed);
        for _ in 0..steps {
            let batch = generate_gaussian_video(data, 4, &mut rng).unwrap();
            trainer.train_step(&batch).unwrap();
        }
    }

    #[test]
    fn resume_is_bit_exact() {
        for optimizer in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let (mut straight, data) = setup(optimizer);
            run(&mut straight, &data, 7, 3);
            let bytes = encode_trainer(&straight);
            let mut resumed = decode_trainer(&bytes).unwrap();
            assert_eq!(encode_trainer(&resumed), bytes);
            run(&mut straight, &data, 8, 3);
            run(&mut resumed, &data, 8, 3);
            assert_eq!(resumed.model().parameters(), straight.model().parameters());
            assert_eq!(resumed.ema().shadow(), straight.ema().shadow());
            assert_eq!(resumed.optimizer(), straight.optimizer());
            assert_eq!(resumed.steps_taken(), 6);
        }
    }

    #[test]
    fn rejects_damage() {
        let (trainer, _) = setup(OptimizerKind::Adam);
        let bytes = encode_trainer(&trainer);
        for cut in [0, 3, 10, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_trainer(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_trainer(&extra).is_err());
        let mut magic = bytes.clone();
        magic[1] = b'X';
        assert!(decode_trainer(&magic).is_err());
        let mut tag = bytes.clone();
        let at = bytes.len() - 1 - 8 - 16 * trainer.model().parameters().len();
        tag[at] = 7;
        assert!(decode_trainer(&tag).is_err());
    }

    #[test]
    fn rejects_parameters_that_disagree_with_the_model() {
        let (trainer, _) = setup(OptimizerKind::Sgd);
        let mut bytes = encode_trainer(&trainer);
        let n = trainer.model().parameters().len();
        let at = bytes.len() - 1 - 16 * n;
        bytes[at..at + 8].copy_from_slice(&1e300f64.to_le_bytes());
        let err = decode_trainer(&bytes).err().unwrap().to_string();
        assert!(err.contains("disagree"), "{err}");
    }

    #[test]
    fn rejects_non_finite_state() {
        let (trainer, _) = setup(OptimizerKind::Adam);
        let mut bytes = encode_trainer(&trainer);
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::INFINITY.to_le_bytes());
        let err = decode_trainer(&bytes).err().unwrap().to_string();
        assert!(err.contains("non-finite"), "{err}");
    }
}
