//! Pieces shared by several subcommands.

use ramvid::config::KeyValues;
use ramvid::data::random_subsequence;
use ramvid::model::{AffineScoreModel, ModelKind, ToyVideoNet, ToyVideoNetConfig};
use ramvid::sampling::{PosteriorVariance, SamplerConfig};
use ramvid::training::{TrainConfig, Trainer};
use ramvid::{RandomStream, TrainableModel, VideoBatch, VideoShape};
use sha2::{Digest, Sha256};

use crate::settings::{usage, Outcome, Settings};

/// Stream used for weight initialisation under the run seed. The trainer
/// itself draws from stream 0.
pub const INIT_STREAM: u64 = 1;
/// Training batches for step `k` come from stream `DATA_STREAM_BASE + k`, so
/// a resumed run sees exactly the batches an uninterrupted run would.
pub const DATA_STREAM_BASE: u64 = 1 << 32;

pub const MODEL_KEYS: &[(&str, &str)] = &[
    ("model", "toynet"),
    ("hidden", "8"),
    ("dilations", "1,1"),
    ("buckets", "8"),
];

pub const SAMPLER_KEYS: &[(&str, &str)] = &[
    ("variance", "beta_tilde"),
    ("clamp", "true"),
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Defaults table assembled from several groups.
pub fn defaults(groups: &[&[(&'static str, &'static str)]]) -> Vec<(&'static str, &'static str)> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

pub fn train_config(settings: &Settings) -> Outcome<TrainConfig> {
    let mut kv = KeyValues::default();
    for key in TrainConfig::KEYS {
        if let Some(v) = settings.key_values().get(key) {
            kv.set(key, v);
        }
    }
    TrainConfig::from_key_values(&kv).map_err(|e| usage(e.to_string()))
}

pub fn sampler_config(settings: &Settings, steps: usize) -> Outcome<SamplerConfig> {
    let mut cfg = SamplerConfig::new(steps);
    cfg.variance = settings.get::<PosteriorVariance>("variance")?;
    cfg.clamp_x0 = settings.get("clamp")?;
    Ok(cfg)
}

pub fn build_model(
    settings: &Settings,
    shape: VideoShape,
    diffusion_steps: usize,
    seed: u64,
) -> Outcome<TrainableModel> {
    let kind: ModelKind = settings.get("model")?;
    let model = match kind {
        ModelKind::Affine => TrainableModel::Affine(
            AffineScoreModel::zeros(shape, settings.get("buckets")?, diffusion_steps)
                .map_err(|e| usage(e.to_string()))?,
        ),
        ModelKind::Toy => {
            let config = ToyVideoNetConfig::new(shape, diffusion_steps)
                .with_hidden(settings.get("hidden")?)
                .with_dilations(settings.list("dilations")?);
            let mut rng = RandomStream::with_stream(seed, INIT_STREAM);
            TrainableModel::Toy(ToyVideoNet::new(config, &mut rng).map_err(|e| usage(e.to_string()))?)
        }
    };
    Ok(model)
}

/// Train until `trainer` has taken `total` steps, drawing random windows of
/// the model's length from `data`. Returns the per-step losses of this call.
pub fn train_until(
    trainer: &mut Trainer<TrainableModel>,
    data: &VideoBatch,
    total: u64,
    log: &mut dyn FnMut(u64, f64),
) -> Outcome<Vec<f64>> {
    use ramvid::ScoreModel;
    let frames = trainer.model().shape().frames;
    let batch_size = trainer.config().batch_size;
    let seed = trainer.config().seed;
    let mut losses = Vec::new();
    while trainer.steps_taken() < total {
        let step = trainer.steps_taken();
        let mut rng = RandomStream::with_stream(seed, DATA_STREAM_BASE + step);
        let items = (0..batch_size)
            .map(|_| {
                let i = rng.uniform_int(0, data.len() - 1);
                random_subsequence(&data.items()[i], frames, &mut rng)
            })
            .collect::<ramvid::Result<Vec<_>>>()?;
        let stats = trainer.train_step(&VideoBatch::new(items)?)?;
        log(step + 1, stats.loss);
        losses.push(stats.loss);
    }
    Ok(losses)
}

pub fn model_steps(model: &TrainableModel) -> usize {
    match model {
        TrainableModel::Affine(m) => m.steps(),
        TrainableModel::Toy(m) => m.config().steps,
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
