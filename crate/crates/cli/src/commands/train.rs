use std::io::Write;

use ramvid::container::read_container;
use ramvid::model::encode_model;
use ramvid::training::{read_trainer, write_trainer, Trainer};
use ramvid::{ScoreModel, TrainableModel};
use serde_json::json;

use crate::args::TrainArgs;
use crate::pipeline::{self, sha256_hex, MODEL_KEYS};
use crate::report::{self, num};
use crate::settings::{usage, Outcome, Settings};

const KEYS: &[(&str, &str)] = &[
    ("K", "4"),
    ("pu", "0.25"),
    ("schedule", "linear"),
    ("T", "1000"),
    ("lr", "2e-5"),
    ("batch_size", "32"),
    ("micro_batch", "2"),
    ("train_steps", "1000"),
    ("ema_rate", "0.9999"),
    ("optimizer", "adam"),
    ("seed", "0"),
    ("frames", "0"),
    ("data", ""),
    ("out", ""),
    ("checkpoint", ""),
    ("resume", ""),
    ("log_every", "0"),
];

pub fn settings(args: &TrainArgs) -> Outcome<Settings> {
    let path = |p: &Option<std::path::PathBuf>| p.as_ref().map(|p| p.display().to_string());
    Settings::resolve(
        &pipeline::defaults(&[KEYS, MODEL_KEYS]),
        &args.common,
        "train_steps",
        &[("checkpoint", path(&args.checkpoint)), ("resume", path(&args.resume))],
    )
}

pub fn run(s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let data_path = s.required_path("data")?;
    let out_path = s.required_path("out")?;
    let data = read_container(&data_path)?;
    let total: u64 = s.get("train_steps")?;
    let log_every: u64 = s.get("log_every")?;

    let mut trainer = match s.path("resume") {
        Some(path) => {
            let trainer = read_trainer(&path)?;
            if trainer.steps_taken() > total {
                return Err(usage(format!(
                    "checkpoint is at step {}, past train_steps = {total}",
                    trainer.steps_taken()
                )));
            }
            trainer
        }
        None => {
            let config = pipeline::train_config(s)?;
            let frames = match s.get::<usize>("frames")? {
                0 => data.shape().frames,
                f => f,
            };
            if frames > data.shape().frames {
                return Err(usage(format!(
                    "model length {frames} exceeds the {} frames of the data",
                    data.shape().frames
                )));
            }
            let shape = data.shape().with_frames(frames);
            let model = pipeline::build_model(s, shape, config.diffusion_steps, config.seed)?;
            Trainer::new(config, model).map_err(|e| usage(e.to_string()))?
        }
    };
    if trainer.model().shape() != data.shape().with_frames(trainer.model().shape().frames) {
        return Err(usage(format!(
            "data shape {} does not match model shape {}",
            data.shape(),
            trainer.model().shape()
        )));
    }

    let start = trainer.steps_taken();
    let mut log_err = None;
    let losses = pipeline::train_until(&mut trainer, &data, total, &mut |step, loss| {
        if log_every > 0 && step % log_every == 0 && log_err.is_none() {
            if let Err(e) = writeln!(err, "step {step} loss {loss:.6}") {
                log_err = Some(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }

    let ema: TrainableModel = trainer.ema_model()?;
    let bytes = encode_model(&ema);
    std::fs::write(&out_path, &bytes)?;
    if let Some(path) = s.path("checkpoint") {
        write_trainer(&trainer, &path)?;
    }
    let tail = &losses[losses.len().saturating_sub(100)..];
    report::emit(
        out,
        "train",
        json!({
            "model": ema.kind().to_string(),
            "parameters": ema.parameters().len(),
            "start_step": start,
            "steps": trainer.steps_taken(),
            "final_loss": losses.last().copied().map(num),
            "mean_loss_last_100": num(pipeline::mean(tail)),
            "model_sha256": sha256_hex(&bytes),
            "config": trainer.config().to_key_values().to_string(),
        }),
    )
}
