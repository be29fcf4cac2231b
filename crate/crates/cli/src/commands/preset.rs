use std::io::Write;

use rayon::prelude::*;
use ramvid::container::encode_container;
use ramvid::data::{generate_shapes, ShapeSceneConfig};
use ramvid::eval::{batch_harmonization_error, batch_stats, frechet_distance, TemporalDiff};
use ramvid::sampling::sample;
use ramvid::training::Trainer;
use ramvid::{MaskPolicy, RandomStream, ScheduleKind, VideoBatch, VideoShape};
use serde_json::json;

use crate::args::PresetArgs;
use crate::pipeline::{self, sha256_hex, MODEL_KEYS, SAMPLER_KEYS};
use crate::report::{self, num};
use crate::settings::{usage, Outcome, Settings};

/// A canned task: which frames are observed and how the model is trained.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPreset {
    pub name: &'static str,
    pub mask: &'static str,
    pub policy: MaskPolicy,
    pub schedule: ScheduleKind,
    pub steps: usize,
}

pub const FRAMES: usize = 16;

pub fn presets() -> Vec<ExperimentPreset> {
    let policy = MaskPolicy { max_cond: 4, p_uncond: 0.25 };
    let make = |name, mask| ExperimentPreset {
        name,
        mask,
        policy,
        schedule: ScheduleKind::Linear,
        steps: 50,
    };
    vec![
        make("prediction", "0"),
        make("infill-ends", "0,1,14,15"),
        make("infill-even", "0,5,10,15"),
    ]
}

pub fn find(name: &str) -> Outcome<ExperimentPreset> {
    presets().into_iter().find(|p| p.name == name).ok_or_else(|| {
        let names: Vec<_> = presets().iter().map(|p| p.name).collect();
        usage(format!("unknown preset '{name}' (expected one of {})", names.join(", ")))
    })
}

const KEYS: &[(&str, &str)] = &[
    ("height", "8"),
    ("width", "8"),
    ("num_shapes", "2"),
    ("size", "2"),
    ("max_speed", "1.0"),
    ("n_train", "64"),
    ("n_eval", "16"),
    ("T", "100"),
    ("lr", "2e-3"),
    ("batch_size", "8"),
    ("micro_batch", "8"),
    ("train_steps", "300"),
    ("ema_rate", "0.99"),
    ("optimizer", "adam"),
    ("seed", "0"),
    ("out", ""),
];

pub fn settings(args: &PresetArgs) -> Outcome<Settings> {
    let preset = find(&args.name)?;
    let (k, pu, steps) = (
        preset.policy.max_cond.to_string(),
        preset.policy.p_uncond.to_string(),
        preset.steps.to_string(),
    );
    let schedule = preset.schedule.to_string();
    let mut defaults = pipeline::defaults(&[KEYS, MODEL_KEYS, SAMPLER_KEYS]);
    let owned = [
        ("mask", preset.mask.to_string()),
        ("K", k),
        ("pu", pu),
        ("steps", steps),
        ("schedule", schedule),
    ];
    let owned: Vec<(&str, &str)> = owned.iter().map(|(k, v)| (*k, v.as_str())).collect();
    defaults.extend(owned.iter().copied());
    Settings::resolve(&defaults, &args.common, "train_steps", &[])
}

pub fn run(name: &str, s: &Settings, out: &mut dyn Write) -> Outcome {
    let seed: u64 = s.get("seed")?;
    let shape = VideoShape::new(FRAMES, s.get("height")?, s.get("width")?, 1)
        .map_err(|e| usage(e.to_string()))?;
    let mask = s.mask("mask", FRAMES)?;
    if mask.unknown().is_empty() {
        return Err(usage("mask leaves no frames to generate"));
    }
    let (n_train, n_eval): (usize, usize) = (s.get("n_train")?, s.get("n_eval")?);
    if n_train == 0 || n_eval < 2 {
        return Err(usage("need n_train >= 1 and n_eval >= 2"));
    }
    let scenes = ShapeSceneConfig {
        shape,
        num_shapes: s.get("num_shapes")?,
        size: s.get("size")?,
        max_speed: s.get("max_speed")?,
        bounce: true,
        seed,
    };
    let mut all = generate_shapes(&scenes, n_train + n_eval)
        .map_err(|e| usage(e.to_string()))?
        .into_items();
    let held_out = VideoBatch::new(all.split_off(n_train))?;
    let train_set = VideoBatch::new(all)?;

    let config = pipeline::train_config(s)?;
    let model = pipeline::build_model(s, shape, config.diffusion_steps, seed)?;
    let total = config.total_steps as u64;
    let mut trainer = Trainer::new(config, model).map_err(|e| usage(e.to_string()))?;
    let losses = pipeline::train_until(&mut trainer, &train_set, total, &mut |_, _| {})?;
    let model = trainer.ema_model()?;
    let schedule = trainer.schedule();
    let cfg = pipeline::sampler_config(s, s.get("steps")?)?;
    ramvid::sampling::strided_steps(schedule.steps(), cfg.steps)
        .map_err(|e| usage(e.to_string()))?;

    let streams = RandomStream::with_stream(seed, 3).split_n(n_eval);
    let samples = held_out
        .items()
        .par_iter()
        .zip(streams)
        .map(|(truth, mut rng)| sample(&model, &mask, truth, schedule, &cfg, &mut rng))
        .collect::<ramvid::Result<Vec<_>>>()?;
    let samples = VideoBatch::new(samples)?;

    let mut sq = 0.0;
    let mut count = 0usize;
    for (gen, truth) in samples.iter().zip(held_out.iter()) {
        for &f in mask.unknown() {
            for (a, b) in gen.frame(f).iter().zip(truth.frame(f)) {
                sq += (a - b) * (a - b);
                count += 1;
            }
        }
    }
    let tdiff = TemporalDiff::new(shape)?;
    let fd = frechet_distance(&batch_stats(&samples, &tdiff)?, &batch_stats(&held_out, &tdiff)?)?;
    let harmonization = |b: &VideoBatch| -> Outcome<serde_json::Value> {
        Ok(if mask.is_unconditional() {
            serde_json::Value::Null
        } else {
            num(batch_harmonization_error(b, &mask)?)
        })
    };

    let bytes = encode_container(&samples);
    if let Some(path) = s.path("out") {
        std::fs::write(path, &bytes)?;
    }
    let tail = &losses[losses.len().saturating_sub(50)..];
    report::emit(
        out,
        "preset",
        json!({
            "preset": name,
            "mask": mask.to_string(),
            "train_steps": trainer.steps_taken(),
            "mean_loss_last_50": num(pipeline::mean(tail)),
            "samples": samples.len(),
            "unknown_mse": num(sq / count as f64),
            "harmonization_error": harmonization(&samples)?,
            "harmonization_error_truth": harmonization(&held_out)?,
            "frechet_tdiff": num(fd),
            "samples_sha256": sha256_hex(&bytes),
        }),
    )
}
