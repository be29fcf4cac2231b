use std::io::Write;

use rayon::prelude::*;
use ramvid::container::{encode_container, read_container};
use ramvid::masking::MaskSpec;
use ramvid::model::read_model;
use ramvid::sampling::{
    sample_autoregressive, sample_many, sample_resampling_baseline, CountingModel,
};
use ramvid::{RandomStream, ScheduleKind, ScoreModel, VideoBatch, VideoTensor};
use serde_json::json;

use crate::args::SampleArgs;
use crate::pipeline::{self, sha256_hex, SAMPLER_KEYS};
use crate::report;
use crate::settings::{usage, Outcome, Settings};

const KEYS: &[(&str, &str)] = &[
    ("model", ""),
    ("schedule", "linear"),
    ("data", ""),
    ("cond_index", "0"),
    ("mask", "0"),
    ("n", "16"),
    ("steps", "100"),
    ("windows", "0"),
    ("overlap", "5"),
    ("resample_jumps", "0"),
    ("seed", "0"),
    ("out", ""),
];

pub fn settings(args: &SampleArgs) -> Outcome<Settings> {
    let opt = |v: Option<usize>| v.map(|v| v.to_string());
    Settings::resolve(
        &pipeline::defaults(&[KEYS, SAMPLER_KEYS]),
        &args.common,
        "steps",
        &[
            ("model", args.model.as_ref().map(|p| p.display().to_string())),
            ("windows", opt(args.windows)),
            ("overlap", opt(args.overlap)),
            ("resample_jumps", opt(args.resample_jumps)),
        ],
    )
}

pub fn run(s: &Settings, out: &mut dyn Write) -> Outcome {
    let model = read_model(s.required_path("model")?)?;
    let out_path = s.required_path("out")?;
    let shape = model.shape();
    let kind: ScheduleKind = s.get("schedule")?;
    let schedule = kind
        .build(pipeline::model_steps(&model))
        .map_err(|e| usage(e.to_string()))?;
    let n: usize = s.get("n")?;
    let windows: usize = s.get("windows")?;
    let jumps: usize = s.get("resample_jumps")?;
    if n == 0 {
        return Err(usage("n must be positive"));
    }
    if windows > 0 && jumps > 0 {
        return Err(usage("windows and resample_jumps select different samplers; set one"));
    }
    let mut cfg = pipeline::sampler_config(s, s.get("steps")?)?;
    cfg.resample_jumps = jumps;
    // Validate the step count up front so a bad value is a usage error.
    ramvid::sampling::strided_steps(schedule.steps(), cfg.steps)
        .map_err(|e| usage(e.to_string()))?;

    let cond_video = match s.path("data") {
        Some(path) => {
            let data = read_container(&path)?;
            let i: usize = s.get("cond_index")?;
            let video = data.items().get(i).ok_or_else(|| {
                usage(format!("cond_index {i} out of range for {} videos", data.len()))
            })?;
            if video.shape().with_frames(shape.frames) != shape || video.frames() < shape.frames {
                return Err(usage(format!(
                    "conditioning video {} does not fit model {}",
                    video.shape(),
                    shape
                )));
            }
            Some(video.slice_frames(0, shape.frames)?)
        }
        None => None,
    };

    let counting = CountingModel::new(model);
    let mut rng = RandomStream::from_seed(s.get("seed")?);
    let (mode, batch, mask) = if windows > 0 {
        let overlap: usize = s.get("overlap")?;
        let video = cond_video
            .ok_or_else(|| usage("autoregressive sampling needs --data for the seed frames"))?;
        if overlap == 0 || overlap >= shape.frames {
            return Err(usage(format!(
                "overlap must lie in 1..{}, got {overlap}",
                shape.frames
            )));
        }
        let seed_frames = video.slice_frames(0, overlap)?;
        let streams = rng.split_n(n);
        let items = streams
            .into_par_iter()
            .map(|mut r| {
                sample_autoregressive(&counting, &seed_frames, windows, overlap, &schedule, &cfg, &mut r)
            })
            .collect::<ramvid::Result<Vec<_>>>()?;
        let mask = MaskSpec::new(overlap + windows * (shape.frames - overlap), 0..overlap)?;
        ("autoregressive", VideoBatch::new(items)?, mask)
    } else {
        let mask = s.mask("mask", shape.frames)?;
        if mask.unknown().is_empty() {
            return Err(usage("mask leaves no frames to generate"));
        }
        let x0 = match cond_video {
            Some(v) => v,
            None if mask.is_unconditional() => VideoTensor::zeros(shape),
            None => return Err(usage("a conditional mask needs --data for the conditioning frames")),
        };
        if jumps > 0 {
            let streams = rng.split_n(n);
            let items = streams
                .into_par_iter()
                .map(|mut r| sample_resampling_baseline(&counting, &mask, &x0, &schedule, &cfg, &mut r))
                .collect::<ramvid::Result<Vec<_>>>()?;
            ("resample", VideoBatch::new(items)?, mask)
        } else {
            let batch = sample_many(&counting, &mask, &x0, &schedule, &cfg, n, &mut rng)?;
            ("plain", batch, mask)
        }
    };

    let bytes = encode_container(&batch);
    std::fs::write(&out_path, &bytes)?;
    report::emit(
        out,
        "sample",
        json!({
            "mode": mode,
            "items": batch.len(),
            "frames": batch.shape().frames,
            "mask": mask.to_string(),
            "steps": cfg.steps,
            "model_evaluations": counting.calls(),
            "sha256": sha256_hex(&bytes),
        }),
    )
}
