use std::io::Write;

use rayon::prelude::*;
use ramvid::container::encode_container;
use ramvid::data::{generate_gaussian_video, GaussianVideoConfig};
use ramvid::eval::{
    batch_harmonization_error, batch_stats, conditional_oracle_error, frechet_distance, Pixels,
};
use ramvid::oracle::ar1_conditional;
use ramvid::sampling::sample_many;
use ramvid::training::Trainer;
use ramvid::{RandomStream, VideoBatch, VideoShape};
use serde::Serialize;

use crate::args::SweepArgs;
use crate::pipeline::{self, sha256_hex, MODEL_KEYS, SAMPLER_KEYS};
use crate::report;
use crate::settings::{usage, Outcome, Settings};

const KEYS: &[(&str, &str)] = &[
    ("values", "0,0.25,0.5,0.75"),
    ("frames", "8"),
    ("height", "1"),
    ("width", "1"),
    ("rho", "0.9"),
    ("scale", "0.5"),
    ("mask", "0,1,6,7"),
    ("K", "4"),
    ("T", "100"),
    ("schedule", "linear"),
    ("lr", "3e-3"),
    ("batch_size", "32"),
    ("micro_batch", "32"),
    ("train_steps", "2000"),
    ("ema_rate", "0.999"),
    ("optimizer", "adam"),
    ("data_size", "4096"),
    ("n", "1000"),
    ("steps", "100"),
    ("seed", "0"),
];

/// Stream offsets under the run seed.
const DATA_STREAM: u64 = 10;
const COND_STREAM: u64 = 11;
const SAMPLE_STREAM: u64 = 12;
const REFERENCE_STREAM: u64 = 13;

pub fn settings(args: &SweepArgs) -> Outcome<Settings> {
    let mut defaults = pipeline::defaults(&[KEYS, MODEL_KEYS, SAMPLER_KEYS]);
    // Gaussian data is unbounded, and the sweep's network needs to see the whole window.
    for (k, v) in defaults.iter_mut() {
        match *k {
            "clamp" => *v = "false",
            "variance" => *v = "beta",
            "hidden" => *v = "16",
            "dilations" => *v = "1,2,4",
            _ => {}
        }
    }
    Settings::resolve(&defaults, &args.common, "train_steps", &[("values", args.values.clone())])
}

#[derive(Serialize, Debug, Clone, PartialEq)]
pub struct Row {
    pub pu: f64,
    pub mean_error: f64,
    pub cov_error: f64,
    pub frechet: f64,
    pub harmonization_error: Option<f64>,
    pub data_seed: u64,
    pub data_hash: String,
}

pub fn run(s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let values: Vec<f64> = s.list("values")?;
    if values.is_empty() {
        return Err(usage("no values to sweep"));
    }
    let seed: u64 = s.get("seed")?;
    let shape = VideoShape::new(s.get("frames")?, s.get("height")?, s.get("width")?, 1)
        .map_err(|e| usage(e.to_string()))?;
    let process = GaussianVideoConfig {
        shape,
        rho: s.get("rho")?,
        scale: s.get("scale")?,
    };
    process.validate().map_err(|e| usage(e.to_string()))?;
    let mask = s.mask("mask", shape.frames)?;
    if mask.unknown().is_empty() {
        return Err(usage("mask leaves no frames to generate"));
    }
    let data_size: usize = s.get("data_size")?;
    let n: usize = s.get("n")?;
    if data_size == 0 || n < 2 {
        return Err(usage("need data_size >= 1 and n >= 2"));
    }

    let data = generate_gaussian_video(&process, data_size, &mut RandomStream::with_stream(seed, DATA_STREAM))?;
    let data_hash = sha256_hex(&encode_container(&data));
    let x0 = generate_gaussian_video(&process, 1, &mut RandomStream::with_stream(seed, COND_STREAM))?
        .into_items()
        .remove(0);
    let oracle = ar1_conditional(&process, &mask, &x0)?;
    let mut ref_rng = RandomStream::with_stream(seed, REFERENCE_STREAM);
    let reference = (0..n)
        .map(|_| oracle.draw(&x0, &mut ref_rng))
        .collect::<ramvid::Result<Vec<_>>>()?;
    let reference_stats = batch_stats(&VideoBatch::new(reference)?, &Pixels::new(shape))?;

    // Validate every configuration before spending time on any of them.
    let configs = values
        .iter()
        .map(|&pu| {
            let kv = s.with("pu", &pu.to_string());
            let config = pipeline::train_config(&kv)?;
            config.policy.validate_for(shape.frames).map_err(|e| usage(e.to_string()))?;
            let cfg = pipeline::sampler_config(&kv, kv.get("steps")?)?;
            ramvid::sampling::strided_steps(config.diffusion_steps, cfg.steps)
                .map_err(|e| usage(e.to_string()))?;
            Ok((pu, config, cfg))
        })
        .collect::<Outcome<Vec<_>>>()?;

    let rows = configs
        .into_par_iter()
        .map(|(pu, config, cfg)| -> Outcome<Row> {
            let model = pipeline::build_model(s, shape, config.diffusion_steps, seed)?;
            let total = config.total_steps as u64;
            let mut trainer = Trainer::new(config, model).map_err(|e| usage(e.to_string()))?;
            pipeline::train_until(&mut trainer, &data, total, &mut |_, _| {})?;
            let model = trainer.ema_model()?;
            let mut rng = RandomStream::with_stream(seed, SAMPLE_STREAM);
            let samples = sample_many(&model, &mask, &x0, trainer.schedule(), &cfg, n, &mut rng)?;
            let (mean_error, cov_error) = conditional_oracle_error(&samples, &mask, &oracle)?;
            let frechet = frechet_distance(&batch_stats(&samples, &Pixels::new(shape))?, &reference_stats)?;
            let harmonization_error = if mask.is_unconditional() {
                None
            } else {
                batch_harmonization_error(&samples, &mask).ok()
            };
            Ok(Row {
                pu,
                mean_error,
                cov_error,
                frechet,
                harmonization_error,
                data_seed: seed,
                data_hash: data_hash.clone(),
            })
        })
        .collect::<Outcome<Vec<_>>>()?;

    writeln!(err, "{:>6} {:>10} {:>10} {:>10} {:>10}", "pu", "mean_err", "cov_err", "frechet", "harmony")?;
    for r in &rows {
        let h = r.harmonization_error.map_or("-".to_string(), |h| format!("{h:.5}"));
        writeln!(
            err,
            "{:>6} {:>10.5} {:>10.5} {:>10.5} {:>10}",
            r.pu, r.mean_error, r.cov_error, r.frechet, h
        )?;
    }
    report::emit(
        out,
        "sweep-pu",
        serde_json::json!({
            "mask": mask.to_string(),
            "rows": rows,
        }),
    )
}
