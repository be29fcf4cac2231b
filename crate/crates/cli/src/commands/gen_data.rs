use std::io::Write;

use ramvid::container::encode_container;
use ramvid::data::{generate_gaussian_video, generate_shapes, GaussianVideoConfig, ShapeSceneConfig};
use ramvid::{RandomStream, VideoBatch, VideoShape};
use serde_json::json;

use crate::args::GenDataArgs;
use crate::pipeline::sha256_hex;
use crate::report;
use crate::settings::{usage, Outcome, Settings};

const DEFAULTS: &[(&str, &str)] = &[
    ("kind", "gaussian"),
    ("n", "256"),
    ("frames", "8"),
    ("height", "1"),
    ("width", "1"),
    ("channels", "1"),
    ("rho", "0.9"),
    ("scale", "0.5"),
    ("num_shapes", "2"),
    ("size", "2"),
    ("max_speed", "1.0"),
    ("bounce", "true"),
    ("seed", "0"),
    ("out", ""),
];

pub fn settings(args: &GenDataArgs) -> Outcome<Settings> {
    Settings::resolve(DEFAULTS, &args.common, "steps", &[])
}

/// Generate the dataset described by `s`.
pub fn generate(s: &Settings) -> Outcome<VideoBatch> {
    let shape = VideoShape::new(
        s.get("frames")?,
        s.get("height")?,
        s.get("width")?,
        s.get("channels")?,
    )
    .map_err(|e| usage(e.to_string()))?;
    let n: usize = s.get("n")?;
    if n == 0 {
        return Err(usage("n must be positive"));
    }
    let seed: u64 = s.get("seed")?;
    let batch = match s.str("kind") {
        "gaussian" => {
            let config = GaussianVideoConfig {
                shape,
                rho: s.get("rho")?,
                scale: s.get("scale")?,
            };
            config.validate().map_err(|e| usage(e.to_string()))?;
            generate_gaussian_video(&config, n, &mut RandomStream::from_seed(seed))?
        }
        "shapes" => {
            let config = ShapeSceneConfig {
                shape,
                num_shapes: s.get("num_shapes")?,
                size: s.get("size")?,
                max_speed: s.get("max_speed")?,
                bounce: s.get("bounce")?,
                seed,
            };
            generate_shapes(&config, n).map_err(|e| usage(e.to_string()))?
        }
        other => return Err(usage(format!("unknown data kind '{other}' (expected gaussian or shapes)"))),
    };
    Ok(batch)
}

pub fn run(s: &Settings, out: &mut dyn Write) -> Outcome {
    let path = s.required_path("out")?;
    let batch = generate(s)?;
    let bytes = encode_container(&batch);
    std::fs::write(&path, &bytes)?;
    let shape = batch.shape();
    report::emit(
        out,
        "gen-data",
        json!({
            "kind": s.str("kind"),
            "items": batch.len(),
            "shape": [shape.frames, shape.height, shape.width, shape.channels],
            "sha256": sha256_hex(&bytes),
        }),
    )
}
