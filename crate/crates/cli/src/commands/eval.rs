use std::io::Write;
use std::path::PathBuf;

use ramvid::container::read_container;
use ramvid::data::GaussianVideoConfig;
use ramvid::eval::{
    batch_harmonization_error, batch_stats, classifier_inception_score, conditional_oracle_error,
    frechet_distance, FeatureExtractor, Pixels, RandomProjection, RandomSoftmaxClassifier,
    TemporalDiff,
};
use ramvid::oracle::ar1_conditional;
use ramvid::{VideoBatch, VideoShape};
use serde_json::json;

use crate::args::EvalArgs;
use crate::report::{self, num};
use crate::settings::{usage, Outcome, Settings};

const KEYS: &[(&str, &str)] = &[
    ("metric", "frechet"),
    ("features", "pixels"),
    ("proj_dim", "16"),
    ("classes", "10"),
    ("temperature", "1.0"),
    ("mask", ""),
    ("rho", "0.9"),
    ("scale", "0.5"),
    ("seed", "0"),
];

pub fn settings(args: &EvalArgs) -> Outcome<Settings> {
    Settings::resolve(
        KEYS,
        &args.common,
        "steps",
        &[("metric", args.metric.clone()), ("features", args.features.clone())],
    )
}

pub fn extractor(s: &Settings, shape: VideoShape) -> Outcome<Box<dyn FeatureExtractor>> {
    let bad = |e: ramvid::Error| usage(e.to_string());
    Ok(match s.str("features") {
        "pixels" => Box::new(Pixels::new(shape)),
        "proj" => Box::new(RandomProjection::new(shape, s.get("proj_dim")?, s.get("seed")?).map_err(bad)?),
        "tdiff" => Box::new(TemporalDiff::new(shape).map_err(bad)?),
        other => {
            return Err(usage(format!(
                "unknown features '{other}' (expected pixels, proj or tdiff)"
            )))
        }
    })
}

fn load(inputs: &[PathBuf], want: usize, metric: &str) -> Outcome<Vec<VideoBatch>> {
    if inputs.len() != want {
        return Err(usage(format!(
            "metric {metric} takes {want} container(s), got {}",
            inputs.len()
        )));
    }
    inputs
        .iter()
        .map(|p| read_container(p).map_err(Into::into))
        .collect()
}

pub fn run(s: &Settings, inputs: &[PathBuf], out: &mut dyn Write) -> Outcome {
    let metric = s.str("metric").to_string();
    let body = match metric.as_str() {
        "frechet" => {
            let batches = load(inputs, 2, &metric)?;
            let (a, b) = (&batches[0], &batches[1]);
            if a.shape() != b.shape() {
                return Err(usage(format!("shapes differ: {} vs {}", a.shape(), b.shape())));
            }
            let ext = extractor(s, a.shape())?;
            let d = frechet_distance(&batch_stats(a, ext.as_ref())?, &batch_stats(b, ext.as_ref())?)?;
            json!({ "features": s.str("features"), "value": num(d) })
        }
        "is" => {
            let batch = &load(inputs, 1, &metric)?[0];
            let classifier = RandomSoftmaxClassifier::new(
                batch.shape(),
                s.get("classes")?,
                s.get("temperature")?,
                s.get("seed")?,
            )
            .map_err(|e| usage(e.to_string()))?;
            let v = classifier_inception_score(batch, &classifier)?;
            json!({ "classes": s.get::<usize>("classes")?, "value": num(v) })
        }
        "oracle" => {
            let batch = &load(inputs, 1, &metric)?[0];
            let mask = s.mask("mask", batch.shape().frames)?;
            let config = GaussianVideoConfig {
                shape: batch.shape(),
                rho: s.get("rho")?,
                scale: s.get("scale")?,
            };
            config.validate().map_err(|e| usage(e.to_string()))?;
            // Samples carry their conditioning frames verbatim; take them from the first.
            let cond = &batch.items()[0];
            for (k, item) in batch.iter().enumerate() {
                if mask.conditioning().iter().any(|&f| item.frame(f) != cond.frame(f)) {
                    return Err(usage(format!(
                        "sample {k} disagrees with sample 0 on the conditioning frames"
                    )));
                }
            }
            let oracle = ar1_conditional(&config, &mask, cond).map_err(|e| usage(e.to_string()))?;
            let (mean_err, cov_err) = conditional_oracle_error(batch, &mask, &oracle)?;
            json!({
                "mask": mask.to_string(),
                "mean_error": num(mean_err),
                "cov_error": num(cov_err),
            })
        }
        "harmonization" => {
            let batch = &load(inputs, 1, &metric)?[0];
            let mask = s.mask("mask", batch.shape().frames)?;
            let v = batch_harmonization_error(batch, &mask).map_err(|e| usage(e.to_string()))?;
            json!({ "mask": mask.to_string(), "value": num(v) })
        }
        other => {
            return Err(usage(format!(
                "unknown metric '{other}' (expected frechet, is, oracle or harmonization)"
            )))
        }
    };
    let mut body = body;
    body["metric"] = json!(metric);
    body["inputs"] = json!(inputs
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>());
    report::emit(out, "eval", body)
}
