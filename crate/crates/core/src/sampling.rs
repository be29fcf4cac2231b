//! Conditional ancestral sampling.
//!
//! Every sampler keeps the conditioning frames of its running state equal to
//! the observed frames at every step: after each reverse update the unknown
//! frames come from the update and the conditioning frames are copied back
//! from `x0_cond`.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::masking::{restore_conditioning, MaskSpec};
use crate::model::ScoreModel;
use crate::rng::RandomStream;
use crate::schedule::NoiseSchedule;
use crate::video::{VideoBatch, VideoShape, VideoTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosteriorVariance {
    /// Forward-step variance.
    Beta,
    /// Variance of the forward-process posterior `q(x_prev | x_t, x_0)`.
    BetaTilde,
}

impl std::str::FromStr for PosteriorVariance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(PosteriorVariance::Beta),
            "beta_tilde" => Ok(PosteriorVariance::BetaTilde),
            other => Err(Error::InvalidArgument(format!(
                "unknown variance '{other}' (expected beta or beta_tilde)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Number of reverse steps, a strided subset of `1..=T`.
    pub steps: usize,
    pub variance: PosteriorVariance,
    /// Clip the predicted clean video to `[-1, 1]`.
    pub clamp_x0: bool,
    pub use_ema: bool,
    /// Re-noise/re-denoise repetitions per step for the resampling baseline.
    pub resample_jumps: usize,
}

impl SamplerConfig {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            variance: PosteriorVariance::BetaTilde,
            clamp_x0: true,
            use_ema: true,
            resample_jumps: 10,
        }
    }

    /// Unclamped, for data that is not confined to `[-1, 1]`.
    pub fn unclamped(steps: usize) -> Self {
        Self {
            clamp_x0: false,
            ..Self::new(steps)
        }
    }
}

/// Descending step sequence `T = t_0 > t_1 > ... > t_{n-1} >= 1`, spaced as
/// evenly as integer steps allow. Depends only on `(T, steps)`.
pub fn strided_steps(diffusion_steps: usize, steps: usize) -> Result<Vec<usize>> {
    ensure!(
        steps >= 1 && steps <= diffusion_steps,
        InvalidArgument,
        "sampling steps {steps} must lie in 1..={diffusion_steps}"
    );
    if steps == 1 {
        return Ok(vec![diffusion_steps]);
    }
    let span = (diffusion_steps - 1) as f64;
    Ok((0..steps)
        .map(|i| diffusion_steps - (i as f64 * span / (steps - 1) as f64).round() as usize)
        .collect())
}

/// Pairs `(t_cur, t_prev)` visited by a sampler, ending at step 0.
fn step_pairs(schedule: &NoiseSchedule, cfg: &SamplerConfig) -> Result<Vec<(usize, usize)>> {
    let seq = strided_steps(schedule.steps(), cfg.steps)?;
    Ok(seq
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, seq.get(i + 1).copied().unwrap_or(0)))
        .collect())
}

fn check_inputs<M: ScoreModel + ?Sized>(
    model: &M,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
) -> Result<()> {
    ensure!(
        x0_cond.shape() == model.shape(),
        Shape,
        "conditioning video {} does not match model {}",
        x0_cond.shape(),
        model.shape()
    );
    ensure!(
        mask.len() == x0_cond.frames(),
        Shape,
        "mask over {} frames for a video of {} frames",
        mask.len(),
        x0_cond.frames()
    );
    Ok(())
}

/// Ancestral update of the unknown frames of `xt` given the model's noise
/// prediction on `model_input`. Conditioning frames are restored afterwards.
#[allow(clippy::too_many_arguments)]
fn denoise(
    eps_hat: &VideoTensor,
    xt: &VideoTensor,
    t_cur: usize,
    t_prev: usize,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
) -> Result<VideoTensor> {
    let (a_t, s_t) = schedule.marginal(t_cur)?;
    let (a_p, s_p) = schedule.marginal(t_prev)?;
    let (alpha, beta2) = schedule.transition(t_prev, t_cur)?;
    let coef_xt = alpha * s_p * s_p / (s_t * s_t);
    let coef_x0 = a_p * beta2 / (s_t * s_t);
    let std = if t_prev == 0 {
        0.0
    } else {
        match cfg.variance {
            PosteriorVariance::BetaTilde => (s_p * s_p * beta2 / (s_t * s_t)).sqrt(),
            PosteriorVariance::Beta => beta2.sqrt(),
        }
    };
    let mut out = xt.clone();
    for &i in mask.unknown() {
        let eps = eps_hat.frame(i);
        let x = xt.frame(i);
        let dst = out.frame_mut(i);
        for k in 0..dst.len() {
            let mut x0 = (x[k] - s_t * eps[k]) / a_t;
            if cfg.clamp_x0 {
                x0 = x0.clamp(-1.0, 1.0);
            }
            dst[k] = coef_xt * x[k] + coef_x0 * x0;
        }
        if std > 0.0 {
            for v in dst.iter_mut() {
                *v += std * rng.normal();
            }
        }
    }
    restore_conditioning(&mut out, x0_cond, mask);
    Ok(out)
}

/// One reverse step from `t_cur` to `t_prev` with the conditioning frames
/// restored from `x0_cond`.
#[allow(clippy::too_many_arguments)]
pub fn reverse_step<M: ScoreModel + ?Sized>(
    model: &M,
    xt: &VideoTensor,
    t_cur: usize,
    t_prev: usize,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
) -> Result<VideoTensor> {
    ensure!(
        t_cur > t_prev,
        InvalidArgument,
        "reverse step must go backwards, got {t_cur} -> {t_prev}"
    );
    check_inputs(model, mask, x0_cond)?;
    xt.ensure_same_shape(x0_cond, "reverse step")?;
    let eps_hat = model.predict(xt, t_cur)?;
    denoise(&eps_hat, xt, t_cur, t_prev, mask, x0_cond, schedule, cfg, rng)
}

/// Starting state: prior noise on unknown frames, observed conditioning frames.
fn initial_state(
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
    schedule: &NoiseSchedule,
    rng: &mut RandomStream,
) -> VideoTensor {
    let prior = schedule.prior_std();
    let mut x = x0_cond.clone();
    for &i in mask.unknown() {
        for v in x.frame_mut(i) {
            *v = prior * rng.normal();
        }
    }
    x
}

/// Generate the unknown frames of `x0_cond` (its unknown-frame content is
/// ignored). With an empty conditioning set this is unconditional generation.
pub fn sample<M: ScoreModel + ?Sized>(
    model: &M,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
) -> Result<VideoTensor> {
    sample_traced(model, mask, x0_cond, schedule, cfg, rng, &mut |_, _| {})
}

/// [`sample`], calling `observe(t_prev, state)` after every reverse step.
pub fn sample_traced<M: ScoreModel + ?Sized>(
    model: &M,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
    observe: &mut dyn FnMut(usize, &VideoTensor),
) -> Result<VideoTensor> {
    check_inputs(model, mask, x0_cond)?;
    let pairs = step_pairs(schedule, cfg)?;
    let mut x = initial_state(mask, x0_cond, schedule, rng);
    for (t_cur, t_prev) in pairs {
        let eps_hat = model.predict(&x, t_cur)?;
        x = denoise(&eps_hat, &x, t_cur, t_prev, mask, x0_cond, schedule, cfg, rng)?;
        observe(t_prev, &x);
    }
    Ok(x)
}

/// `n` independent samples, one child stream each. Results do not depend on
/// the number of worker threads.
pub fn sample_many<M: ScoreModel + ?Sized>(
    model: &M,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    n: usize,
    rng: &mut RandomStream,
) -> Result<VideoBatch> {
    let streams = rng.split_n(n);
    let items = streams
        .into_par_iter()
        .map(|mut r| sample(model, mask, x0_cond, schedule, cfg, &mut r))
        .collect::<Result<Vec<_>>>()?;
    VideoBatch::new(items)
}

/// Extend `seed_frames` window by window. Each window of the model's length
/// is sampled with its first `overlap` frames fixed to the latest frames
/// generated so far; the remaining frames are appended.
pub fn sample_autoregressive<M: ScoreModel + ?Sized>(
    model: &M,
    seed_frames: &VideoTensor,
    num_windows: usize,
    overlap: usize,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
) -> Result<VideoTensor> {
    let window = model.shape();
    ensure!(overlap >= 1, InvalidArgument, "overlap must be at least 1");
    ensure!(
        overlap < window.frames,
        InvalidArgument,
        "overlap {overlap} must be smaller than the window length {}",
        window.frames
    );
    ensure!(
        seed_frames.frames() >= overlap,
        InvalidArgument,
        "{} seed frames cannot supply an overlap of {overlap}",
        seed_frames.frames()
    );
    ensure!(
        seed_frames.shape().with_frames(window.frames) == window,
        Shape,
        "seed frames {} do not match model frames {}",
        seed_frames.shape(),
        window
    );
    let mask = MaskSpec::new(window.frames, 0..overlap)?;
    let mut video = seed_frames.clone();
    for _ in 0..num_windows {
        let mut cond = VideoTensor::zeros(window);
        let start = video.frames() - overlap;
        for k in 0..overlap {
            cond.frame_mut(k).copy_from_slice(video.frame(start + k));
        }
        let mut wrng = rng.split();
        let out = sample(model, &mask, &cond, schedule, cfg, &mut wrng)?;
        let frames = (0..video.frames())
            .map(|f| video.frame(f))
            .chain((overlap..window.frames).map(|f| out.frame(f)));
        video = VideoTensor::from_frames(window, frames)?;
    }
    Ok(video)
}

/// Resampling baseline for models trained without masks.
///
/// The model always sees the conditioning frames noised to the current step
/// (as it did in training). After each reverse step the unknown frames are
/// pushed back to the current step through the forward process and denoised
/// again, `resample_jumps` times, so each step costs `resample_jumps + 1`
/// model evaluations.
pub fn sample_resampling_baseline<M: ScoreModel + ?Sized>(
    model: &M,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
) -> Result<VideoTensor> {
    resampling_traced(model, mask, x0_cond, schedule, cfg, rng, &mut |_, _| {})
}

#[allow(clippy::too_many_arguments)]
pub fn resampling_traced<M: ScoreModel + ?Sized>(
    model: &M,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    rng: &mut RandomStream,
    observe: &mut dyn FnMut(usize, &VideoTensor),
) -> Result<VideoTensor> {
    ensure!(
        cfg.resample_jumps >= 1,
        InvalidArgument,
        "resampling baseline needs resample_jumps >= 1"
    );
    check_inputs(model, mask, x0_cond)?;
    let pairs = step_pairs(schedule, cfg)?;
    let mut x = initial_state(mask, x0_cond, schedule, rng);
    for (t_cur, t_prev) in pairs {
        let (a_t, s_t) = schedule.marginal(t_cur)?;
        let (scale, var) = schedule.transition(t_prev, t_cur)?;
        let renoise_std = var.sqrt();
        for jump in 0..=cfg.resample_jumps {
            let mut input = x.clone();
            for &i in mask.conditioning() {
                let clean = x0_cond.frame(i);
                for (v, &c) in input.frame_mut(i).iter_mut().zip(clean) {
                    *v = a_t * c + s_t * rng.normal();
                }
            }
            let eps_hat = model.predict(&input, t_cur)?;
            let prev = denoise(&eps_hat, &x, t_cur, t_prev, mask, x0_cond, schedule, cfg, rng)?;
            observe(t_prev, &prev);
            if jump == cfg.resample_jumps {
                x = prev;
            } else {
                x = prev;
                for &i in mask.unknown() {
                    for v in x.frame_mut(i) {
                        *v = scale * *v + renoise_std * rng.normal();
                    }
                }
                observe(t_cur, &x);
            }
        }
    }
    Ok(x)
}

/// Wraps a model and counts `predict` calls.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicUsize,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> M {
        self.inner
    }
}

impl<M: ScoreModel> ScoreModel for CountingModel<M> {
    fn shape(&self) -> VideoShape {
        self.inner.shape()
    }

    fn predict(&self, xt: &VideoTensor, t: usize) -> Result<VideoTensor> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(xt, t)
    }

    fn parameters(&self) -> &[f64] {
        self.inner.parameters()
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        self.inner.set_parameters(params)
    }

    fn gradient(&self, xt: &VideoTensor, t: usize, upstream: &VideoTensor) -> Result<Vec<f64>> {
        self.inner.gradient(xt, t, upstream)
    }
}
