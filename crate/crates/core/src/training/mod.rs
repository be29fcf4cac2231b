//! Masked denoising objective and the mixed conditional/unconditional
//! training loop: per-item random masks, micro-batch gradient accumulation,
//! Adam or SGD, and an exponential moving average of the weights.

pub mod checkpoint;

use rayon::prelude::*;

use crate::config::KeyValues;
use crate::error::{ensure, Error, Result};
use crate::masking::{corrupt, sample_mask, MaskPolicy, MaskSpec};
use crate::model::ScoreModel;
use crate::rng::RandomStream;
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::video::{VideoBatch, VideoTensor};

pub use checkpoint::{decode_trainer, encode_trainer, read_trainer, write_trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidArgument(format!(
                "unknown optimizer '{other}' (expected sgd or adam)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub policy: MaskPolicy,
    pub schedule: ScheduleKind,
    /// Diffusion step count `T`.
    pub diffusion_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub micro_batch: usize,
    pub total_steps: usize,
    pub ema_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            policy: MaskPolicy {
                max_cond: 4,
                p_uncond: 0.25,
            },
            schedule: ScheduleKind::Linear,
            diffusion_steps: 1000,
            learning_rate: 2e-5,
            batch_size: 32,
            micro_batch: 2,
            total_steps: 1000,
            ema_rate: 0.9999,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "K",
        "pu",
        "schedule",
        "T",
        "lr",
        "batch_size",
        "micro_batch",
        "train_steps",
        "ema_rate",
        "optimizer",
        "seed",
    ];

    pub fn validate(&self) -> Result<()> {
        MaskPolicy::new(self.policy.max_cond, self.policy.p_uncond)?;
        ensure!(self.diffusion_steps >= 1, InvalidArgument, "T must be positive");
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            InvalidArgument,
            "learning rate must be positive"
        );
        ensure!(
            self.batch_size >= 1 && self.micro_batch >= 1,
            InvalidArgument,
            "batch and micro-batch sizes must be positive"
        );
        ensure!(
            self.batch_size.is_multiple_of(self.micro_batch),
            InvalidArgument,
            "micro_batch {} does not divide batch_size {}",
            self.micro_batch,
            self.batch_size
        );
        ensure!(
            self.ema_rate > 0.0 && self.ema_rate < 1.0,
            InvalidArgument,
            "EMA rate must lie in (0, 1)"
        );
        Ok(())
    }

    /// Defaults overridden by whichever of [`Self::KEYS`] are present.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = Self::default();
        if let Some(v) = kv.parse_value("K")? {
            c.policy.max_cond = v;
        }
        if let Some(v) = kv.parse_value("pu")? {
            c.policy.p_uncond = v;
        }
        if let Some(v) = kv.parse_value("schedule")? {
            c.schedule = v;
        }
        if let Some(v) = kv.parse_value("T")? {
            c.diffusion_steps = v;
        }
        if let Some(v) = kv.parse_value("lr")? {
            c.learning_rate = v;
        }
        if let Some(v) = kv.parse_value("batch_size")? {
            c.batch_size = v;
        }
        if let Some(v) = kv.parse_value("micro_batch")? {
            c.micro_batch = v;
        }
        if let Some(v) = kv.parse_value("train_steps")? {
            c.total_steps = v;
        }
        if let Some(v) = kv.parse_value("ema_rate")? {
            c.ema_rate = v;
        }
        if let Some(v) = kv.parse_value("optimizer")? {
            c.optimizer = v;
        }
        if let Some(v) = kv.parse_value("seed")? {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("K", self.policy.max_cond);
        kv.set("pu", self.policy.p_uncond);
        kv.set("schedule", self.schedule);
        kv.set("T", self.diffusion_steps);
        kv.set("lr", self.learning_rate);
        kv.set("batch_size", self.batch_size);
        kv.set("micro_batch", self.micro_batch);
        kv.set("train_steps", self.total_steps);
        kv.set("ema_rate", self.ema_rate);
        kv.set("optimizer", self.optimizer);
        kv.set("seed", self.seed);
        kv
    }

    pub fn build_schedule(&self) -> Result<NoiseSchedule> {
        self.schedule.build(self.diffusion_steps)
    }
}

/// Masked denoising loss for one video at one step.
///
/// Corrupts the unknown frames, predicts the noise on the full video, and
/// returns the mean squared error over unknown-frame elements together with
/// its parameter gradient. Conditioning-frame outputs carry no gradient.
pub fn ramvid_loss<M: ScoreModel + ?Sized>(
    model: &M,
    x0: &VideoTensor,
    mask: &MaskSpec,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut RandomStream,
) -> Result<(f64, Vec<f64>)> {
    ensure!(t >= 1, InvalidArgument, "training step t must be at least 1");
    ensure!(
        !mask.unknown().is_empty(),
        InvalidArgument,
        "mask leaves no unknown frames to train on"
    );
    let (xt, noise) = corrupt(x0, mask, t, schedule, rng)?;
    let count = (mask.unknown().len() * x0.shape().frame_len()) as f64;
    let mut loss = 0.0;
    let (_, grad) = model.predict_with_gradient(&xt, t, &mut |eps_hat| {
        let mut upstream = VideoTensor::zeros(eps_hat.shape());
        for &i in mask.unknown() {
            let pred = eps_hat.frame(i);
            let target = noise.frame(i);
            for ((u, &p), &n) in upstream.frame_mut(i).iter_mut().zip(pred).zip(target) {
                let r = p - n;
                loss += r * r;
                *u = 2.0 * r / count;
            }
        }
        Ok(upstream)
    })?;
    Ok((loss / count, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmaState {
    shadow: Vec<f64>,
}

impl EmaState {
    pub fn new(params: &[f64]) -> Self {
        Self {
            shadow: params.to_vec(),
        }
    }

    pub fn from_shadow(shadow: Vec<f64>) -> Self {
        Self { shadow }
    }

    /// `shadow <- rate * shadow + (1 - rate) * params`
    pub fn update(&mut self, rate: f64, params: &[f64]) {
        for (s, &p) in self.shadow.iter_mut().zip(params) {
            *s = rate * *s + (1.0 - rate) * p;
        }
    }

    pub fn shadow(&self) -> &[f64] {
        &self.shadow
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState {
    Sgd,
    Adam {
        m: Vec<f64>,
        v: Vec<f64>,
        t: u64,
    },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam => OptimizerState::Adam {
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
            },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::Sgd => OptimizerKind::Sgd,
            OptimizerState::Adam { .. } => OptimizerKind::Adam,
        }
    }

    fn apply(&mut self, lr: f64, params: &mut [f64], grad: &[f64]) {
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*t as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(*t as i32);
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// What happened during one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Diffusion step drawn for each batch item.
    pub timesteps: Vec<usize>,
    /// Mask drawn for each batch item.
    pub masks: Vec<MaskSpec>,
}

impl StepStats {
    pub fn unconditional_items(&self) -> usize {
        self.masks.iter().filter(|m| m.is_unconditional()).count()
    }
}

pub struct Trainer<M> {
    config: TrainConfig,
    schedule: NoiseSchedule,
    model: M,
    optimizer: OptimizerState,
    ema: EmaState,
    rng: RandomStream,
    step: u64,
}

impl<M: ScoreModel> Trainer<M> {
    pub fn new(config: TrainConfig, model: M) -> Result<Self> {
        config.validate()?;
        config.policy.validate_for(model.shape().frames)?;
        let schedule = config.build_schedule()?;
        let n = model.parameters().len();
        Ok(Self {
            optimizer: OptimizerState::new(config.optimizer, n),
            ema: EmaState::new(model.parameters()),
            rng: RandomStream::from_seed(config.seed),
            step: 0,
            schedule,
            config,
            model,
        })
    }

    /// Reassemble a trainer from checkpointed parts.
    pub fn from_parts(
        config: TrainConfig,
        model: M,
        optimizer: OptimizerState,
        ema: EmaState,
        rng: RandomStream,
        step: u64,
    ) -> Result<Self> {
        config.validate()?;
        let n = model.parameters().len();
        ensure!(ema.shadow().len() == n, Shape, "EMA length does not match model");
        if let OptimizerState::Adam { m, v, .. } = &optimizer {
            ensure!(
                m.len() == n && v.len() == n,
                Shape,
                "optimizer moments do not match model"
            );
        }
        Ok(Self {
            schedule: config.build_schedule()?,
            config,
            model,
            optimizer,
            ema,
            rng,
            step,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn ema(&self) -> &EmaState {
        &self.ema
    }

    pub fn rng(&self) -> &RandomStream {
        &self.rng
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn ema_parameters(&self) -> &[f64] {
        self.ema.shadow()
    }

    /// One optimizer step on `batch`.
    pub fn train_step(&mut self, batch: &VideoBatch) -> Result<StepStats> {
        ensure!(
            batch.len() == self.config.batch_size,
            InvalidArgument,
            "batch of {} items, configured batch size is {}",
            batch.len(),
            self.config.batch_size
        );
        ensure!(
            batch.shape() == self.model.shape(),
            Shape,
            "batch shape {} does not match model {}",
            batch.shape(),
            self.model.shape()
        );
        let len = batch.shape().frames;
        let streams = self.rng.split_n(batch.len());
        let (model, schedule, policy) = (&self.model, &self.schedule, self.config.policy);
        let steps = schedule.steps();

        let per_item: Vec<(usize, MaskSpec, f64, Vec<f64>)> = batch
            .items()
            .par_iter()
            .zip(streams)
            .map(|(x0, mut rng)| {
                let t = rng.uniform_int(1, steps);
                let mask = sample_mask(&policy, len, &mut rng)?;
                let (loss, grad) = ramvid_loss(model, x0, &mask, t, schedule, &mut rng)?;
                Ok((t, mask, loss, grad))
            })
            .collect::<Result<_>>()?;

        let n_params = self.model.parameters().len();
        let mut total = vec![0.0; n_params];
        let mut micro = vec![0.0; n_params];
        let mut loss = 0.0;
        for chunk in per_item.chunks(self.config.micro_batch) {
            micro.iter_mut().for_each(|g| *g = 0.0);
            for (_, _, item_loss, grad) in chunk {
                loss += item_loss;
                for (m, g) in micro.iter_mut().zip(grad) {
                    *m += g;
                }
            }
            for (t, m) in total.iter_mut().zip(&micro) {
                *t += m;
            }
        }
        let n = batch.len() as f64;
        total.iter_mut().for_each(|g| *g /= n);

        let mut params = self.model.parameters().to_vec();
        self.optimizer
            .apply(self.config.learning_rate, &mut params, &total);
        self.model.set_parameters(&params)?;
        self.ema.update(self.config.ema_rate, &params);
        self.step += 1;

        let (timesteps, masks) = per_item.into_iter().map(|(t, m, _, _)| (t, m)).unzip();
        Ok(StepStats {
            loss: loss / n,
            timesteps,
            masks,
        })
    }

    /// Run `steps` optimizer steps on batches drawn from `source`.
    pub fn fit(
        &mut self,
        steps: usize,
        source: &mut dyn FnMut() -> Result<VideoBatch>,
    ) -> Result<Vec<f64>> {
        let mut losses = Vec::with_capacity(steps);
        for _ in 0..steps {
            let batch = source()?;
            losses.push(self.train_step(&batch)?.loss);
        }
        Ok(losses)
    }
}

impl<M: ScoreModel + Clone> Trainer<M> {
    /// The model with EMA weights swapped in, which is what sampling uses by default.
    pub fn ema_model(&self) -> Result<M> {
        let mut m = self.model.clone();
        m.set_parameters(self.ema.shadow())?;
        Ok(m)
    }
}
