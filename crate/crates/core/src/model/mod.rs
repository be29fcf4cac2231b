//! Noise-prediction models.
//!
//! Every model predicts the standardized noise `eps` that was mixed into
//! `x_t`; the score of the Gaussian perturbation kernel is `-eps / std(t)`.
//! Models are queried on whole videos and return whole videos; restricting
//! the output to unknown frames is the caller's business.

mod affine;
mod checkpoint;
mod toynet;

pub use affine::AffineScoreModel;
pub use checkpoint::{decode_model, encode_model, read_model, write_model, MODEL_MAGIC};
pub use toynet::{ToyVideoNet, ToyVideoNetConfig, TIME_EMBED_DIM};

use crate::error::{ensure, Error, Result};
use crate::schedule::NoiseSchedule;
use crate::video::{VideoShape, VideoTensor};

pub trait ScoreModel: Send + Sync {
    /// Shape of the videos the model accepts.
    fn shape(&self) -> VideoShape;

    fn predict(&self, xt: &VideoTensor, t: usize) -> Result<VideoTensor>;

    fn parameters(&self) -> &[f64];

    fn set_parameters(&mut self, params: &[f64]) -> Result<()>;

    /// Gradient of `<upstream, predict(xt, t)>` with respect to the parameters.
    fn gradient(&self, xt: &VideoTensor, t: usize, upstream: &VideoTensor) -> Result<Vec<f64>>;

    /// Forward pass followed by a backward pass whose upstream gradient is
    /// computed from the prediction. Models with an expensive forward pass
    /// override this to avoid running it twice.
    fn predict_with_gradient(
        &self,
        xt: &VideoTensor,
        t: usize,
        upstream_of: &mut dyn FnMut(&VideoTensor) -> Result<VideoTensor>,
    ) -> Result<(VideoTensor, Vec<f64>)> {
        let out = self.predict(xt, t)?;
        let upstream = upstream_of(&out)?;
        let grad = self.gradient(xt, t, &upstream)?;
        Ok((out, grad))
    }
}

/// Closed set of trainable models, used where a concrete type has to be
/// persisted or chosen at runtime.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainableModel {
    Affine(AffineScoreModel),
    Toy(ToyVideoNet),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Affine,
    Toy,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(ModelKind::Affine),
            "toynet" | "toy" => Ok(ModelKind::Toy),
            other => Err(Error::InvalidArgument(format!(
                "unknown model '{other}' (expected affine or toynet)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Affine => "affine",
            ModelKind::Toy => "toynet",
        })
    }
}

impl TrainableModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainableModel::Affine(_) => ModelKind::Affine,
            TrainableModel::Toy(_) => ModelKind::Toy,
        }
    }

    fn inner(&self) -> &dyn ScoreModel {
        match self {
            TrainableModel::Affine(m) => m,
            TrainableModel::Toy(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn ScoreModel {
        match self {
            TrainableModel::Affine(m) => m,
            TrainableModel::Toy(m) => m,
        }
    }
}

impl ScoreModel for TrainableModel {
    fn shape(&self) -> VideoShape {
        self.inner().shape()
    }

    fn predict(&self, xt: &VideoTensor, t: usize) -> Result<VideoTensor> {
        self.inner().predict(xt, t)
    }

    fn parameters(&self) -> &[f64] {
        self.inner().parameters()
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        self.inner_mut().set_parameters(params)
    }

    fn gradient(&self, xt: &VideoTensor, t: usize, upstream: &VideoTensor) -> Result<Vec<f64>> {
        self.inner().gradient(xt, t, upstream)
    }

    fn predict_with_gradient(
        &self,
        xt: &VideoTensor,
        t: usize,
        upstream_of: &mut dyn FnMut(&VideoTensor) -> Result<VideoTensor>,
    ) -> Result<(VideoTensor, Vec<f64>)> {
        self.inner().predict_with_gradient(xt, t, upstream_of)
    }
}

/// Convert an `eps` prediction into a score: `-eps / std(t)`.
pub fn score_from_eps(eps: &VideoTensor, t: usize, schedule: &NoiseSchedule) -> Result<VideoTensor> {
    let (_, std) = schedule.marginal(t)?;
    ensure!(
        std > 0.0,
        Numerical,
        "score undefined at step {t}: marginal std is zero"
    );
    let mut out = eps.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = -*v / std);
    Ok(out)
}

/// Inverse of [`score_from_eps`]: `-score * std(t)`.
pub fn eps_from_score(
    score: &VideoTensor,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<VideoTensor> {
    let (_, std) = schedule.marginal(t)?;
    ensure!(
        std > 0.0,
        Numerical,
        "score undefined at step {t}: marginal std is zero"
    );
    let mut out = score.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = -*v * std);
    Ok(out)
}

pub(crate) fn check_spatial(expected: VideoShape, xt: &VideoTensor) -> Result<()> {
    let s = xt.shape();
    ensure!(
        (s.height, s.width, s.channels) == (expected.height, expected.width, expected.channels),
        Shape,
        "model expects frames of {}x{}x{}, got {}",
        expected.height,
        expected.width,
        expected.channels,
        s
    );
    Ok(())
}
