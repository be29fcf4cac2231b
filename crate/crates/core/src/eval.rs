//! Sample-quality metrics: Fréchet distance over pluggable features, Inception
//! Score over pluggable classifiers, error against the exact Gaussian
//! conditional, and harmonization error at conditioning boundaries.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::masking::MaskSpec;
use crate::oracle::GaussianConditional;
use crate::rng::RandomStream;
use crate::video::{VideoBatch, VideoShape, VideoTensor};

/// Added to both covariances before taking matrix square roots.
pub const COVARIANCE_SHRINKAGE: f64 = 1e-10;
const PSD_TOLERANCE: f64 = 1e-8;
const NEGATIVE_CLIP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

pub trait FeatureExtractor: Sync {
    fn dim(&self) -> usize;
    fn extract(&self, video: &VideoTensor) -> Result<Vec<f64>>;
}

/// Flattened pixel values.
pub struct Pixels {
    shape: VideoShape,
}

impl Pixels {
    pub fn new(shape: VideoShape) -> Self {
        Self { shape }
    }
}

impl FeatureExtractor for Pixels {
    fn dim(&self) -> usize {
        self.shape.len()
    }

    fn extract(&self, video: &VideoTensor) -> Result<Vec<f64>> {
        ensure!(video.shape() == self.shape, Shape, "expected {}, got {}", self.shape, video.shape());
        Ok(video.as_slice().to_vec())
    }
}

/// Fixed Gaussian projection of the pixels, entries N(0, 1/input_dim).
pub struct RandomProjection {
    shape: VideoShape,
    weights: DMatrix<f64>,
}

impl RandomProjection {
    pub fn new(shape: VideoShape, dim: usize, seed: u64) -> Result<Self> {
        ensure!(dim >= 1, InvalidArgument, "projection dimension must be positive");
        let mut rng = RandomStream::from_seed(seed);
        let scale = 1.0 / (shape.len() as f64).sqrt();
        let weights = DMatrix::from_fn(dim, shape.len(), |_, _| scale * rng.normal());
        Ok(Self { shape, weights })
    }
}

impl FeatureExtractor for RandomProjection {
    fn dim(&self) -> usize {
        self.weights.nrows()
    }

    fn extract(&self, video: &VideoTensor) -> Result<Vec<f64>> {
        ensure!(video.shape() == self.shape, Shape, "expected {}, got {}", self.shape, video.shape());
        let x = DVector::from_column_slice(video.as_slice());
        Ok((&self.weights * x).as_slice().to_vec())
    }
}

/// Mean squared change between consecutive frames, one feature per pair,
/// followed by the mean energy of every frame.
pub struct TemporalDiff {
    shape: VideoShape,
}

impl TemporalDiff {
    pub fn new(shape: VideoShape) -> Result<Self> {
        ensure!(shape.frames >= 2, Shape, "temporal features need at least two frames");
        Ok(Self { shape })
    }
}

impl FeatureExtractor for TemporalDiff {
    fn dim(&self) -> usize {
        2 * self.shape.frames - 1
    }

    fn extract(&self, video: &VideoTensor) -> Result<Vec<f64>> {
        ensure!(video.shape() == self.shape, Shape, "expected {}, got {}", self.shape, video.shape());
        let frames = self.shape.frames;
        let mut out = Vec::with_capacity(self.dim());
        for i in 1..frames {
            out.push(mean_sq_diff(video.frame(i - 1), video.frame(i)));
        }
        for i in 0..frames {
            let f = video.frame(i);
            out.push(f.iter().map(|v| v * v).sum::<f64>() / f.len() as f64);
        }
        Ok(out)
    }
}

/// Features of every video, in batch order.
pub fn extract_features(batch: &VideoBatch, extractor: &dyn FeatureExtractor) -> Result<Vec<Vec<f64>>> {
    batch.items().par_iter().map(|v| extractor.extract(v)).collect()
}

/// Sample mean and unbiased sample covariance.
pub fn gaussian_stats(features: &[Vec<f64>]) -> Result<FeatureStats> {
    ensure!(features.len() >= 2, InvalidArgument, "need at least 2 feature vectors, got {}", features.len());
    let d = features[0].len();
    ensure!(d >= 1, InvalidArgument, "feature vectors are empty");
    for (i, f) in features.iter().enumerate() {
        ensure!(f.len() == d, Shape, "feature {i} has dimension {}, expected {d}", f.len());
    }
    let n = features.len();
    let mut mu = DVector::zeros(d);
    for f in features {
        mu += DVector::from_column_slice(f);
    }
    mu /= n as f64;
    let mut centered = DMatrix::zeros(d, n);
    for (j, f) in features.iter().enumerate() {
        for i in 0..d {
            centered[(i, j)] = f[i] - mu[i];
        }
    }
    let mut sigma = &centered * centered.transpose() / (n - 1) as f64;
    symmetrize(&mut sigma);
    Ok(FeatureStats { mu, sigma, n })
}

/// Stats of `extractor` features over a batch.
pub fn batch_stats(batch: &VideoBatch, extractor: &dyn FeatureExtractor) -> Result<FeatureStats> {
    gaussian_stats(&extract_features(batch, extractor)?)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn shrunk_psd(sigma: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    ensure!(sigma.is_square(), Shape, "{what} covariance is not square");
    let mut s = sigma.clone();
    symmetrize(&mut s);
    let asym = (sigma - &s).abs().max();
    let scale = sigma.abs().max().max(1.0);
    ensure!(asym <= 1e-9 * scale, Numerical, "{what} covariance is not symmetric");
    // Tolerances are absolute for unit-scale covariances and grow with the
    // entries beyond that, where round-off grows too.
    let min = s.clone().symmetric_eigenvalues().min();
    ensure!(min >= -PSD_TOLERANCE * scale, Numerical, "{what} covariance has eigenvalue {min:e}");
    for i in 0..s.nrows() {
        s[(i, i)] += COVARIANCE_SHRINKAGE;
    }
    Ok(s)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&roots) * v.transpose();
    symmetrize(&mut out);
    out
}

/// Squared 2-Wasserstein distance between the Gaussians described by `a` and `b`.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    ensure!(a.dim() == b.dim(), Shape, "feature dimensions differ: {} vs {}", a.dim(), b.dim());
    ensure!(
        a.sigma.nrows() == a.dim() && b.sigma.nrows() == b.dim(),
        Shape,
        "covariance does not match mean dimension"
    );
    let sa = shrunk_psd(&a.sigma, "first")?;
    let sb = shrunk_psd(&b.sigma, "second")?;
    let root_a = psd_sqrt(&sa);
    let mut inner = &root_a * &sb * &root_a;
    symmetrize(&mut inner);
    let cross: f64 = inner
        .symmetric_eigenvalues()
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let diff = (&a.mu - &b.mu).norm_squared();
    let d = diff + sa.trace() + sb.trace() - 2.0 * cross;
    if d < 0.0 {
        let scale = (sa.trace() + sb.trace()).max(1.0);
        ensure!(d >= -NEGATIVE_CLIP * scale, Numerical, "Fréchet distance is negative ({d:e})");
        return Ok(0.0);
    }
    Ok(d)
}

/// Maps a video to a distribution over classes.
pub trait Classifier: Sync {
    fn classes(&self) -> usize;
    fn classify(&self, video: &VideoTensor) -> Result<Vec<f64>>;
}

/// Softmax over a fixed random projection of the pixels.
pub struct RandomSoftmaxClassifier {
    projection: RandomProjection,
    temperature: f64,
}

impl RandomSoftmaxClassifier {
    pub fn new(shape: VideoShape, classes: usize, temperature: f64, seed: u64) -> Result<Self> {
        ensure!(classes >= 2, InvalidArgument, "need at least 2 classes");
        ensure!(temperature > 0.0, InvalidArgument, "temperature must be positive");
        Ok(Self {
            projection: RandomProjection::new(shape, classes, seed)?,
            temperature,
        })
    }
}

impl Classifier for RandomSoftmaxClassifier {
    fn classes(&self) -> usize {
        self.projection.dim()
    }

    fn classify(&self, video: &VideoTensor) -> Result<Vec<f64>> {
        let logits = self.projection.extract(video)?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / self.temperature).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / total).collect())
    }
}

/// `exp(mean_i KL(p_i || p_bar))`.
pub fn inception_score(probabilities: &[Vec<f64>]) -> Result<f64> {
    ensure!(!probabilities.is_empty(), InvalidArgument, "no class distributions");
    let k = probabilities[0].len();
    ensure!(k >= 1, InvalidArgument, "class distributions are empty");
    let mut mean = vec![0.0; k];
    for (i, p) in probabilities.iter().enumerate() {
        ensure!(p.len() == k, Shape, "distribution {i} has {} classes, expected {k}", p.len());
        ensure!(
            p.iter().all(|v| v.is_finite() && *v >= 0.0),
            InvalidArgument,
            "distribution {i} has negative or non-finite entries"
        );
        let total: f64 = p.iter().sum();
        ensure!((total - 1.0).abs() <= 1e-6, InvalidArgument, "distribution {i} sums to {total}");
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    let n = probabilities.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mean_kl = probabilities
        .iter()
        .map(|p| {
            p.iter()
                .zip(&mean)
                .filter(|(v, _)| **v > 0.0)
                .map(|(v, m)| v * (v / m).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;
    Ok(mean_kl.max(0.0).exp())
}

pub fn classifier_inception_score(batch: &VideoBatch, classifier: &dyn Classifier) -> Result<f64> {
    let probs = batch
        .items()
        .par_iter()
        .map(|v| classifier.classify(v))
        .collect::<Result<Vec<_>>>()?;
    inception_score(&probs)
}

/// Relative L2 error of the sample mean and relative Frobenius error of the
/// sample covariance of the unknown frames, against the exact conditional.
pub fn conditional_oracle_error(
    samples: &VideoBatch,
    mask: &MaskSpec,
    oracle: &GaussianConditional,
) -> Result<(f64, f64)> {
    ensure!(samples.len() >= 2, InvalidArgument, "need at least 2 samples, got {}", samples.len());
    ensure!(!mask.unknown().is_empty(), InvalidArgument, "mask has no unknown frames");
    mask.check_video(&samples.items()[0])?;
    ensure!(
        oracle.unknown_frames == mask.unknown(),
        InvalidArgument,
        "oracle was conditioned on a different mask"
    );
    ensure!(
        oracle.frame_len == samples.shape().frame_len(),
        Shape,
        "oracle frame size {} does not match samples {}",
        oracle.frame_len,
        samples.shape().frame_len()
    );
    let coords: Vec<Vec<f64>> = samples
        .iter()
        .map(|v| oracle.unknown_coords(v).as_slice().to_vec())
        .collect();
    let stats = gaussian_stats(&coords)?;
    let mean_norm = oracle.mean.norm();
    let cov_norm = oracle.cov.norm();
    ensure!(mean_norm > 0.0, Numerical, "oracle mean is zero; relative error undefined");
    ensure!(cov_norm > 0.0, Numerical, "oracle covariance is zero; relative error undefined");
    let mean_err = (&stats.mu - &oracle.mean).norm() / mean_norm;
    let cov_err = (&stats.sigma - &oracle.cov).norm() / cov_norm;
    Ok((mean_err, cov_err))
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Mean squared temporal difference over adjacent pairs straddling the
/// conditioning/unknown boundary, minus the same over adjacent pairs inside
/// the unknown frames (zero when there are none).
pub fn harmonization_error(video: &VideoTensor, mask: &MaskSpec) -> Result<f64> {
    mask.check_video(video)?;
    let (mut boundary, mut nb) = (0.0, 0usize);
    let (mut within, mut nw) = (0.0, 0usize);
    for i in 1..video.frames() {
        let d = mean_sq_diff(video.frame(i - 1), video.frame(i));
        match (mask.is_conditioning(i - 1), mask.is_conditioning(i)) {
            (true, false) | (false, true) => {
                boundary += d;
                nb += 1;
            }
            (false, false) => {
                within += d;
                nw += 1;
            }
            (true, true) => {}
        }
    }
    ensure!(nb > 0, InvalidArgument, "mask {mask} has no conditioning/unknown boundary");
    let within = if nw > 0 { within / nw as f64 } else { 0.0 };
    Ok(boundary / nb as f64 - within)
}

/// Average harmonization error over a batch.
pub fn batch_harmonization_error(batch: &VideoBatch, mask: &MaskSpec) -> Result<f64> {
    let total = batch
        .iter()
        .map(|v| harmonization_error(v, mask))
        .sum::<Result<f64>>()?;
    Ok(total / batch.len() as f64)
}
