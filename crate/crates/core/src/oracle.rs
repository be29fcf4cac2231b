//! Closed-form references for Gaussian video data.
//!
//! For the stationary AR(1) process the law of the unknown frames given the
//! observed ones is Gaussian and computed here by dense multivariate-normal
//! conditioning. The `*Eps` models are exact noise predictors for Gaussian
//! data; they let the sampler be checked independently of any training.

use nalgebra::{DMatrix, DVector};

use crate::data::GaussianVideoConfig;
use crate::error::{ensure, Error, Result};
use crate::masking::MaskSpec;
use crate::model::{check_spatial, ScoreModel};
use crate::schedule::NoiseSchedule;
use crate::rng::RandomStream;
use crate::video::{VideoShape, VideoTensor};

/// Gaussian law over the unknown frames of one video, flattened frame by
/// frame in increasing frame order.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub unknown_frames: Vec<usize>,
    pub frame_len: usize,
}

impl GaussianConditional {
    /// The unknown-frame coordinates of `video`, in the same order as `mean`.
    pub fn unknown_coords(&self, video: &VideoTensor) -> DVector<f64> {
        DVector::from_iterator(
            self.unknown_frames.len() * self.frame_len,
            self.unknown_frames
                .iter()
                .flat_map(|&f| video.frame(f).iter().copied()),
        )
    }

    /// One exact draw: `template` with its unknown frames replaced by a
    /// sample from this law.
    pub fn draw(&self, template: &VideoTensor, rng: &mut RandomStream) -> Result<VideoTensor> {
        let n = self.mean.len();
        ensure!(
            self.unknown_frames.len() * self.frame_len == n
                && template.shape().frame_len() == self.frame_len
                && self.unknown_frames.iter().all(|&f| f < template.frames()),
            Shape,
            "template {} does not fit this conditional",
            template.shape()
        );
        // Jitter keeps the factorization alive for (near-)deterministic coordinates.
        let jittered = &self.cov + DMatrix::identity(n, n) * 1e-12;
        let chol = jittered
            .cholesky()
            .ok_or_else(|| Error::Numerical("conditional covariance is not PSD".into()))?;
        let mut z = DVector::zeros(n);
        for v in z.iter_mut() {
            *v = rng.normal();
        }
        let x = &self.mean + chol.l() * z;
        let mut out = template.clone();
        for (k, &f) in self.unknown_frames.iter().enumerate() {
            out.frame_mut(f)
                .copy_from_slice(&x.as_slice()[k * self.frame_len..(k + 1) * self.frame_len]);
        }
        Ok(out)
    }
}

/// Joint covariance of all `frames * frame_len` coordinates, frame-major.
fn joint_covariance(config: &GaussianVideoConfig) -> DMatrix<f64> {
    let d = config.shape.frame_len();
    let n = config.shape.frames * d;
    DMatrix::from_fn(n, n, |a, b| {
        if a % d == b % d {
            config.temporal_covariance(a / d, b / d)
        } else {
            0.0
        }
    })
}

fn coords(frames: &[usize], d: usize) -> Vec<usize> {
    frames.iter().flat_map(|&f| f * d..(f + 1) * d).collect()
}

/// Exact law of the unknown frames of an AR(1) video given its conditioning
/// frames (read from `x0_cond`).
pub fn ar1_conditional(
    config: &GaussianVideoConfig,
    mask: &MaskSpec,
    x0_cond: &VideoTensor,
) -> Result<GaussianConditional> {
    config.validate()?;
    ensure!(
        x0_cond.shape() == config.shape && mask.len() == config.shape.frames,
        Shape,
        "conditioning video {} / mask over {} frames do not match process {}",
        x0_cond.shape(),
        mask.len(),
        config.shape
    );
    ensure!(
        !mask.unknown().is_empty(),
        InvalidArgument,
        "mask observes every frame; there is nothing to condition"
    );
    let d = config.shape.frame_len();
    let joint = joint_covariance(config);
    let u = coords(mask.unknown(), d);
    let c = coords(mask.conditioning(), d);
    let s_uu = joint.select_rows(&u).select_columns(&u);
    if c.is_empty() {
        return Ok(GaussianConditional {
            mean: DVector::zeros(u.len()),
            cov: s_uu,
            unknown_frames: mask.unknown().to_vec(),
            frame_len: d,
        });
    }
    let s_uc = joint.select_rows(&u).select_columns(&c);
    let s_cc = joint.select_rows(&c).select_columns(&c);
    let chol = s_cc.cholesky().ok_or_else(|| {
        Error::Numerical("conditioning covariance is singular (scale 0?)".into())
    })?;
    let x_c = DVector::from_iterator(
        c.len(),
        mask.conditioning()
            .iter()
            .flat_map(|&f| x0_cond.frame(f).iter().copied()),
    );
    let mean = &s_uc * chol.solve(&x_c);
    let gain = chol.solve(&s_uc.transpose());
    let mut cov = s_uu - &s_uc * gain;
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianConditional {
        mean,
        cov,
        unknown_frames: mask.unknown().to_vec(),
        frame_len: d,
    })
}

/// Exact noise predictor for i.i.d. `N(0, scale^2)` video data:
/// `eps* = std * x_t / (mean_coeff^2 * scale^2 + std^2)`, elementwise.
#[derive(Clone, Debug)]
pub struct IidGaussianEps {
    shape: VideoShape,
    scale: f64,
    schedule: NoiseSchedule,
}

impl IidGaussianEps {
    pub fn new(shape: VideoShape, scale: f64, schedule: NoiseSchedule) -> Self {
        Self {
            shape,
            scale,
            schedule,
        }
    }

    pub fn gain(&self, t: usize) -> f64 {
        let (a, s) = self.schedule.marginal_unchecked(t);
        let var = a * a * self.scale * self.scale + s * s;
        if var == 0.0 {
            0.0
        } else {
            s / var
        }
    }
}

impl ScoreModel for IidGaussianEps {
    fn shape(&self) -> VideoShape {
        self.shape
    }

    fn predict(&self, xt: &VideoTensor, t: usize) -> Result<VideoTensor> {
        check_spatial(self.shape, xt)?;
        self.schedule.check_step(t)?;
        let g = self.gain(t);
        let mut out = xt.clone();
        out.as_mut_slice().iter_mut().for_each(|v| *v *= g);
        Ok(out)
    }

    fn parameters(&self) -> &[f64] {
        &[]
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        ensure!(params.is_empty(), Shape, "analytic model has no parameters");
        Ok(())
    }

    fn gradient(&self, _xt: &VideoTensor, _t: usize, _up: &VideoTensor) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
}

/// Exact noise predictor for AR(1) video under one fixed mask: the posterior
/// mean of the unknown-frame noise given noisy unknown frames and clean
/// conditioning frames. Outputs zero on conditioning frames.
#[derive(Clone, Debug)]
pub struct Ar1ConditionalEps {
    shape: VideoShape,
    mask: MaskSpec,
    schedule: NoiseSchedule,
    /// Per step, maps the temporal vector (unknown frames then conditioning
    /// frames) of one pixel to the unknown-frame noise of that pixel.
    weights: Vec<DMatrix<f64>>,
}

impl Ar1ConditionalEps {
    pub fn new(config: &GaussianVideoConfig, mask: MaskSpec, schedule: NoiseSchedule) -> Result<Self> {
        config.validate()?;
        ensure!(
            mask.len() == config.shape.frames,
            Shape,
            "mask over {} frames for a process of {} frames",
            mask.len(),
            config.shape.frames
        );
        ensure!(config.scale > 0.0, InvalidArgument, "scale must be positive");
        let order: Vec<usize> = mask
            .unknown()
            .iter()
            .chain(mask.conditioning())
            .copied()
            .collect();
        let nu = mask.unknown().len();
        let l = order.len();
        let sigma = DMatrix::from_fn(l, l, |i, j| config.temporal_covariance(order[i], order[j]));
        let mut weights = Vec::with_capacity(schedule.steps() + 1);
        for t in 0..=schedule.steps() {
            let (a, s) = schedule.marginal_unchecked(t);
            if s == 0.0 {
                weights.push(DMatrix::zeros(nu, l));
                continue;
            }
            let cov_y = DMatrix::from_fn(l, l, |i, j| {
                let scale = match (i < nu, j < nu) {
                    (true, true) => a * a,
                    (false, false) => 1.0,
                    _ => a,
                };
                let noise = if i == j && i < nu { s * s } else { 0.0 };
                scale * sigma[(i, j)] + noise
            });
            let cross = DMatrix::from_fn(nu, l, |i, j| if i == j { s } else { 0.0 });
            let chol = cov_y
                .cholesky()
                .ok_or_else(|| Error::Numerical(format!("singular covariance at step {t}")))?;
            // W = cross * cov_y^{-1}  <=>  W^T = cov_y^{-1} * cross^T
            weights.push(chol.solve(&cross.transpose()).transpose());
        }
        Ok(Self {
            shape: config.shape,
            mask,
            schedule,
            weights,
        })
    }
}

impl ScoreModel for Ar1ConditionalEps {
    fn shape(&self) -> VideoShape {
        self.shape
    }

    fn predict(&self, xt: &VideoTensor, t: usize) -> Result<VideoTensor> {
        ensure!(
            xt.shape() == self.shape,
            Shape,
            "expected {}, got {}",
            self.shape,
            xt.shape()
        );
        self.schedule.check_step(t)?;
        let w = &self.weights[t];
        let order: Vec<usize> = self
            .mask
            .unknown()
            .iter()
            .chain(self.mask.conditioning())
            .copied()
            .collect();
        let mut out = VideoTensor::zeros(self.shape);
        let mut y = DVector::zeros(order.len());
        for p in 0..self.shape.frame_len() {
            for (k, &f) in order.iter().enumerate() {
                y[k] = xt.frame(f)[p];
            }
            let eps = w * &y;
            for (k, &f) in self.mask.unknown().iter().enumerate() {
                out.frame_mut(f)[p] = eps[k];
            }
        }
        Ok(out)
    }

    fn parameters(&self) -> &[f64] {
        &[]
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        ensure!(params.is_empty(), Shape, "analytic model has no parameters");
        Ok(())
    }

    fn gradient(&self, _xt: &VideoTensor, _t: usize, _up: &VideoTensor) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> GaussianVideoConfig {
        GaussianVideoConfig {
            shape: VideoShape::new(6, 1, 2, 1).unwrap(),
            rho: 0.8,
            scale: 0.7,
        }
    }

    /// Independent route: the AR(1) precision matrix is tridiagonal, and the
    /// conditional of U given C is N(-Q_UU^{-1} Q_UC x_C, Q_UU^{-1}).
    fn tridiagonal_route(cfg: &GaussianVideoConfig, cond: &[usize], x_c: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let l = cfg.shape.frames;
        let r = cfg.rho;
        let k = 1.0 / (cfg.scale * cfg.scale * (1.0 - r * r));
        let q = DMatrix::from_fn(l, l, |i, j| {
            if i == j {
                if i == 0 || i == l - 1 { k } else { k * (1.0 + r * r) }
            } else if i.abs_diff(j) == 1 {
                -k * r
            } else {
                0.0
            }
        });
        let u: Vec<usize> = (0..l).filter(|i| !cond.contains(i)).collect();
        let q_uu = q.select_rows(&u).select_columns(&u);
        let q_uc = q.select_rows(&u).select_columns(cond);
        let cov = q_uu.try_inverse().unwrap();
        let mean = -&cov * q_uc * DVector::from_column_slice(x_c);
        (mean.as_slice().to_vec(), cov)
    }

    #[test]
    fn dense_conditioning_matches_tridiagonal_precision() {
        let cfg = GaussianVideoConfig {
            shape: VideoShape::new(6, 1, 1, 1).unwrap(),
            ..config()
        };
        let mut x = VideoTensor::zeros(cfg.shape);
        x.as_mut_slice().copy_from_slice(&[0.9, -0.3, 0.0, 0.4, 1.2, -0.6]);
        for cond in [vec![0], vec![0, 5], vec![1, 3], vec![]] {
            let mask = MaskSpec::new(6, cond.clone()).unwrap();
            let dense = ar1_conditional(&cfg, &mask, &x).unwrap();
            let x_c: Vec<f64> = cond.iter().map(|&f| x.frame(f)[0]).collect();
            let (mean, cov) = tridiagonal_route(&cfg, &cond, &x_c);
            for (a, b) in dense.mean.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-10, "{cond:?}");
            }
            assert!((&dense.cov - cov).norm() < 1e-10, "{cond:?}");
        }
    }

    #[test]
    fn pixels_are_independent() {
        let cfg = config();
        let mask = MaskSpec::new(6, [2]).unwrap();
        let g = ar1_conditional(&cfg, &mask, &VideoTensor::filled(cfg.shape, 0.5)).unwrap();
        assert_eq!(g.cov.nrows(), 5 * 2);
        for a in 0..10 {
            for b in 0..10 {
                if a % 2 != b % 2 {
                    assert_eq!(g.cov[(a, b)], 0.0);
                }
            }
        }
    }

    #[test]
    fn full_mask_is_rejected() {
        let cfg = config();
        let mask = MaskSpec::new(6, 0..6).unwrap();
        assert!(ar1_conditional(&cfg, &mask, &VideoTensor::zeros(cfg.shape)).is_err());
    }

    #[test]
    fn conditional_eps_reduces_to_iid_formula_when_uncorrelated() {
        let cfg = GaussianVideoConfig {
            rho: 0.0,
            ..config()
        };
        let schedule = NoiseSchedule::linear(20).unwrap();
        let mask = MaskSpec::new(6, [0, 3]).unwrap();
        let exact = Ar1ConditionalEps::new(&cfg, mask.clone(), schedule.clone()).unwrap();
        let iid = IidGaussianEps::new(cfg.shape, cfg.scale, schedule);
        let mut x = VideoTensor::zeros(cfg.shape);
        for (i, v) in x.as_mut_slice().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        let a = exact.predict(&x, 13).unwrap();
        let b = iid.predict(&x, 13).unwrap();
        for &f in mask.unknown() {
            for (p, q) in a.frame(f).iter().zip(b.frame(f)) {
                assert!((p - q).abs() < 1e-12);
            }
        }
        assert!(a.frame(0).iter().all(|&v| v == 0.0));
    }
}
