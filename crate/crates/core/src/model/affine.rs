use crate::error::{ensure, Result};
use crate::model::{check_spatial, ScoreModel};
use crate::video::{VideoShape, VideoTensor};

/// Frame-wise affine noise predictor with one `(A, b)` pair per timestep
/// bucket: `eps_hat(frame) = A_{bucket(t)} * frame + b_{bucket(t)}`.
///
/// Buckets split `0..=T` into `buckets` contiguous ranges of (nearly) equal
/// size. Parameters are laid out bucket by bucket, `A` row-major then `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineScoreModel {
    shape: VideoShape,
    buckets: usize,
    steps: usize,
    params: Vec<f64>,
}

impl AffineScoreModel {
    pub fn zeros(shape: VideoShape, buckets: usize, steps: usize) -> Result<Self> {
        ensure!(
            buckets >= 1 && buckets <= steps + 1,
            InvalidArgument,
            "bucket count {buckets} must lie in 1..={}",
            steps + 1
        );
        let d = shape.frame_len();
        Ok(Self {
            shape,
            buckets,
            steps,
            params: vec![0.0; buckets * (d * d + d)],
        })
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn frame_dim(&self) -> usize {
        self.shape.frame_len()
    }

    pub fn bucket_of(&self, t: usize) -> usize {
        (t * self.buckets / (self.steps + 1)).min(self.buckets - 1)
    }

    /// Steps `t` with `bucket_of(t) == bucket`.
    pub fn bucket_steps(&self, bucket: usize) -> impl Iterator<Item = usize> + '_ {
        (0..=self.steps).filter(move |&t| self.bucket_of(t) == bucket)
    }

    fn bucket_len(&self) -> usize {
        let d = self.frame_dim();
        d * d + d
    }

    /// `(A, b)` of one bucket as slices.
    pub fn bucket_params(&self, bucket: usize) -> (&[f64], &[f64]) {
        let d = self.frame_dim();
        let start = bucket * self.bucket_len();
        let block = &self.params[start..start + self.bucket_len()];
        block.split_at(d * d)
    }

    pub fn bucket_params_mut(&mut self, bucket: usize) -> (&mut [f64], &mut [f64]) {
        let d = self.frame_dim();
        let start = bucket * self.bucket_len();
        let len = self.bucket_len();
        self.params[start..start + len].split_at_mut(d * d)
    }

    fn check(&self, xt: &VideoTensor, t: usize) -> Result<()> {
        check_spatial(self.shape, xt)?;
        ensure!(
            t <= self.steps,
            InvalidArgument,
            "step {t} outside 0..={}",
            self.steps
        );
        Ok(())
    }
}

impl ScoreModel for AffineScoreModel {
    fn shape(&self) -> VideoShape {
        self.shape
    }

    fn predict(&self, xt: &VideoTensor, t: usize) -> Result<VideoTensor> {
        self.check(xt, t)?;
        let d = self.frame_dim();
        let (a, b) = self.bucket_params(self.bucket_of(t));
        let mut out = VideoTensor::zeros(xt.shape());
        for f in 0..xt.frames() {
            let x = xt.frame(f);
            for (i, o) in out.frame_mut(f).iter_mut().enumerate() {
                let row = &a[i * d..(i + 1) * d];
                *o = b[i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
        }
        Ok(out)
    }

    fn parameters(&self) -> &[f64] {
        &self.params
    }

    fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        ensure!(
            params.len() == self.params.len(),
            Shape,
            "expected {} parameters, got {}",
            self.params.len(),
            params.len()
        );
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn gradient(&self, xt: &VideoTensor, t: usize, upstream: &VideoTensor) -> Result<Vec<f64>> {
        self.check(xt, t)?;
        xt.ensure_same_shape(upstream, "upstream gradient")?;
        let d = self.frame_dim();
        let bucket = self.bucket_of(t);
        let mut grad = vec![0.0; self.params.len()];
        let start = bucket * self.bucket_len();
        let (ga, gb) = grad[start..start + self.bucket_len()].split_at_mut(d * d);
        for f in 0..xt.frames() {
            let x = xt.frame(f);
            for (i, &u) in upstream.frame(f).iter().enumerate() {
                gb[i] += u;
                for (g, &v) in ga[i * d..(i + 1) * d].iter_mut().zip(x) {
                    *g += u * v;
                }
            }
        }
        Ok(grad)
    }
}
