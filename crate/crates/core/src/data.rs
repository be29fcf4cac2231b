//! Synthetic video sources: bouncing shapes, a stationary Gaussian AR(1)
//! process whose conditionals are known exactly, and random sub-sequence
//! selection.

use crate::error::{ensure, Result};
use crate::rng::RandomStream;
use crate::video::{VideoBatch, VideoShape, VideoTensor};

const BACKGROUND: f64 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Square,
    Disc,
}

/// One moving shape. `position` is the top-left corner of its bounding box
/// as `(row, col)`; `velocity` is in pixels per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Sprite {
    pub kind: ShapeKind,
    pub size: usize,
    pub position: (f64, f64),
    pub velocity: (f64, f64),
    /// Intensity per channel.
    pub color: Vec<f64>,
}

impl Sprite {
    /// Pixel offsets covered inside the bounding box.
    pub fn footprint(&self) -> Vec<(usize, usize)> {
        let r = self.size as f64 / 2.0;
        (0..self.size)
            .flat_map(|i| (0..self.size).map(move |j| (i, j)))
            .filter(|&(i, j)| match self.kind {
                ShapeKind::Square => true,
                ShapeKind::Disc => {
                    let (di, dj) = (i as f64 + 0.5 - r, j as f64 + 0.5 - r);
                    di * di + dj * dj <= r * r
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSceneConfig {
    pub shape: VideoShape,
    pub num_shapes: usize,
    pub size: usize,
    pub max_speed: f64,
    pub bounce: bool,
    pub seed: u64,
}

/// Advance one coordinate, reflecting off `[0, max]` or wrapping around it.
fn step_coord(pos: f64, vel: f64, max: f64, bounce: bool) -> (f64, f64) {
    let mut p = pos + vel;
    let mut v = vel;
    if max <= 0.0 {
        return (0.0, v);
    }
    if bounce {
        while p < 0.0 || p > max {
            if p < 0.0 {
                p = -p;
            } else {
                p = 2.0 * max - p;
            }
            v = -v;
        }
    } else {
        p = p.rem_euclid(max + 1.0);
    }
    (p, v)
}

/// Render sprites over `shape.frames` frames, advancing them after each frame.
pub fn render_scene(shape: VideoShape, sprites: &[Sprite], bounce: bool) -> Result<VideoTensor> {
    for s in sprites {
        ensure!(
            s.size >= 1 && s.size <= shape.height && s.size <= shape.width,
            InvalidArgument,
            "shape of size {} does not fit a {}x{} frame",
            s.size,
            shape.height,
            shape.width
        );
        ensure!(
            s.color.len() == shape.channels,
            InvalidArgument,
            "sprite colour has {} channels, video has {}",
            s.color.len(),
            shape.channels
        );
    }
    let mut video = VideoTensor::filled(shape, BACKGROUND);
    let mut state: Vec<((f64, f64), (f64, f64))> =
        sprites.iter().map(|s| (s.position, s.velocity)).collect();
    let footprints: Vec<_> = sprites.iter().map(Sprite::footprint).collect();
    for f in 0..shape.frames {
        for ((sprite, fp), &((row, col), _)) in sprites.iter().zip(&footprints).zip(&state) {
            let max_r = (shape.height - sprite.size) as isize;
            let max_c = (shape.width - sprite.size) as isize;
            let r0 = (row.round() as isize).clamp(0, max_r) as usize;
            let c0 = (col.round() as isize).clamp(0, max_c) as usize;
            for &(i, j) in fp {
                for (ch, &v) in sprite.color.iter().enumerate() {
                    video.set(f, r0 + i, c0 + j, ch, v);
                }
            }
        }
        for (sprite, ((row, col), (vr, vc))) in sprites.iter().zip(state.iter_mut()) {
            let max_r = (shape.height - sprite.size) as f64;
            let max_c = (shape.width - sprite.size) as f64;
            let (r, nvr) = step_coord(*row, *vr, max_r, bounce);
            let (c, nvc) = step_coord(*col, *vc, max_c, bounce);
            *row = r;
            *col = c;
            *vr = nvr;
            *vc = nvc;
        }
    }
    Ok(video)
}

/// `n` videos of constant-velocity squares and discs on a dark background.
/// Values lie in `[-1, 1]`; the output depends only on `config`.
pub fn generate_shapes(config: &ShapeSceneConfig, n: usize) -> Result<VideoBatch> {
    let shape = config.shape;
    ensure!(
        config.size >= 1 && config.size <= shape.height && config.size <= shape.width,
        InvalidArgument,
        "shape of size {} does not fit a {}x{} frame",
        config.size,
        shape.height,
        shape.width
    );
    ensure!(
        config.max_speed >= 0.0 && config.max_speed.is_finite(),
        InvalidArgument,
        "max speed must be finite and non-negative"
    );
    let mut rng = RandomStream::from_seed(config.seed);
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let sprites: Vec<Sprite> = (0..config.num_shapes)
            .map(|_| {
                let kind = if rng.bernoulli(0.5) {
                    ShapeKind::Square
                } else {
                    ShapeKind::Disc
                };
                let max_r = (shape.height - config.size) as f64;
                let max_c = (shape.width - config.size) as f64;
                Sprite {
                    kind,
                    size: config.size,
                    position: (rng.uniform() * max_r, rng.uniform() * max_c),
                    velocity: (
                        (2.0 * rng.uniform() - 1.0) * config.max_speed,
                        (2.0 * rng.uniform() - 1.0) * config.max_speed,
                    ),
                    color: (0..shape.channels)
                        .map(|_| 0.2 + 0.8 * rng.uniform())
                        .collect(),
                }
            })
            .collect();
        items.push(render_scene(shape, &sprites, config.bounce)?);
    }
    VideoBatch::new(items)
}

/// Stationary Gaussian AR(1) video: every pixel follows
/// `x_{i+1} = rho * x_i + sqrt(1 - rho^2) * scale * eta` with
/// `x_0 ~ N(0, scale^2)`, independently of the other pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianVideoConfig {
    pub shape: VideoShape,
    pub rho: f64,
    pub scale: f64,
}

impl GaussianVideoConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            (0.0..1.0).contains(&self.rho),
            InvalidArgument,
            "rho must lie in [0, 1), got {}",
            self.rho
        );
        ensure!(
            self.scale >= 0.0 && self.scale.is_finite(),
            InvalidArgument,
            "scale must be finite and non-negative"
        );
        Ok(())
    }

    /// Covariance between frames `i` and `j` of a single pixel.
    pub fn temporal_covariance(&self, i: usize, j: usize) -> f64 {
        self.scale * self.scale * self.rho.powi(i.abs_diff(j) as i32)
    }
}

pub fn generate_gaussian_video(
    config: &GaussianVideoConfig,
    n: usize,
    rng: &mut RandomStream,
) -> Result<VideoBatch> {
    config.validate()?;
    let shape = config.shape;
    let innovation = (1.0 - config.rho * config.rho).sqrt() * config.scale;
    let items = (0..n)
        .map(|_| {
            let mut v = VideoTensor::zeros(shape);
            let d = shape.frame_len();
            let data = v.as_mut_slice();
            for x in &mut data[..d] {
                *x = config.scale * rng.normal();
            }
            for f in 1..shape.frames {
                let (prev, cur) = data[(f - 1) * d..(f + 1) * d].split_at_mut(d);
                for (c, &p) in cur.iter_mut().zip(prev.iter()) {
                    *c = config.rho * p + innovation * rng.normal();
                }
            }
            v
        })
        .collect();
    VideoBatch::new(items)
}

/// Contiguous window of `len` frames with a uniformly chosen start.
pub fn random_subsequence(
    video: &VideoTensor,
    len: usize,
    rng: &mut RandomStream,
) -> Result<VideoTensor> {
    ensure!(
        len >= 1 && len <= video.frames(),
        InvalidArgument,
        "cannot take {len} frames from a video of {}",
        video.frames()
    );
    let start = rng.uniform_int(0, video.frames() - len);
    video.slice_frames(start, len)
}
