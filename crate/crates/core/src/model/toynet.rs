//! A stack of spatiotemporal convolutions used as the noise predictor.
//!
//! ```text
//! h_0 = x_t
//! h_k = silu(conv3d_k(h_{k-1}) + b_k + W_k * embed(t))    k = 1 .. n-1
//! out = conv3d_n(h_{n-1}) + b_n
//! ```
//!
//! Every convolution has a 3x3x3 kernel over (frame, row, col) with zero
//! padding, so the output has the input's shape. Layer `k` may be dilated in
//! time by `d_k`; an output frame then sees `sum(d_k)` frames either side.
//! The default is two undilated layers. There is no per-frame position or
//! noise-level channel: whether a frame is clean or noisy must be read off
//! its content.

use crate::error::{ensure, Result};
use crate::model::ScoreModel;
use crate::rng::RandomStream;
use crate::video::{VideoShape, VideoTensor};

pub const TIME_EMBED_DIM: usize = 16;
const KERNEL_TAPS: usize = 27;
/// Upper bound on voxels per video accepted by the network.
pub(crate) const MAX_VOXELS: usize = 1 << 22;
pub const MAX_LAYERS: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToyVideoNetConfig {
    pub shape: VideoShape,
    pub hidden: usize,
    /// Diffusion step count `T`, used to rescale `t` before embedding.
    pub steps: usize,
    /// Temporal dilation of each convolution, input to output.
    pub dilations: Vec<usize>,
}

impl ToyVideoNetConfig {
    pub fn new(shape: VideoShape, steps: usize) -> Self {
        Self {
            shape,
            hidden: 8,
            steps,
            dilations: vec![1, 1],
        }
    }

    pub fn with_hidden(self, hidden: usize) -> Self {
        Self { hidden, ..self }
    }

    pub fn with_dilations(self, dilations: Vec<usize>) -> Self {
        Self { dilations, ..self }
    }

    pub fn layers(&self) -> usize {
        self.dilations.len()
    }

    /// Frames visible to each output frame on either side.
    pub fn temporal_reach(&self) -> usize {
        self.dilations.iter().sum()
    }

    fn widths(&self, layer: usize) -> (usize, usize) {
        let (c, h, n) = (self.shape.channels, self.hidden, self.layers());
        let input = if layer == 0 { c } else { h };
        let output = if layer + 1 == n { c } else { h };
        (input, output)
    }

    pub fn parameter_count(&self) -> usize {
        (0..self.layers())
            .map(|k| {
                let (i, o) = self.widths(k);
                let time = if k + 1 < self.layers() { o * TIME_EMBED_DIM } else { 0 };
                KERNEL_TAPS * o * i + o + time
            })
            .sum()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        ensure!(self.hidden >= 1, InvalidArgument, "hidden width must be positive");
        ensure!(self.steps >= 1, InvalidArgument, "T must be positive");
        ensure!(
            (2..=MAX_LAYERS).contains(&self.layers()),
            InvalidArgument,
            "toy network needs 2..={MAX_LAYERS} layers, got {}",
            self.layers()
        );
        ensure!(
            self.dilations.iter().all(|&d| d >= 1 && d <= self.shape.frames.max(1)),
            InvalidArgument,
            "dilations {:?} must lie in 1..={}",
            self.dilations,
            self.shape.frames
        );
        let voxels = self
            .shape
            .frames
            .checked_mul(self.shape.height)
            .and_then(|v| v.checked_mul(self.shape.width));
        ensure!(
            matches!(voxels, Some(v) if v <= MAX_VOXELS),
            InvalidArgument,
            "video {} too large for the toy network",
            self.shape
        );
        Ok(())
    }
}

/// Offsets of one layer's parameter blocks inside the flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerLayout {
    input: usize,
    output: usize,
    w: usize,
    b: usize,
    /// Time projection, present on hidden layers only.
    wt: Option<usize>,
}

fn layouts(cfg: &ToyVideoNetConfig) -> Vec<LayerLayout> {
    let mut at = 0;
    (0..cfg.layers())
        .map(|k| {
            let (input, output) = cfg.widths(k);
            let w = at;
            let b = w + KERNEL_TAPS * output * input;
            at = b + output;
            let wt = (k + 1 < cfg.layers()).then(|| {
                let wt = at;
                at += output * TIME_EMBED_DIM;
                wt
            });
            LayerLayout { input, output, w, b, wt }
        })
        .collect()
}

/// One in-bounds kernel tap: `out[dst] += W[tap] * in[src]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Tap {
    tap: u32,
    src: u32,
    dst: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyVideoNet {
    config: ToyVideoNetConfig,
    layers: Vec<LayerLayout>,
    taps: Vec<Vec<Tap>>,
    params: Vec<f64>,
}

struct Activations {
    embed: [f64; TIME_EMBED_DIM],
    /// Pre-activations and outputs of the hidden layers.
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn conv_forward(taps: &[Tap], w: &[f64], input: &[f64], ci: usize, out: &mut [f64], co: usize) {
    for tap in taps {
        let w = &w[tap.tap as usize * co * ci..(tap.tap as usize + 1) * co * ci];
        let src = &input[tap.src as usize * ci..(tap.src as usize + 1) * ci];
        let dst = &mut out[tap.dst as usize * co..(tap.dst as usize + 1) * co];
        for (j, d) in dst.iter_mut().enumerate() {
            let row = &w[j * ci..(j + 1) * ci];
            *d += row.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Accumulates the weight gradient into `gw` and, if given, the input
/// gradient into `d_in`.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    taps: &[Tap],
    w: &[f64],
    input: &[f64],
    ci: usize,
    d_out: &[f64],
    co: usize,
    gw: &mut [f64],
    mut d_in: Option<&mut [f64]>,
) {
    for tap in taps {
        let base = tap.tap as usize * co * ci;
        let up = &d_out[tap.dst as usize * co..(tap.dst as usize + 1) * co];
        let src = &input[tap.src as usize * ci..(tap.src as usize + 1) * ci];
        for (o, &u) in up.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            let row = base + o * ci;
            for (g, &s) in gw[row..row + ci].iter_mut().zip(src) {
                *g += u * s;
            }
            if let Some(d) = d_in.as_deref_mut() {
                let dsrc = &mut d[tap.src as usize * ci..(tap.src as usize + 1) * ci];
                for (ds, &wv) in dsrc.iter_mut().zip(&w[row..row + ci]) {
                    *ds += u * wv;
                }
            }
        }
    }
}

impl ToyVideoNet {
    /// Randomly initialised network (fan-in scaled normal weights, zero biases).
    pub fn new(config: ToyVideoNetConfig, rng: &mut RandomStream) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let scale_t = 1.0 / (TIME_EMBED_DIM as f64).sqrt();
        for l in net.layers.clone() {
            let scale = 1.0 / ((KERNEL_TAPS * l.input) as f64).sqrt();
            for v in &mut net.params[l.w..l.b] {
                *v = rng.normal() * scale;
            }
            if let Some(wt) = l.wt {
                for v in &mut net.params[wt..wt + l.output * TIME_EMBED_DIM] {
                    *v = rng.normal() * scale_t;
                }
            }
        }
        Ok(net)
    }

    pub fn zeros(config: ToyVideoNetConfig) -> Result<Self> {
        config.validate()?;
        let layers = layouts(&config);
        let taps = config
            .dilations
            .iter()
            .map(|&d| build_taps(config.shape, d))
            .collect();
        Ok(Self {
            params: vec![0.0; config.parameter_count()],
            config,
            layers,
            taps,
        })
    }

    pub fn config(&self) -> &ToyVideoNetConfig {
        &self.config
    }

    /// Sinusoidal embedding of `t` rescaled to a 1000-step clock.
    pub fn time_embedding(&self, t: usize) -> [f64; TIME_EMBED_DIM] {
        let pos = t as f64 * 1000.0 / self.config.steps as f64;
        let half = TIME_EMBED_DIM / 2;
        let mut out = [0.0; TIME_EMBED_DIM];
        for k in 0..half {
            let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
            out[k] = (pos * freq).sin();
            out[half + k] = (pos * freq).cos();
        }
        out
    }

    fn check(&self, xt: &VideoTensor, t: usize) -> Result<()> {
        ensure!(
            xt.shape() == self.config.shape,
            Shape,
            "toy network configured for {}, got {}",
            self.config.shape,
            xt.shape()
        );
        ensure!(
            t <= self.config.steps,
            InvalidArgument,
            "step {t} outside 0..={}",
            self.config.steps
        );
        Ok(())
    }

    fn forward(&self, xt: &VideoTensor, t: usize) -> (VideoTensor, Activations) {
        let p = &self.params;
        let voxels = self.config.shape.len() / self.config.shape.channels;
        let embed = self.time_embedding(t);
        let n = self.layers.len();
        let mut pre_all = Vec::with_capacity(n - 1);
        let mut post_all: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
        let mut out = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            let mut bias = p[l.b..l.b + l.output].to_vec();
            if let Some(wt) = l.wt {
                for (j, b) in bias.iter_mut().enumerate() {
                    let row = &p[wt + j * TIME_EMBED_DIM..wt + (j + 1) * TIME_EMBED_DIM];
                    *b += row.iter().zip(&embed).map(|(w, e)| w * e).sum::<f64>();
                }
            }
            let mut z = Vec::with_capacity(voxels * l.output);
            for _ in 0..voxels {
                z.extend_from_slice(&bias);
            }
            let input = if k == 0 { xt.as_slice() } else { &post_all[k - 1] };
            conv_forward(&self.taps[k], &p[l.w..l.b], input, l.input, &mut z, l.output);
            if k + 1 < n {
                post_all.push(z.iter().map(|&v| v * sigmoid(v)).collect());
                pre_all.push(z);
            } else {
                out = z;
            }
        }
        let out = VideoTensor::from_vec(xt.shape(), out).expect("output matches input shape");
        let acts = Activations {
            embed,
            pre: pre_all,
            post: post_all,
        };
        (out, acts)
    }

    fn backward(&self, xt: &VideoTensor, acts: &Activations, upstream: &VideoTensor) -> Vec<f64> {
        let p = &self.params;
        let mut grad = vec![0.0; p.len()];
        let mut d_out = upstream.as_slice().to_vec();
        for k in (0..self.layers.len()).rev() {
            let l = self.layers[k];
            if let Some(wt) = l.wt {
                // d_out currently holds the gradient of this layer's output;
                // push it through the nonlinearity.
                for (d, &z) in d_out.iter_mut().zip(&acts.pre[k]) {
                    let s = sigmoid(z);
                    *d *= s * (1.0 + z * (1.0 - s));
                }
                let mut d_bias = vec![0.0; l.output];
                for chunk in d_out.chunks_exact(l.output) {
                    for (db, &d) in d_bias.iter_mut().zip(chunk) {
                        *db += d;
                    }
                }
                for (j, &db) in d_bias.iter().enumerate() {
                    let row = &mut grad[wt + j * TIME_EMBED_DIM..wt + (j + 1) * TIME_EMBED_DIM];
                    for (g, &e) in row.iter_mut().zip(&acts.embed) {
                        *g = db * e;
                    }
                }
                grad[l.b..l.b + l.output].copy_from_slice(&d_bias);
            } else {
                for (o, gb) in grad[l.b..l.b + l.output].iter_mut().enumerate() {
                    *gb = d_out.iter().skip(o).step_by(l.output).sum();
                }
            }
            let input = if k == 0 { xt.as_slice() } else { &acts.post[k - 1] };
            let mut d_in = (k > 0).then(|| vec![0.0; input.len()]);
            conv_backward(
                &self.taps[k],
                &p[l.w..l.b],
                input,
                l.input,
                &d_out,
                l.output,
                &mut grad[l.w..l.b],
                d_in.as_deref_mut(),
            );
            if let Some(d) = d_in {
                d_out = d;
            }
        }
        grad
    }
}

fn build_taps(shape: VideoShape, dilation: usize) -> Vec<Tap> {
    let (nl, nh, nw) = (
        shape.frames as isize,
        shape.height as isize,
        shape.width as isize,
    );
    let dilation = dilation as isize;
    let mut taps = Vec::new();
    for l in 0..nl {
        for r in 0..nh {
            for c in 0..nw {
                let dst = ((l * nh + r) * nw + c) as u32;
                for (tap, (dl, dr, dc)) in offsets().enumerate() {
                    let (sl, sr, sc) = (l + dl * dilation, r + dr, c + dc);
                    if (0..nl).contains(&sl) && (0..nh).contains(&sr) && (0..nw).contains(&sc) {
                        let src = ((sl * nh + sr) * nw + sc) as u32;
                        taps.push(Tap {
                            tap: tap as u32,
                            src,
                            dst,
                        });
                    }
                }
            }
        }
    }
    taps
}

fn offsets() -> impl Iterator<Item = (isize, isize, isize)> {
    (0..KERNEL_TAPS as isize).map(|k| (k / 9 - 1, (k / 3) % 3 - 1, k % 3 - 1))
}

impl ScoreModel for ToyVideoNet {
    fn shape(&self) -> VideoShape {
        self.config.shape
    }

    fn predict(&self, xt: &VideoTensor, t: usize) -> Result<VideoTensor> {
        self.check(xt, t)?;
        Ok(self.forward(xt, t).0)
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
        let (_, acts) = self.forward(xt, t);
        Ok(self.backward(xt, &acts, upstream))
    }

    fn predict_with_gradient(
        &self,
        xt: &VideoTensor,
        t: usize,
        upstream_of: &mut dyn FnMut(&VideoTensor) -> Result<VideoTensor>,
    ) -> Result<(VideoTensor, Vec<f64>)> {
        self.check(xt, t)?;
        let (out, acts) = self.forward(xt, t);
        let upstream = upstream_of(&out)?;
        out.ensure_same_shape(&upstream, "upstream gradient")?;
        let grad = self.backward(xt, &acts, &upstream);
        Ok((out, grad))
    }
}
