//! Random-mask video diffusion at toy scale.
//!
//! Videos are diffused only on a random subset of "unknown" frames while the
//! remaining "conditioning" frames stay clean, so a single noise-prediction
//! model learns unconditional generation, prediction, infilling and
//! upsampling at once. This crate provides the masked training objective,
//! conditional ancestral sampling, synthetic video sources with exactly
//! computable conditionals, and the metrics used to check all of it.

// Negated comparisons are how NaN gets rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bytes;
pub mod config;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod masking;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sampling;
pub mod schedule;
pub mod training;
pub mod video;

pub use error::{Error, Result};
pub use masking::{compose, corrupt, sample_mask, MaskPolicy, MaskSpec};
pub use model::{ScoreModel, TrainableModel};
pub use rng::RandomStream;
pub use schedule::{NoiseSchedule, ScheduleKind};
pub use video::{VideoBatch, VideoShape, VideoTensor};
