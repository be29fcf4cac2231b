//! Video tensors and batches.
//!
//! A video is stored row-major as `(frame, row, col, channel)`, so each frame
//! is one contiguous slice of `height * width * channels` values.

use std::fmt;

use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VideoShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl VideoShape {
    pub fn new(frames: usize, height: usize, width: usize, channels: usize) -> Result<Self> {
        ensure!(
            frames >= 1 && height >= 1 && width >= 1 && channels >= 1,
            InvalidArgument,
            "video dimensions must be positive, got ({frames}, {height}, {width}, {channels})"
        );
        Ok(Self {
            frames,
            height,
            width,
            channels,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn len(&self) -> usize {
        self.frames * self.frame_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same spatial layout, different frame count.
    pub fn with_frames(&self, frames: usize) -> Self {
        Self { frames, ..*self }
    }
}

impl fmt::Display for VideoShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.frames, self.height, self.width, self.channels
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor {
    shape: VideoShape,
    data: Vec<f64>,
}

impl VideoTensor {
    pub fn zeros(shape: VideoShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: VideoShape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: VideoShape, data: Vec<f64>) -> Result<Self> {
        ensure!(
            data.len() == shape.len(),
            Shape,
            "{} values do not fill shape {shape}",
            data.len()
        );
        Ok(Self { shape, data })
    }

    /// Concatenate frames (all with the same spatial layout) into one video.
    pub fn from_frames<'a>(
        frame_shape: VideoShape,
        frames: impl IntoIterator<Item = &'a [f64]>,
    ) -> Result<Self> {
        let mut data = Vec::new();
        let mut count = 0;
        for frame in frames {
            ensure!(
                frame.len() == frame_shape.frame_len(),
                Shape,
                "frame of {} values, expected {}",
                frame.len(),
                frame_shape.frame_len()
            );
            data.extend_from_slice(frame);
            count += 1;
        }
        ensure!(count >= 1, InvalidArgument, "a video needs at least one frame");
        Ok(Self {
            shape: frame_shape.with_frames(count),
            data,
        })
    }

    pub fn shape(&self) -> VideoShape {
        self.shape
    }

    pub fn frames(&self) -> usize {
        self.shape.frames
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.shape.frame_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.shape.frame_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn get(&self, frame: usize, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.offset(frame, row, col, channel)]
    }

    pub fn set(&mut self, frame: usize, row: usize, col: usize, channel: usize, value: f64) {
        let i = self.offset(frame, row, col, channel);
        self.data[i] = value;
    }

    fn offset(&self, frame: usize, row: usize, col: usize, channel: usize) -> usize {
        let s = &self.shape;
        ((frame * s.height + row) * s.width + col) * s.channels + channel
    }

    /// Frames `start..start + len` as a new video.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        ensure!(
            len >= 1 && start + len <= self.frames(),
            InvalidArgument,
            "frame window {start}..{} outside video of {} frames",
            start + len,
            self.frames()
        );
        let n = self.shape.frame_len();
        Ok(Self {
            shape: self.shape.with_frames(len),
            data: self.data[start * n..(start + len) * n].to_vec(),
        })
    }

    pub fn ensure_same_shape(&self, other: &VideoTensor, what: &str) -> Result<()> {
        ensure!(
            self.shape == other.shape,
            Shape,
            "{what}: {} vs {}",
            self.shape,
            other.shape
        );
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoBatch {
    items: Vec<VideoTensor>,
}

impl VideoBatch {
    pub fn new(items: Vec<VideoTensor>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("a batch needs at least one video".into()))?;
        let shape = first.shape();
        for (i, item) in items.iter().enumerate() {
            ensure!(
                item.shape() == shape,
                Shape,
                "batch item {i} has shape {}, expected {shape}",
                item.shape()
            );
        }
        Ok(Self { items })
    }

    pub fn shape(&self) -> VideoShape {
        self.items[0].shape()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[VideoTensor] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, VideoTensor> {
        self.items.iter()
    }

    pub fn into_items(self) -> Vec<VideoTensor> {
        self.items
    }
}

impl<'a> IntoIterator for &'a VideoBatch {
    type Item = &'a VideoTensor;
    type IntoIter = std::slice::Iter<'a, VideoTensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}
