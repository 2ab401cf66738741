//! The trainable convolutional feature extractors: forward pass with
//! intermediate feature-map taps, hand-derived backward pass, and the
//! rotation-prediction head.

pub mod layers;
mod model;

pub use model::{
    images_to_tensor, EncoderForward, RotForward, ConvBlock, Encoder, EncoderConfig,
    EncoderGrads, GradSource, RotGrads, RotHead,
};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Single-image feature map: `channels x height x width`, row-major.
///
/// `U = height * width` spatial positions, each holding a `channels`-long
/// vector that quantization treats independently.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<FeatureMap> {
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        Ok(FeatureMap {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    /// The `channels`-long vector at spatial position `(y, x)`.
    pub fn at(&self, y: usize, x: usize) -> Vec<f32> {
        let hw = self.height * self.width;
        let off = y * self.width + x;
        (0..self.channels).map(|c| self.values[c * hw + off]).collect()
    }

    /// Copy position `(y, x)` into `out` without allocating.
    pub fn read_position(&self, y: usize, x: usize, out: &mut [f32]) {
        let hw = self.height * self.width;
        let off = y * self.width + x;
        for (c, dst) in out.iter_mut().enumerate() {
            *dst = self.values[c * hw + off];
        }
    }

    /// Item `b` of a batched `[B, C, H, W]` activation tensor.
    pub fn from_batch(batch: &Tensor, b: usize) -> Result<FeatureMap> {
        if batch.rank() != 4 {
            return Err(Error::Shape(format!(
                "expected [B,C,H,W], got {:?}",
                batch.shape()
            )));
        }
        let s = batch.shape();
        let (c, h, w) = (s[1], s[2], s[3]);
        let stride = c * h * w;
        FeatureMap::new(c, h, w, batch.data()[b * stride..(b + 1) * stride].to_vec())
    }
}
