//! Encoder architecture: conv 3x3 -> ReLU -> 2x2 average pool per block,
//! global average pooling at the top, plus the rotation-prediction head.

use serde::{Deserialize, Serialize};

use crate::data::{Checkpoint, Image};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

use super::layers::{
    avgpool2_backward, avgpool2_forward, conv3x3_backward, conv3x3_forward, global_avg_pool,
    global_avg_pool_backward, relu_backward, relu_forward,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Output channels per block; depth is the list length.
    pub channels: Vec<usize>,
    /// Block (0-based) whose post-ReLU, pre-pool map feeds BoW building.
    pub tap_layer: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: vec![32, 64, 128],
            tap_layer: 2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("encoder needs at least one block".into()));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("block channel counts must be positive".into()));
        }
        if self.tap_layer >= self.channels.len() {
            return Err(Error::Config(format!(
                "tap_layer {} out of range for {} blocks",
                self.tap_layer,
                self.channels.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub w: Tensor, // [cout, cin, 3, 3]
    pub b: Tensor, // [cout]
}

/// Convolutional feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub blocks: Vec<ConvBlock>,
    cfg: EncoderConfig,
}

/// He-normal conv weights (`std = sqrt(2 / fan_in)`), zero biases.
pub fn he_conv(cout: usize, cin: usize, rng: &mut Rng) -> ConvBlock {
    let fan_in = (cin * 9) as f32;
    let std = (2.0 / fan_in).sqrt();
    let n = cout * cin * 9;
    let data: Vec<f32> = (0..n).map(|_| rng.normal_f32() * std).collect();
    ConvBlock {
        w: Tensor::from_vec(&[cout, cin, 3, 3], data).expect("finite init"),
        b: Tensor::zeros(&[cout]),
    }
}

impl Encoder {
    pub fn new_random(cfg: &EncoderConfig, rng: &mut Rng) -> Result<Encoder> {
        cfg.validate()?;
        let mut blocks = Vec::with_capacity(cfg.channels.len());
        let mut cin = 3;
        for (i, &cout) in cfg.channels.iter().enumerate() {
            let mut block_rng = rng.split(i as u64);
            blocks.push(he_conv(cout, cin, &mut block_rng));
            cin = cout;
        }
        Ok(Encoder {
            blocks,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Dimension of the pooled representation (last block's channels).
    pub fn feature_dim(&self) -> usize {
        *self.cfg.channels.last().unwrap()
    }

    pub fn tap_layer(&self) -> usize {
        self.cfg.tap_layer
    }

    /// Channel count of the tap layer's map.
    pub fn tap_dim(&self) -> usize {
        self.cfg.channels[self.cfg.tap_layer]
    }

    /// Spatial side of the tap map for a given input side.
    pub fn tap_side(&self, input_size: usize) -> usize {
        input_size >> self.cfg.tap_layer
    }

    pub fn with_tap_layer(mut self, tap: usize) -> Result<Encoder> {
        if tap >= self.blocks.len() {
            return Err(Error::Config(format!(
                "tap_layer {tap} out of range for {} blocks",
                self.blocks.len()
            )));
        }
        self.cfg.tap_layer = tap;
        Ok(self)
    }

    /// Forward a `[B, 3, S, S]` batch, caching everything backward needs.
    pub fn forward(&self, images: &Tensor) -> Result<EncoderForward> {
        if images.rank() != 4 || images.shape()[1] != 3 {
            return Err(Error::Shape(format!(
                "encoder input must be [B,3,S,S], got {:?}",
                images.shape()
            )));
        }
        let size = images.shape()[2];
        if images.shape()[3] != size {
            return Err(Error::Shape("encoder input must be square".into()));
        }
        if size % (1 << self.blocks.len()) != 0 {
            return Err(Error::Shape(format!(
                "input side {size} not divisible by 2^{}",
                self.blocks.len()
            )));
        }
        let mut block_inputs = Vec::with_capacity(self.blocks.len());
        let mut conv_out = Vec::with_capacity(self.blocks.len());
        let mut post_pool = Vec::with_capacity(self.blocks.len());
        let mut cur = images.clone();
        for block in &self.blocks {
            let z = conv3x3_forward(&cur, &block.w, &block.b)?;
            let a = relu_forward(&z);
            let pooled = avgpool2_forward(&a)?;
            block_inputs.push(cur);
            conv_out.push(z);
            post_pool.push(pooled.clone());
            cur = pooled;
        }
        let pooled = global_avg_pool(&cur)?;
        Ok(EncoderForward {
            block_inputs,
            conv_out,
            post_pool,
            pooled,
        })
    }

    /// Pooled features only (no caches kept beyond the call).
    pub fn pooled_features(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.forward(images)?.pooled)
    }

    /// Post-ReLU, pre-pool map of the tap block for each batch item.
    pub fn tap_maps(&self, fwd: &EncoderForward) -> Tensor {
        relu_forward(&fwd.conv_out[self.cfg.tap_layer])
    }

    pub fn backward(&self, fwd: &EncoderForward, grad: GradSource) -> Result<EncoderGrads> {
        let last = self.blocks.len() - 1;
        let mut grad_map = match grad {
            GradSource::Pooled(g) => {
                global_avg_pool_backward(g, fwd.post_pool[last].shape())?
            }
            GradSource::LastMap(g) => {
                if g.shape() != fwd.post_pool[last].shape() {
                    return Err(Error::Shape(format!(
                        "grad map {:?} vs activations {:?}",
                        g.shape(),
                        fwd.post_pool[last].shape()
                    )));
                }
                g.clone()
            }
        };
        let mut per_block = vec![None; self.blocks.len()];
        for i in (0..self.blocks.len()).rev() {
            let g_prepool = avgpool2_backward(&grad_map, fwd.conv_out[i].shape())?;
            let g_conv = relu_backward(&fwd.conv_out[i], &g_prepool)?;
            let grads = conv3x3_backward(&fwd.block_inputs[i], &self.blocks[i].w, &g_conv)?;
            per_block[i] = Some((grads.grad_w, grads.grad_b));
            grad_map = grads.grad_in;
        }
        Ok(EncoderGrads {
            blocks: per_block.into_iter().map(Option::unwrap).collect(),
            grad_input: grad_map,
        })
    }

    /// Canonical (name, tensor) pairs: `block{i}.w`, `block{i}.b`.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for (i, block) in self.blocks.iter().enumerate() {
            ck.push(format!("block{i}.w"), block.w.clone());
            ck.push(format!("block{i}.b"), block.b.clone());
        }
        ck.push(
            "tap_layer",
            Tensor::from_vec(&[1], vec![self.cfg.tap_layer as f32]).unwrap(),
        );
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Encoder> {
        let mut blocks = Vec::new();
        let mut channels = Vec::new();
        let mut cin = 3;
        for i in 0.. {
            let (Some(w), Some(b)) = (ck.get(&format!("block{i}.w")), ck.get(&format!("block{i}.b")))
            else {
                break;
            };
            if w.rank() != 4 || w.shape()[1] != cin {
                return Err(Error::Shape(format!(
                    "block{i}.w has shape {:?}, expected input channels {cin}",
                    w.shape()
                )));
            }
            channels.push(w.shape()[0]);
            cin = w.shape()[0];
            blocks.push(ConvBlock {
                w: w.clone(),
                b: b.clone(),
            });
        }
        if blocks.is_empty() {
            return Err(Error::Format {
                offset: 0,
                message: "checkpoint holds no encoder blocks".into(),
            });
        }
        let tap_layer = ck
            .get("tap_layer")
            .map_or(channels.len() - 1, |t| t.data()[0] as usize);
        let cfg = EncoderConfig {
            channels,
            tap_layer,
        };
        cfg.validate()?;
        Ok(Encoder { blocks, cfg })
    }

    /// Flat parameter vector hash input; used for cache staleness checks.
    pub fn param_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for block in &self.blocks {
            for &v in block.w.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for &v in block.b.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

pub struct EncoderForward {
    pub block_inputs: Vec<Tensor>,
    pub conv_out: Vec<Tensor>,
    pub post_pool: Vec<Tensor>,
    /// `[B, c]` global-average-pooled representation.
    pub pooled: Tensor,
}

pub enum GradSource<'a> {
    /// Gradient w.r.t. the pooled `[B, c]` representation.
    Pooled(&'a Tensor),
    /// Gradient w.r.t. the last block's post-pool map.
    LastMap(&'a Tensor),
}

pub struct EncoderGrads {
    /// Per block: (grad_w, grad_b), aligned with `Encoder::blocks`.
    pub blocks: Vec<(Tensor, Tensor)>,
    pub grad_input: Tensor,
}

/// Rotation-prediction head: 3x3 conv + ReLU, global average pool, linear
/// to 4 logits. Attached to the encoder's final map and discarded after
/// pretext training.
#[derive(Debug, Clone, PartialEq)]
pub struct RotHead {
    pub conv: ConvBlock,
    pub fc_w: Tensor, // [4, width]
    pub fc_b: Tensor, // [4]
}

impl RotHead {
    pub fn new_random(in_channels: usize, width: usize, rng: &mut Rng) -> RotHead {
        let mut conv_rng = rng.split(0);
        let conv = he_conv(width, in_channels, &mut conv_rng);
        let std = (1.0 / width as f32).sqrt();
        let mut fc_rng = rng.split(1);
        let data: Vec<f32> = (0..4 * width).map(|_| fc_rng.normal_f32() * std).collect();
        RotHead {
            conv,
            fc_w: Tensor::from_vec(&[4, width], data).unwrap(),
            fc_b: Tensor::zeros(&[4]),
        }
    }

    pub fn width(&self) -> usize {
        self.fc_w.shape()[1]
    }

    pub fn forward(&self, map: &Tensor) -> Result<RotForward> {
        if map.rank() != 4 || map.shape()[1] != self.conv.w.shape()[1] {
            return Err(Error::Shape(format!(
                "rot head expects [B,{},h,w], got {:?}",
                self.conv.w.shape()[1],
                map.shape()
            )));
        }
        let z = conv3x3_forward(map, &self.conv.w, &self.conv.b)?;
        let a = relu_forward(&z);
        let gap = global_avg_pool(&a)?;
        let batch = gap.shape()[0];
        let width = self.width();
        let mut logits = Tensor::zeros(&[batch, 4]);
        for b in 0..batch {
            let feat = &gap.data()[b * width..(b + 1) * width];
            for k in 0..4 {
                let row = &self.fc_w.data()[k * width..(k + 1) * width];
                let mut acc = f64::from(self.fc_b.data()[k]);
                for (&f, &w) in feat.iter().zip(row) {
                    acc += f64::from(f) * f64::from(w);
                }
                logits.data_mut()[b * 4 + k] = acc as f32;
            }
        }
        Ok(RotForward {
            conv_out: z,
            gap,
            logits,
        })
    }

    /// Returns parameter gradients and the gradient w.r.t. the input map.
    pub fn backward(
        &self,
        map: &Tensor,
        fwd: &RotForward,
        grad_logits: &Tensor,
    ) -> Result<(RotGrads, Tensor)> {
        let batch = fwd.gap.shape()[0];
        let width = self.width();
        if grad_logits.shape() != [batch, 4] {
            return Err(Error::Shape(format!(
                "grad_logits {:?}, expected [{batch}, 4]",
                grad_logits.shape()
            )));
        }
        let mut gfw = vec![0.0f64; 4 * width];
        let mut gfb = vec![0.0f64; 4];
        let mut ggap = Tensor::zeros(&[batch, width]);
        let mut ggap_acc = vec![0.0f64; width];
        for b in 0..batch {
            let feat = &fwd.gap.data()[b * width..(b + 1) * width];
            ggap_acc.fill(0.0);
            for k in 0..4 {
                let g = f64::from(grad_logits.data()[b * 4 + k]);
                gfb[k] += g;
                let wrow = &self.fc_w.data()[k * width..(k + 1) * width];
                let gw_row = &mut gfw[k * width..(k + 1) * width];
                for i in 0..width {
                    gw_row[i] += g * f64::from(feat[i]);
                    ggap_acc[i] += g * f64::from(wrow[i]);
                }
            }
            for (dst, &v) in ggap.data_mut()[b * width..(b + 1) * width]
                .iter_mut()
                .zip(&ggap_acc)
            {
                *dst = v as f32;
            }
        }
        let g_postrelu = global_avg_pool_backward(&ggap, fwd.conv_out.shape())?;
        let g_conv = relu_backward(&fwd.conv_out, &g_postrelu)?;
        let conv_grads = conv3x3_backward(map, &self.conv.w, &g_conv)?;
        let grads = RotGrads {
            conv_w: conv_grads.grad_w,
            conv_b: conv_grads.grad_b,
            fc_w: Tensor::from_vec(&[4, width], gfw.iter().map(|&v| v as f32).collect())?,
            fc_b: Tensor::from_vec(&[4], gfb.iter().map(|&v| v as f32).collect())?,
        };
        Ok((grads, conv_grads.grad_in))
    }

    pub fn to_checkpoint(&self, ck: &mut Checkpoint) {
        ck.push("rothead.conv.w", self.conv.w.clone());
        ck.push("rothead.conv.b", self.conv.b.clone());
        ck.push("rothead.fc.w", self.fc_w.clone());
        ck.push("rothead.fc.b", self.fc_b.clone());
    }
}

pub struct RotForward {
    pub conv_out: Tensor,
    pub gap: Tensor,
    pub logits: Tensor,
}

pub struct RotGrads {
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub fc_w: Tensor,
    pub fc_b: Tensor,
}

/// Pack images into a `[B, 3, S, S]` batch tensor.
pub fn images_to_tensor(images: &[&Image]) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::Degenerate("empty batch".into()));
    }
    let size = images[0].size();
    let stride = 3 * size * size;
    let mut data = Vec::with_capacity(images.len() * stride);
    for img in images {
        if img.size() != size {
            return Err(Error::Shape("mixed image sizes in batch".into()));
        }
        data.extend_from_slice(img.pixels());
    }
    Tensor::from_vec(&[images.len(), 3, size, size], data)
}
