use serde::{Deserialize, Serialize};

use crate::kernel::{KernelError, Tensor};
use crate::parser::{Conflicts, PromptStructure};

/// Side of the reference plane used for detection and segmentation.
pub const REFERENCE_SIZE: usize = 16;

/// Conditional and unconditional logits of one attention block,
/// laid out `heads × H × W × N` (token fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCams {
    pub cond: Tensor,
    pub uncond: Tensor,
}

impl BlockCams {
    pub fn new(cond: Tensor, uncond: Tensor) -> Result<Self, KernelError> {
        if cond.rank() != 4 {
            return Err(KernelError::Shape(format!(
                "block maps must be heads×H×W×N, got {:?}",
                cond.shape()
            )));
        }
        cond.expect_same_shape(&uncond, "conditional vs unconditional maps")?;
        Ok(Self { cond, uncond })
    }

    pub fn heads(&self) -> usize {
        self.cond.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.cond.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.cond.shape()[2]
    }

    pub fn tokens(&self) -> usize {
        self.cond.shape()[3]
    }

    /// Plane of one head and token as `H×W`.
    pub fn token_plane(&self, logits: &Tensor, head: usize, token: usize) -> Vec<f32> {
        let (h, w, n) = (self.height(), self.width(), self.tokens());
        let base = head * h * w * n;
        (0..h * w).map(|px| logits.data()[base + px * n + token]).collect()
    }
}

/// Per-block attention logits for one denoising step.
#[derive(Debug, Clone, PartialEq)]
pub struct CamStack {
    pub blocks: Vec<BlockCams>,
    /// Key/query projection dimension (softmax temperature is `1/√d`).
    pub attn_dim: usize,
}

impl CamStack {
    pub fn new(blocks: Vec<BlockCams>, attn_dim: usize) -> Result<Self, KernelError> {
        let Some(first) = blocks.first() else {
            return Err(KernelError::Shape("a map stack needs at least one block".into()));
        };
        let n = first.tokens();
        if let Some(b) = blocks.iter().find(|b| b.tokens() != n) {
            return Err(KernelError::Shape(format!(
                "token count differs across blocks: {} vs {}",
                n,
                b.tokens()
            )));
        }
        Ok(Self { blocks, attn_dim })
    }

    pub fn tokens(&self) -> usize {
        self.blocks[0].tokens()
    }

    /// Head- and block-averaged conditional logits at the reference
    /// resolution, `16 × 16 × N`.
    pub fn reference(&self) -> Tensor {
        let n = self.tokens();
        let s = REFERENCE_SIZE;
        let mut acc = vec![0.0f64; s * s * n];
        let mut count = 0usize;
        for block in &self.blocks {
            for head in 0..block.heads() {
                for token in 0..n {
                    let plane = block.token_plane(&block.cond, head, token);
                    let r = resample_mean(&plane, block.height(), block.width(), s, s);
                    for (px, v) in r.iter().enumerate() {
                        acc[px * n + token] += *v as f64;
                    }
                }
                count += 1;
            }
        }
        let data = acc.into_iter().map(|v| (v / count as f64) as f32).collect();
        Tensor::new(&[s, s, n], data).expect("reference shape")
    }

    /// Detector input for one object: every block and head's map of the
    /// core-noun channels (averaged if several), resampled to 16×16 and
    /// stacked as channels.
    pub fn detector_planes(&self, core_channels: &[usize]) -> Tensor {
        let s = REFERENCE_SIZE;
        let mut data = Vec::new();
        let mut channels = 0;
        for block in &self.blocks {
            for head in 0..block.heads() {
                let mut plane = vec![0.0f32; block.height() * block.width()];
                for &c in core_channels {
                    for (dst, v) in plane.iter_mut().zip(block.token_plane(&block.cond, head, c)) {
                        *dst += v / core_channels.len() as f32;
                    }
                }
                data.extend(resample_mean(&plane, block.height(), block.width(), s, s));
                channels += 1;
            }
        }
        Tensor::new(&[channels, s, s], data).expect("detector input shape")
    }
}

/// Resize a plane: integer-factor downsampling averages, anything else is
/// nearest-neighbor.
pub fn resample_mean(src: &[f32], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f32> {
    if sh == dh && sw == dw {
        return src.to_vec();
    }
    if sh.is_multiple_of(dh) && sw.is_multiple_of(dw) && sh >= dh && sw >= dw {
        let (fy, fx) = (sh / dh, sw / dw);
        let norm = 1.0 / (fy * fx) as f64;
        let mut out = Vec::with_capacity(dh * dw);
        for y in 0..dh {
            for x in 0..dw {
                let mut acc = 0.0f64;
                for dy in 0..fy {
                    for dx in 0..fx {
                        acc += src[(y * fy + dy) * sw + x * fx + dx] as f64;
                    }
                }
                out.push((acc * norm) as f32);
            }
        }
        return out;
    }
    resample_nearest(src, sh, sw, dh, dw)
}

pub fn resample_nearest<T: Copy>(src: &[T], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(dh * dw);
    for y in 0..dh {
        let sy = y * sh / dh;
        for x in 0..dw {
            out.push(src[sy * sw + x * sw / dw]);
        }
    }
    out
}

/// Which map channels belong to which object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTokens {
    pub object_id: usize,
    pub core_channels: Vec<usize>,
    pub phrase_channels: Vec<usize>,
}

/// Channel roles and the object conflict relation, as used by masking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRoles {
    pub objects: Vec<ObjectTokens>,
    pub conflicts: Conflicts,
    pub channels: usize,
}

impl TokenRoles {
    /// Roles for a parsed prompt whose token `i` lives in channel `i + offset`.
    pub fn from_structure(structure: &PromptStructure, offset: usize, channels: usize) -> Self {
        let objects = structure
            .noun_phrases
            .iter()
            .map(|p| ObjectTokens {
                object_id: p.object_id,
                core_channels: p.core_tokens.clone().map(|t| t + offset).collect(),
                phrase_channels: p.span.clone().map(|t| t + offset).collect(),
            })
            .collect();
        Self {
            objects,
            conflicts: structure.conflicts.clone(),
            channels,
        }
    }

    pub fn object(&self, object_id: usize) -> Option<&ObjectTokens> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    pub fn object_ids(&self) -> Vec<usize> {
        self.objects.iter().map(|o| o.object_id).collect()
    }

    /// For object `n`, a flag per channel: does that token conflict with `n`?
    /// Phrase tokens inherit their core noun's conflicts; tokens outside
    /// every phrase never conflict.
    pub fn conflicting_channels(&self, object_id: usize) -> Vec<bool> {
        let mut flags = vec![false; self.channels];
        for other in &self.objects {
            if self.conflicts.conflicts(other.object_id, object_id) {
                for &c in &other.phrase_channels {
                    if c < self.channels {
                        flags[c] = true;
                    }
                }
            }
        }
        flags
    }
}
