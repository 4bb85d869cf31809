use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cam::{resample_nearest, BlockCams, CamStack, TokenRoles, REFERENCE_SIZE};
use super::segment::SegmentationSet;
use crate::kernel::{KernelError, Tensor};

/// A pixel whose corrected maximum is at or below this keeps scale 1.
pub const SCALE_GUARD: f32 = 1e-6;
pub const SCALE_MIN: f32 = 0.1;
pub const SCALE_MAX: f32 = 10.0;

/// Binary `H×W×N` mask: 1 where the pixel belongs to some object `n` and
/// the token conflicts with `n`. Built at 16×16 and resampled
/// nearest-neighbor to `height×width`.
pub fn build_conflict_mask(seg: &SegmentationSet, roles: &TokenRoles, height: usize, width: usize) -> Tensor {
    let n = roles.channels;
    let s = REFERENCE_SIZE;
    let flags: BTreeMap<usize, Vec<bool>> = seg
        .masks
        .keys()
        .map(|&id| (id, roles.conflicting_channels(id)))
        .collect();
    let owners: Vec<Option<usize>> = (0..s * s).map(|px| seg.owner(px)).collect();
    let owners = resample_nearest(&owners, s, s, height, width);
    let mut data = vec![0.0f32; height * width * n];
    for (px, owner) in owners.iter().enumerate() {
        if let Some(id) = owner {
            for (c, &hit) in flags[id].iter().enumerate() {
                if hit {
                    data[px * n + c] = 1.0;
                }
            }
        }
    }
    Tensor::new(&[height, width, n], data).expect("mask shape")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionStats {
    /// Pixels whose scale fell back to 1 because a maximum was non-positive.
    pub guard_activations: usize,
    /// Pixels whose scale hit the `[0.1, 10]` clamp.
    pub clamp_activations: usize,
    /// Fraction of mask entries equal to 1.
    pub mask_density: f64,
}

/// Corrected logits for one block plus the per-pixel scale that was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCorrection {
    pub logits: Tensor,
    /// One scale per `(head, pixel)` row.
    pub scales: Vec<f32>,
    pub stats: CorrectionStats,
}

/// Conflict elimination, target enhancement and blending for one block.
///
/// `cond` and `uncond` are `[heads ×] H × W × N`; `mask` is `H × W × N` and
/// applies to every head. Per pixel row:
/// `CAM₁ = mask ? uncond : cond`, `CAM₂ = CAM₁ · max(CAM₀)/max(CAM₁)`
/// (guarded and clamped), `CAM₃ = s·CAM₂ + (1−s)·CAM₀`. At `s = 0` the
/// result is `cond` and at `s = 1` exactly `CAM₂`.
pub fn correct_block(cond: &Tensor, uncond: &Tensor, mask: &Tensor, s: f32) -> Result<BlockCorrection, KernelError> {
    cond.expect_same_shape(uncond, "correct_block cond vs uncond")?;
    let rank = cond.rank();
    if !(3..=4).contains(&rank) || mask.shape() != &cond.shape()[rank - 3..] {
        return Err(KernelError::Shape(format!(
            "mask {:?} does not match logits {:?}",
            mask.shape(),
            cond.shape()
        )));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(KernelError::Shape(format!("blend weight {s} outside [0, 1]")));
    }
    let n = *cond.shape().last().expect("rank ≥ 3");
    let mask_rows = mask.len() / n.max(1);
    let mut out = Vec::with_capacity(cond.len());
    let mut scales = Vec::with_capacity(cond.len() / n.max(1));
    let mut stats = CorrectionStats {
        mask_density: mask.data().iter().filter(|&&m| m != 0.0).count() as f64 / mask.len().max(1) as f64,
        ..Default::default()
    };
    let mut cam2 = vec![0.0f32; n];
    for (row, (c0, uc)) in cond.data().chunks(n).zip(uncond.data().chunks(n)).enumerate() {
        let m = &mask.data()[(row % mask_rows) * n..(row % mask_rows + 1) * n];
        for p in 0..n {
            cam2[p] = if m[p] != 0.0 { uc[p] } else { c0[p] };
        }
        let max0 = c0.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let max1 = cam2.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let scale = if max1 <= SCALE_GUARD || max0 <= 0.0 {
            if max1 != max0 {
                stats.guard_activations += 1;
            }
            1.0
        } else {
            let r = max0 / max1;
            if !(SCALE_MIN..=SCALE_MAX).contains(&r) {
                stats.clamp_activations += 1;
            }
            r.clamp(SCALE_MIN, SCALE_MAX)
        };
        if scale != 1.0 {
            for v in cam2.iter_mut() {
                *v *= scale;
            }
        }
        scales.push(scale);
        if s == 0.0 {
            out.extend_from_slice(c0);
        } else if s == 1.0 {
            out.extend_from_slice(&cam2);
        } else {
            out.extend(c0.iter().zip(&cam2).map(|(&a, &b)| a + s * (b - a)));
        }
    }
    let logits = Tensor::new(cond.shape(), out)?;
    logits.check_finite("correct_block")?;
    Ok(BlockCorrection { logits, scales, stats })
}

/// A corrected stack together with what was done to each block.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedStack {
    pub stack: CamStack,
    pub masks: Vec<Tensor>,
    pub blocks: Vec<BlockCorrection>,
}

/// Applies [`correct_block`] to every block's conditional logits, using
/// the segmentation's conflict mask resampled to each block's resolution.
pub fn correct_stack(
    stack: &CamStack,
    seg: &SegmentationSet,
    roles: &TokenRoles,
    s: f32,
) -> Result<CorrectedStack, KernelError> {
    let mut blocks = Vec::with_capacity(stack.blocks.len());
    let mut masks = Vec::with_capacity(stack.blocks.len());
    let mut corrected = Vec::with_capacity(stack.blocks.len());
    for block in &stack.blocks {
        let mask = build_conflict_mask(seg, roles, block.height(), block.width());
        let result = correct_block(&block.cond, &block.uncond, &mask, s)?;
        corrected.push(BlockCams::new(result.logits.clone(), block.uncond.clone())?);
        masks.push(mask);
        blocks.push(result);
    }
    Ok(CorrectedStack {
        stack: CamStack::new(corrected, stack.attn_dim)?,
        masks,
        blocks,
    })
}

/// Blend weights for successive corrected steps; the last entry repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSchedule {
    ratios: Vec<f32>,
}

impl Default for SmoothSchedule {
    fn default() -> Self {
        Self {
            ratios: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

impl SmoothSchedule {
    pub fn new(ratios: Vec<f32>) -> Result<Self, String> {
        if ratios.is_empty() {
            return Err("smooth schedule is empty".into());
        }
        if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(format!("smooth schedule ratios must lie in [0, 1]: {ratios:?}"));
        }
        if ratios.windows(2).any(|w| w[1] < w[0]) {
            return Err(format!("smooth schedule must be non-decreasing: {ratios:?}"));
        }
        if *ratios.last().expect("non-empty") != 1.0 {
            return Err(format!("smooth schedule must end at 1.0: {ratios:?}"));
        }
        Ok(Self { ratios })
    }

    pub fn ratios(&self) -> &[f32] {
        &self.ratios
    }

    /// Weight for the `k`-th corrected step (0-based).
    pub fn ratio(&self, k: usize) -> f32 {
        self.ratios[k.min(self.ratios.len() - 1)]
    }
}

/// One line of the correction trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub t: usize,
    pub block: usize,
    pub resolution: (usize, usize),
    pub s: f32,
    pub thresholds: BTreeMap<usize, f32>,
    #[serde(flatten)]
    pub stats: CorrectionStats,
}

impl CorrectedStack {
    pub fn records(&self, t: usize, s: f32, seg: &SegmentationSet) -> Vec<CorrectionRecord> {
        self.blocks
            .iter()
            .zip(&self.stack.blocks)
            .enumerate()
            .map(|(i, (b, cams))| CorrectionRecord {
                t,
                block: i,
                resolution: (cams.height(), cams.width()),
                s,
                thresholds: seg.thresholds(),
                stats: b.stats.clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::{assign, BBox};
    use crate::correction::segment;
    use crate::parser::Parser;

    fn pair() -> (Tensor, Tensor) {
        let cond = Tensor::from_fn(&[2, 2, 3], |i| 0.5 + (i % 5) as f32 * 0.3);
        let uncond = Tensor::from_fn(&[2, 2, 3], |i| 0.2 + (i % 3) as f32 * 0.1);
        (cond, uncond)
    }

    #[test]
    fn zero_mask_is_identity() {
        let (c, u) = pair();
        for s in [0.0, 0.3, 1.0] {
            let out = correct_block(&c, &u, &Tensor::zeros(&[2, 2, 3]), s).unwrap();
            assert_eq!(out.logits, c);
            assert!(out.scales.iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn full_mask_substitutes_then_rescales() {
        let (c, u) = pair();
        let out = correct_block(&c, &u, &Tensor::full(&[2, 2, 3], 1.0), 1.0).unwrap();
        for (row, (o, uc)) in out.logits.data().chunks(3).zip(u.data().chunks(3)).enumerate() {
            for (a, b) in o.iter().zip(uc) {
                assert!((a - b * out.scales[row]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn guard_keeps_unit_scale_for_negative_maxima() {
        let c = Tensor::new(&[1, 1, 2], vec![-1.0, -2.0]).unwrap();
        let u = Tensor::new(&[1, 1, 2], vec![-3.0, -4.0]).unwrap();
        let out = correct_block(&c, &u, &Tensor::full(&[1, 1, 2], 1.0), 1.0).unwrap();
        assert_eq!(out.scales, vec![1.0]);
        assert_eq!(out.logits.data(), &[-3.0, -4.0]);
        assert_eq!(out.stats.guard_activations, 1);
    }

    #[test]
    fn clamp_limits_scale() {
        let c = Tensor::new(&[1, 1, 2], vec![100.0, 0.0]).unwrap();
        let u = Tensor::new(&[1, 1, 2], vec![1.0, 0.5]).unwrap();
        let mask = Tensor::new(&[1, 1, 2], vec![1.0, 0.0]).unwrap();
        let out = correct_block(&c, &u, &mask, 1.0).unwrap();
        assert_eq!(out.scales, vec![10.0]);
        assert_eq!(out.stats.clamp_activations, 1);
    }

    #[test]
    fn mask_broadcasts_over_heads() {
        let cond = Tensor::from_fn(&[2, 2, 2, 3], |i| 1.0 + i as f32);
        let uncond = Tensor::full(&[2, 2, 2, 3], 0.5);
        let mut mask = Tensor::zeros(&[2, 2, 3]);
        mask.data_mut()[0] = 1.0;
        let out = correct_block(&cond, &uncond, &mask, 1.0).unwrap();
        assert_eq!(out.scales.len(), 8);
        assert_ne!(out.logits.data()[0], cond.data()[0]);
        assert_ne!(out.logits.data()[12], cond.data()[12]);
        assert_eq!(&out.logits.data()[3..12], &cond.data()[3..12]);
        assert!(correct_block(&cond, &uncond, &Tensor::zeros(&[2, 2, 4]), 1.0).is_err());
    }

    #[test]
    fn conflict_mask_marks_other_phrase_only() {
        let s = Parser::default().analyze("a red car and a white sheep").unwrap();
        let roles = TokenRoles::from_structure(&s, 1, 8);
        let cam = Tensor::full(&[16, 16, 8], 1.0);
        let seg = segment(&cam, &assign(&[BBox::new(0.0, 0.0, 4.0, 4.0, 0.9, 0)], &[0, 1]), &roles).unwrap();
        let mask = build_conflict_mask(&seg, &roles, 16, 16);
        let row = &mask.data()[..8];
        assert_eq!(row, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!(mask.data()[(5 * 16 + 5) * 8..(5 * 16 + 6) * 8].iter().all(|&v| v == 0.0));
        let coarse = build_conflict_mask(&seg, &roles, 8, 8);
        assert_eq!(&coarse.data()[(8 + 1) * 8..(8 + 2) * 8], row);
        assert!(coarse.data()[(2 * 8 + 2) * 8..].iter().all(|&v| v == 0.0));
        let empty = build_conflict_mask(&SegmentationSet::default(), &roles, 32, 32);
        assert!(empty.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn schedule_validation_and_tail() {
        let s = SmoothSchedule::default();
        assert_eq!((0..6).map(|k| s.ratio(k)).collect::<Vec<_>>(), vec![0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
        assert!(SmoothSchedule::new(vec![0.5, 0.25, 1.0]).is_err());
        assert!(SmoothSchedule::new(vec![0.5]).is_err());
        assert!(SmoothSchedule::new(vec![]).is_err());
        assert!(SmoothSchedule::new(vec![1.0]).is_ok());
    }
}
