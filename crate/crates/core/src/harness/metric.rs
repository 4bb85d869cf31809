use super::HarnessError;
use crate::correction::{resample_nearest, CamStack, SegmentationSet, TokenRoles, REFERENCE_SIZE};
use crate::kernel::ops::softmax_slice;

/// Average softmax mass that tokens conflicting with object `n` receive
/// inside `S[n]`, averaged over blocks and heads, then over objects with a
/// non-empty region. Lies in `[0, 1]`.
pub fn mixing_metric(cam: &CamStack, seg: &SegmentationSet, roles: &TokenRoles) -> Result<f64, HarnessError> {
    let s = REFERENCE_SIZE;
    let n = cam.tokens();
    let inv = 1.0 / (cam.attn_dim as f32).sqrt();
    let mut per_object = Vec::new();
    for (&id, mask) in &seg.masks {
        if mask.count() == 0 {
            continue;
        }
        let conflicting = roles.conflicting_channels(id);
        let mut sum = 0.0f64;
        let mut maps = 0usize;
        for block in &cam.blocks {
            let (h, w) = (block.height(), block.width());
            let region = resample_nearest(&mask.pixels, s, s, h, w);
            let pixels: Vec<usize> = (0..h * w).filter(|&px| region[px]).collect();
            if pixels.is_empty() {
                continue;
            }
            for head in 0..block.heads() {
                let base = head * h * w * n;
                let mut mass = 0.0f64;
                for &px in &pixels {
                    let row: Vec<f32> = block.cond.data()[base + px * n..base + (px + 1) * n]
                        .iter()
                        .map(|v| v * inv)
                        .collect();
                    let p = softmax_slice(&row);
                    mass += p
                        .iter()
                        .zip(&conflicting)
                        .filter(|(_, &c)| c)
                        .map(|(&v, _)| v as f64)
                        .sum::<f64>();
                }
                sum += mass / pixels.len() as f64;
                maps += 1;
            }
        }
        if maps > 0 {
            per_object.push(sum / maps as f64);
        }
    }
    if per_object.is_empty() {
        return Err(HarnessError::EmptySegmentation);
    }
    Ok(per_object.iter().sum::<f64>() / per_object.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::{BlockCams, ObjectMask, ObjectTokens};
    use crate::kernel::Tensor;
    use crate::parser::Conflicts;

    /// Two one-token objects, left and right halves of a 16×16 block.
    fn setup(logits: impl Fn(usize, usize) -> [f32; 2]) -> (CamStack, SegmentationSet, TokenRoles) {
        let mut data = Vec::new();
        for px in 0..256 {
            data.extend(logits(px / 16, px % 16));
        }
        let cond = Tensor::new(&[1, 16, 16, 2], data).unwrap();
        let stack = CamStack::new(vec![BlockCams::new(cond.clone(), cond).unwrap()], 4).unwrap();
        let mut seg = SegmentationSet::default();
        for id in 0..2 {
            let pixels = (0..256).map(|px| (px % 16 < 8) == (id == 0)).collect();
            seg.masks.insert(id, ObjectMask { pixels, threshold: None, box_area: 128.0 });
        }
        let mut conflicts = Conflicts::default();
        conflicts.insert(0, 1);
        let roles = TokenRoles {
            objects: (0..2)
                .map(|id| ObjectTokens { object_id: id, core_channels: vec![id], phrase_channels: vec![id] })
                .collect(),
            conflicts,
            channels: 2,
        };
        (stack, seg, roles)
    }

    #[test]
    fn suppressed_conflicts_give_zero() {
        let (stack, seg, roles) = setup(|_, c| if c < 8 { [1.0, -1e30] } else { [-1e30, 1.0] });
        assert_eq!(mixing_metric(&stack, &seg, &roles).unwrap(), 0.0);
    }

    #[test]
    fn identical_channels_give_half() {
        let (stack, seg, roles) = setup(|r, c| [(r + c) as f32, (r + c) as f32]);
        assert!((mixing_metric(&stack, &seg, &roles).unwrap() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn empty_segmentation_is_an_error() {
        let (stack, _, roles) = setup(|_, _| [0.0, 0.0]);
        assert!(mixing_metric(&stack, &SegmentationSet::default(), &roles).is_err());
    }
}
