use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cam::{TokenRoles, REFERENCE_SIZE};
use super::otsu::otsu;
use crate::assign::ObjectAssignment;
use crate::kernel::{KernelError, Tensor};

/// One object's region at reference resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMask {
    /// Row-major `16×16` membership.
    pub pixels: Vec<bool>,
    /// Otsu threshold; `None` for a degenerate box.
    pub threshold: Option<f32>,
    /// Area of the (clamped) box the mask was cut from.
    pub box_area: f32,
}

impl ObjectMask {
    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * REFERENCE_SIZE + col]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSet {
    pub masks: BTreeMap<usize, ObjectMask>,
    pub warnings: Vec<String>,
}

impl SegmentationSet {
    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Object owning a reference pixel, if any.
    pub fn owner(&self, pixel: usize) -> Option<usize> {
        self.masks.iter().find(|(_, m)| m.pixels[pixel]).map(|(&id, _)| id)
    }

    pub fn thresholds(&self) -> BTreeMap<usize, f32> {
        self.masks.iter().filter_map(|(&id, m)| m.threshold.map(|t| (id, t))).collect()
    }

    /// Whether no pixel belongs to two masks.
    pub fn is_disjoint(&self) -> bool {
        (0..REFERENCE_SIZE * REFERENCE_SIZE)
            .all(|px| self.masks.values().filter(|m| m.pixels[px]).count() <= 1)
    }

    /// Fraction of reference pixels on which two sets agree about ownership.
    pub fn agreement(&self, other: &SegmentationSet) -> f64 {
        let n = REFERENCE_SIZE * REFERENCE_SIZE;
        let same = (0..n).filter(|&px| self.owner(px) == other.owner(px)).count();
        same as f64 / n as f64
    }
}

/// Mean of the given channels at each pixel of a `16×16×N` map.
pub fn channel_mean(cam_ref: &Tensor, channels: &[usize]) -> Vec<f32> {
    let n = cam_ref.shape()[2];
    let pixels = cam_ref.shape()[0] * cam_ref.shape()[1];
    (0..pixels)
        .map(|px| {
            let row = &cam_ref.data()[px * n..(px + 1) * n];
            let sum: f64 = channels.iter().map(|&c| row[c] as f64).sum();
            (sum / channels.len().max(1) as f64) as f32
        })
        .collect()
}

/// Per-object masks: a pixel belongs to object `n` when its center lies in
/// the object's box and the core-noun map there reaches the Otsu threshold
/// of the in-box values. Pixels claimed twice go to the object with the
/// smaller box (ties to the lower id).
pub fn segment(
    cam_ref: &Tensor,
    assignment: &ObjectAssignment,
    roles: &TokenRoles,
) -> Result<SegmentationSet, KernelError> {
    let s = REFERENCE_SIZE;
    if cam_ref.rank() != 3 || cam_ref.shape()[0] != s || cam_ref.shape()[1] != s {
        return Err(KernelError::Shape(format!(
            "reference map must be 16×16×N, got {:?}",
            cam_ref.shape()
        )));
    }
    let mut set = SegmentationSet::default();
    for (&object_id, assigned) in &assignment.assigned {
        let Some(tokens) = roles.object(object_id) else {
            set.warnings.push(format!("object {object_id} has no token roles"));
            continue;
        };
        if let Some(&bad) = tokens.core_channels.iter().find(|&&c| c >= cam_ref.shape()[2]) {
            return Err(KernelError::Shape(format!("core channel {bad} outside the map")));
        }
        let bbox = assigned.bbox.clamped(s as f32);
        let plane = channel_mean(cam_ref, &tokens.core_channels);
        let inside: Vec<usize> = (0..s * s).filter(|&px| bbox.contains_pixel(px / s, px % s)).collect();
        if bbox.w < 1.0 || bbox.h < 1.0 || inside.is_empty() {
            set.warnings.push(format!(
                "object {object_id}: degenerate box {:.2}×{:.2}, mask left empty",
                bbox.w, bbox.h
            ));
            set.masks.insert(
                object_id,
                ObjectMask {
                    pixels: vec![false; s * s],
                    threshold: None,
                    box_area: bbox.area(),
                },
            );
            continue;
        }
        let values: Vec<f32> = inside.iter().map(|&px| plane[px]).collect();
        let threshold = otsu(&values);
        let mut pixels = vec![false; s * s];
        for &px in &inside {
            pixels[px] = plane[px] >= threshold;
        }
        set.masks.insert(
            object_id,
            ObjectMask {
                pixels,
                threshold: Some(threshold),
                box_area: bbox.area(),
            },
        );
    }
    resolve_overlaps(&mut set);
    Ok(set)
}

fn resolve_overlaps(set: &mut SegmentationSet) {
    let n = REFERENCE_SIZE * REFERENCE_SIZE;
    for px in 0..n {
        let claimants: Vec<(usize, f32)> = set
            .masks
            .iter()
            .filter(|(_, m)| m.pixels[px])
            .map(|(&id, m)| (id, m.box_area))
            .collect();
        if claimants.len() < 2 {
            continue;
        }
        let winner = claimants
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|c| c.0)
            .expect("at least two claimants");
        for (id, _) in claimants {
            if id != winner {
                set.masks.get_mut(&id).expect("claimant exists").pixels[px] = false;
            }
        }
    }
}
