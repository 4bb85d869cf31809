//! One-box-per-object assignment: IoU, NMS with score merging, and
//! maximum-total-score matching.

mod bbox;
mod hungarian;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bbox::{iou, BBox};
pub use hungarian::max_weight_assignment;

/// Default IoU above which a lower-confidence box is suppressed.
pub const DEFAULT_NMS_IOU: f32 = 0.5;

/// Greedy NMS in descending confidence. A suppressed box does not vanish:
/// its per-object scores are folded into the box that suppressed it,
/// keeping the maximum per object id. Survivors come back sorted by
/// confidence (ties by input order).
pub fn nms_with_merge(boxes: &[BBox], iou_threshold: f32) -> Vec<BBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].confidence.total_cmp(&boxes[a].confidence).then(a.cmp(&b)));

    let mut survivors: Vec<BBox> = Vec::new();
    for &i in &order {
        let candidate = &boxes[i];
        match survivors.iter_mut().find(|s| iou(s, candidate) > iou_threshold) {
            Some(keeper) => {
                for (&id, &score) in &candidate.class_scores {
                    let slot = keeper.class_scores.entry(id).or_insert(score);
                    *slot = slot.max(score);
                }
            }
            None => survivors.push(candidate.clone()),
        }
    }
    survivors
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedBox {
    /// Index into the box list given to [`assign`].
    pub box_index: usize,
    pub bbox: BBox,
    pub score: f32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectAssignment {
    pub assigned: BTreeMap<usize, AssignedBox>,
    pub unassigned: Vec<usize>,
    /// Objects that received a box whose score for them is zero.
    pub zero_score: Vec<usize>,
}

impl ObjectAssignment {
    pub fn total_score(&self) -> f64 {
        self.assigned.values().map(|a| a.score as f64).sum()
    }

    pub fn box_for(&self, object_id: usize) -> Option<&BBox> {
        self.assigned.get(&object_id).map(|a| &a.bbox)
    }
}

/// Assigns each object at most one box, maximizing the summed class scores.
///
/// `score[object][box] = box.class_scores[object]` (0 when absent). Objects
/// with only zero-score options are still assigned and listed in
/// `zero_score`; objects left over when boxes run out are `unassigned`.
pub fn assign(boxes: &[BBox], object_ids: &[usize]) -> ObjectAssignment {
    let scores: Vec<Vec<f64>> = object_ids
        .iter()
        .map(|id| {
            boxes
                .iter()
                .map(|b| b.class_scores.get(id).copied().unwrap_or(0.0) as f64)
                .collect()
        })
        .collect();
    let matching = if boxes.is_empty() {
        vec![None; object_ids.len()]
    } else {
        max_weight_assignment(&scores)
    };

    let mut out = ObjectAssignment::default();
    for (row, (&object_id, col)) in object_ids.iter().zip(matching).enumerate() {
        match col {
            Some(c) => {
                let score = scores[row][c] as f32;
                if score <= 0.0 {
                    out.zero_score.push(object_id);
                }
                out.assigned.insert(
                    object_id,
                    AssignedBox {
                        box_index: c,
                        bbox: boxes[c].clone(),
                        score,
                    },
                );
            }
            None => out.unassigned.push(object_id),
        }
    }
    out
}
