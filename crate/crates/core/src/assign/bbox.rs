use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Axis-aligned box in map pixels: top-left `(x, y)`, extents `(w, h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
    pub confidence: f32,
    /// Object id → score. Ordered so merges and traces are reproducible.
    pub class_scores: BTreeMap<usize, f32>,
}

impl BBox {
    pub fn new(x: f32, y: f32, w: f32, h: f32, confidence: f32, object_id: usize) -> Self {
        Self {
            x,
            y,
            w,
            h,
            confidence,
            class_scores: BTreeMap::from([(object_id, confidence)]),
        }
    }

    pub fn area(&self) -> f32 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f32, f32) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    /// Clips the box to `[0, frame]²`.
    pub fn clamped(&self, frame: f32) -> Self {
        let x0 = self.x.clamp(0.0, frame);
        let y0 = self.y.clamp(0.0, frame);
        let x1 = (self.x + self.w).clamp(0.0, frame);
        let y1 = (self.y + self.h).clamp(0.0, frame);
        Self {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
            confidence: self.confidence,
            class_scores: self.class_scores.clone(),
        }
    }

    /// Mirror across the vertical axis of a `frame`-wide plane.
    pub fn hflip(&self, frame: f32) -> Self {
        Self {
            x: frame - self.x - self.w,
            ..self.clone()
        }
    }

    /// Whether pixel `(row, col)` has its center inside the box.
    pub fn contains_pixel(&self, row: usize, col: usize) -> bool {
        let cx = col as f32 + 0.5;
        let cy = row as f32 + 0.5;
        cx >= self.x && cx < self.x + self.w && cy >= self.y && cy < self.y + self.h
    }

    /// Highest class score, ties to the lowest object id.
    pub fn best_class(&self) -> Option<(usize, f32)> {
        self.class_scores
            .iter()
            .fold(None, |best: Option<(usize, f32)>, (&id, &s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((id, s)),
            })
    }
}

/// Intersection over union; zero when either box is empty. Computed in
/// f64 from the corners, so `iou(a, a)` is exactly 1.
pub fn iou(a: &BBox, b: &BBox) -> f32 {
    let span = |lo: f32, ext: f32| (lo as f64, lo as f64 + ext.max(0.0) as f64);
    let ((ax0, ax1), (ay0, ay1)) = (span(a.x, a.w), span(a.y, a.h));
    let ((bx0, bx1), (by0, by1)) = (span(b.x, b.w), span(b.y, b.h));
    let ix = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let iy = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = ix * iy;
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0) as f32
    }
}
