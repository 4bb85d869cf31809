use crate::assign::BBox;
use crate::kernel::ops::sigmoid_scalar;
use crate::kernel::Tensor;

use super::model::{GridPrediction, CELL, CELL_OUTPUTS, GRID};

/// Weight of the box-regression part.
pub const BOX_WEIGHT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub confidence: f64,
    pub boxes: f64,
}

/// Regression target of the cell responsible for one truth box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTarget {
    pub row: usize,
    pub col: usize,
    pub tx: f32,
    pub ty: f32,
    pub tw: f32,
    pub th: f32,
}

/// The cell containing the box center and its encoded offsets. When two
/// boxes share a cell the later one wins.
pub fn encode_targets(truth: &[BBox]) -> Vec<CellTarget> {
    let mut targets: Vec<CellTarget> = Vec::new();
    for b in truth {
        let (cx, cy) = b.center();
        let col = ((cx / CELL).floor().max(0.0) as usize).min(GRID - 1);
        let row = ((cy / CELL).floor().max(0.0) as usize).min(GRID - 1);
        let t = CellTarget {
            row,
            col,
            tx: (cx / CELL - col as f32).clamp(0.0, 1.0),
            ty: (cy / CELL - row as f32).clamp(0.0, 1.0),
            tw: (b.w.max(1e-3) / CELL).ln(),
            th: (b.h.max(1e-3) / CELL).ln(),
        };
        targets.retain(|o| (o.row, o.col) != (row, col));
        targets.push(t);
    }
    targets
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Loss and its gradient with respect to the raw `5×8×8` outputs.
///
/// Confidence: binary cross-entropy over every cell, target 1 at
/// responsible cells. Boxes: squared error on `(σ(tx), σ(ty), tw, th)` at
/// responsible cells only, weighted by [`BOX_WEIGHT`].
pub fn loss_with_grad(pred: &GridPrediction, truth: &[BBox]) -> (LossParts, Tensor) {
    let raw = pred.raw();
    let idx = |ch: usize, r: usize, c: usize| (ch * GRID + r) * GRID + c;
    let targets = encode_targets(truth);
    let mut grad = vec![0.0f32; CELL_OUTPUTS * GRID * GRID];

    let mut conf = 0.0f64;
    for r in 0..GRID {
        for c in 0..GRID {
            let y = if targets.iter().any(|t| (t.row, t.col) == (r, c)) { 1.0 } else { 0.0 };
            let l = raw.data()[idx(0, r, c)] as f64;
            conf += softplus(l) - y * l;
            grad[idx(0, r, c)] = (sigmoid_scalar(l as f32) as f64 - y) as f32;
        }
    }

    let mut boxes = 0.0f64;
    for t in &targets {
        for (ch, target, squash) in [(1, t.tx, true), (2, t.ty, true), (3, t.tw, false), (4, t.th, false)] {
            let i = idx(ch, t.row, t.col);
            let l = raw.data()[i];
            let (v, dv) = if squash {
                let s = sigmoid_scalar(l) as f64;
                (s, s * (1.0 - s))
            } else {
                (l as f64, 1.0)
            };
            let e = v - target as f64;
            boxes += e * e;
            grad[i] = (BOX_WEIGHT * 2.0 * e * dv) as f32;
        }
    }
    let parts = LossParts {
        total: conf + BOX_WEIGHT * boxes,
        confidence: conf,
        boxes,
    };
    (parts, Tensor::new(&[CELL_OUTPUTS, GRID, GRID], grad).expect("grad shape"))
}

pub fn loss(pred: &GridPrediction, truth: &[BBox]) -> LossParts {
    loss_with_grad(pred, truth).0
}

/// Raw outputs that decode exactly to `truth` (saturated confidences).
pub fn encode_prediction(truth: &[BBox]) -> GridPrediction {
    let logit = |p: f32| (p / (1.0 - p)).ln();
    let mut raw = vec![0.0f32; CELL_OUTPUTS * GRID * GRID];
    let idx = |ch: usize, r: usize, c: usize| (ch * GRID + r) * GRID + c;
    for r in 0..GRID {
        for c in 0..GRID {
            raw[idx(0, r, c)] = -20.0;
        }
    }
    for t in encode_targets(truth) {
        raw[idx(0, t.row, t.col)] = 20.0;
        raw[idx(1, t.row, t.col)] = logit(t.tx.clamp(1e-6, 1.0 - 1e-6));
        raw[idx(2, t.row, t.col)] = logit(t.ty.clamp(1e-6, 1.0 - 1e-6));
        raw[idx(3, t.row, t.col)] = t.tw;
        raw[idx(4, t.row, t.col)] = t.th;
    }
    GridPrediction::from_raw(Tensor::new(&[CELL_OUTPUTS, GRID, GRID], raw).expect("shape")).expect("shape")
}
