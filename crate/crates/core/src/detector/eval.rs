use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::assign::{iou, nms_with_merge, BBox};
use crate::kernel::Tensor;

use super::model::{DetectorWeights, GridPrediction, CELL, GRID, INPUT_SIZE};
use super::{DetectorError, TrainingSample};

/// Default inference confidence cut.
pub const DEFAULT_CONF_THRESHOLD: f32 = 0.3;
pub const MAP_IOU: f32 = 0.5;

/// Boxes from every cell with confidence `>= conf_threshold`, clamped to
/// the frame and labeled with `class_id`.
pub fn decode(pred: &GridPrediction, conf_threshold: f32, class_id: usize) -> Vec<BBox> {
    let mut out = Vec::new();
    for row in 0..GRID {
        for col in 0..GRID {
            let cell = pred.cell(row, col);
            if cell.confidence < conf_threshold {
                continue;
            }
            let cx = (col as f32 + cell.tx) * CELL;
            let cy = (row as f32 + cell.ty) * CELL;
            let w = CELL * cell.tw.clamp(-8.0, 8.0).exp();
            let h = CELL * cell.th.clamp(-8.0, 8.0).exp();
            let b = BBox::new(cx - 0.5 * w, cy - 0.5 * h, w, h, cell.confidence, class_id);
            out.push(b.clamped(INPUT_SIZE as f32));
        }
    }
    out
}

pub fn decode_and_detect(
    weights: &DetectorWeights,
    input: &Tensor,
    conf_threshold: f32,
    class_id: usize,
) -> Result<Vec<BBox>, DetectorError> {
    if !(conf_threshold > 0.0 && conf_threshold < 1.0) {
        return Err(DetectorError::Config(format!("confidence threshold {conf_threshold} outside (0, 1)")));
    }
    Ok(decode(&weights.forward(input)?, conf_threshold, class_id))
}

fn class_of(b: &BBox) -> Option<usize> {
    b.best_class().map(|(id, _)| id)
}

/// Eleven-point interpolated average precision at IoU 0.5 per class,
/// averaged over the classes that occur in `truths`.
///
/// `predictions[i]` and `truths[i]` describe image `i`. A box's class is its
/// highest-scoring object id. The result does not depend on the order of
/// boxes within an image.
pub fn mean_average_precision(predictions: &[Vec<BBox>], truths: &[Vec<BBox>]) -> Result<f64, DetectorError> {
    if truths.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    if predictions.len() != truths.len() {
        return Err(DetectorError::Config(format!(
            "{} prediction lists for {} images",
            predictions.len(),
            truths.len()
        )));
    }
    let classes: BTreeSet<usize> = truths.iter().flatten().filter_map(class_of).collect();
    if classes.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    let aps: Vec<f64> = classes
        .iter()
        .map(|&c| average_precision(predictions, truths, c))
        .collect();
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

fn average_precision(predictions: &[Vec<BBox>], truths: &[Vec<BBox>], class: usize) -> f64 {
    let gts: Vec<Vec<&BBox>> = truths
        .iter()
        .map(|t| t.iter().filter(|b| class_of(b) == Some(class)).collect())
        .collect();
    let total: usize = gts.iter().map(Vec::len).sum();
    let mut dets: Vec<(usize, &BBox)> = predictions
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.iter().filter(|b| class_of(b) == Some(class)).map(move |b| (i, b)))
        .collect();
    dets.sort_by(detection_order);

    let mut matched: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(dets.len());
    for (k, (img, det)) in dets.iter().enumerate() {
        let best = gts[*img]
            .iter()
            .enumerate()
            .filter(|(j, _)| !matched[*img][*j])
            .map(|(j, g)| (j, iou(det, g)))
            .filter(|(_, v)| *v >= MAP_IOU)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((j, _)) = best {
            matched[*img][j] = true;
            tp += 1;
        }
        curve.push((tp as f64 / total as f64, tp as f64 / (k + 1) as f64));
    }
    eleven_point(&curve)
}

/// Confidence descending, then image, then geometry: a total order.
fn detection_order(a: &(usize, &BBox), b: &(usize, &BBox)) -> Ordering {
    b.1.confidence
        .total_cmp(&a.1.confidence)
        .then(a.0.cmp(&b.0))
        .then(a.1.x.total_cmp(&b.1.x))
        .then(a.1.y.total_cmp(&b.1.y))
        .then(a.1.w.total_cmp(&b.1.w))
        .then(a.1.h.total_cmp(&b.1.h))
}

/// Mean over recall levels 0, 0.1, …, 1 of the best precision reached at
/// or beyond that recall. `curve` holds `(recall, precision)` pairs.
pub fn eleven_point(curve: &[(f64, f64)]) -> f64 {
    (0..=10)
        .map(|i| {
            let r = i as f64 / 10.0;
            curve
                .iter()
                .filter(|(rec, _)| *rec >= r - 1e-12)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

/// Options for running the detector over a dataset before scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub conf_threshold: f32,
    pub nms_iou: f32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            conf_threshold: 0.05,
            nms_iou: crate::assign::DEFAULT_NMS_IOU,
        }
    }
}

/// Detections for one sample, post-NMS, labeled with the sample's class.
pub fn detect_sample(weights: &DetectorWeights, sample: &TrainingSample, opts: EvalOptions) -> Result<Vec<BBox>, DetectorError> {
    let class = sample.class_id();
    let boxes = decode_and_detect(weights, &sample.input, opts.conf_threshold, class)?;
    Ok(nms_with_merge(&boxes, opts.nms_iou))
}

pub fn evaluate_map(weights: &DetectorWeights, dataset: &[TrainingSample], opts: EvalOptions) -> Result<f64, DetectorError> {
    if dataset.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    let predictions = dataset
        .iter()
        .map(|s| detect_sample(weights, s, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let truths: Vec<Vec<BBox>> = dataset.iter().map(|s| s.boxes.clone()).collect();
    mean_average_precision(&predictions, &truths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::loss::encode_prediction;

    #[test]
    fn single_confident_cell_decodes_inside_it() {
        let truth = vec![BBox::new(6.0, 2.0, 3.0, 3.0, 1.0, 0)];
        let boxes = decode(&encode_prediction(&truth), 0.3, 4);
        assert_eq!(boxes.len(), 1);
        let (cx, cy) = boxes[0].center();
        assert!((cx - 7.5).abs() < 1e-4 && (cy - 3.5).abs() < 1e-4);
        assert!((boxes[0].w - 3.0).abs() < 1e-4);
        assert_eq!(boxes[0].best_class().unwrap().0, 4);
    }

    #[test]
    fn nothing_above_threshold() {
        let pred = GridPrediction::from_raw(Tensor::full(&[5, 8, 8], -3.0)).unwrap();
        assert!(decode(&pred, 0.3, 0).is_empty());
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let truths = vec![vec![BBox::new(1.0, 1.0, 4.0, 4.0, 1.0, 0)], vec![BBox::new(8.0, 8.0, 3.0, 5.0, 1.0, 1)]];
        assert_eq!(mean_average_precision(&truths, &truths).unwrap(), 1.0);
        assert_eq!(mean_average_precision(&[vec![], vec![]], &truths).unwrap(), 0.0);
        assert!(mean_average_precision(&[], &[]).is_err());
    }

    #[test]
    fn eleven_point_of_half_recall() {
        // one of two objects found at precision 1
        assert!((eleven_point(&[(0.5, 1.0)]) - 6.0 / 11.0).abs() < 1e-12);
    }
}
