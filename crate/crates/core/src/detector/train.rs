use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assign::BBox;
use crate::kernel::{AdamW, Tape, Tensor};

use super::loss::loss_with_grad;
use super::model::{DetectorWeights, GridPrediction, INPUT_SIZE};
use super::{DetectorError, TrainingSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 0.01,
            seed: 0,
            augment: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: DetectorWeights,
    /// Mean per-sample loss of each step's batch.
    pub losses: Vec<f64>,
}

/// Mirror every channel left-right.
pub fn hflip_input(input: &Tensor) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    Tensor::from_fn(&[c, h, w], |i| {
        let (plane, rem) = (i / (h * w), i % (h * w));
        let (y, x) = (rem / w, rem % w);
        input.data()[plane * h * w + y * w + (w - 1 - x)]
    })
}

/// Crop the square `[ox, ox+size) × [oy, oy+size)` and resize it back to
/// the full plane with bilinear sampling (pixel-center aligned).
pub fn crop_resize_input(input: &Tensor, ox: usize, oy: usize, size: usize) -> Tensor {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let scale = size as f32 / w as f32;
    let sample = |plane: &[f32], y: f32, x: f32| -> f32 {
        let y = y.clamp(0.0, (h - 1) as f32);
        let x = x.clamp(0.0, (w - 1) as f32);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (y - y0 as f32, x - x0 as f32);
        let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
        let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    };
    Tensor::from_fn(&[c, h, w], |i| {
        let (p, rem) = (i / (h * w), i % (h * w));
        let (y, x) = (rem / w, rem % w);
        let sy = oy as f32 + (y as f32 + 0.5) * scale - 0.5;
        let sx = ox as f32 + (x as f32 + 0.5) * scale - 0.5;
        sample(input.plane(p), sy, sx)
    })
}

pub fn crop_resize_box(b: &BBox, ox: usize, oy: usize, size: usize) -> BBox {
    let k = INPUT_SIZE as f32 / size as f32;
    BBox {
        x: (b.x - ox as f32) * k,
        y: (b.y - oy as f32) * k,
        w: b.w * k,
        h: b.h * k,
        ..b.clone()
    }
    .clamped(INPUT_SIZE as f32)
}

/// Random flip, brightness scale and box-preserving crop-and-resize.
pub fn augment(sample: &TrainingSample, rng: &mut impl Rng) -> TrainingSample {
    let frame = INPUT_SIZE as f32;
    let mut input = sample.input.clone();
    let mut boxes = sample.boxes.clone();
    if rng.gen_bool(0.5) {
        input = hflip_input(&input);
        boxes = boxes.iter().map(|b| b.hflip(frame)).collect();
    }
    let gain: f32 = rng.gen_range(0.8..1.2);
    input = input.map(|v| v * gain);
    if rng.gen_bool(0.5) {
        let size = rng.gen_range(12..=INPUT_SIZE);
        // keep every box whole inside the crop
        let lo_x = boxes.iter().map(|b| (b.x + b.w).ceil() as i64 - size as i64).max().unwrap_or(0).max(0);
        let hi_x = boxes.iter().map(|b| b.x.floor() as i64).min().unwrap_or(0).min((INPUT_SIZE - size) as i64);
        let lo_y = boxes.iter().map(|b| (b.y + b.h).ceil() as i64 - size as i64).max().unwrap_or(0).max(0);
        let hi_y = boxes.iter().map(|b| b.y.floor() as i64).min().unwrap_or(0).min((INPUT_SIZE - size) as i64);
        if lo_x <= hi_x && lo_y <= hi_y {
            let ox = rng.gen_range(lo_x..=hi_x) as usize;
            let oy = rng.gen_range(lo_y..=hi_y) as usize;
            input = crop_resize_input(&input, ox, oy, size);
            boxes = boxes.iter().map(|b| crop_resize_box(b, ox, oy, size)).collect();
        }
    }
    TrainingSample {
        input,
        boxes,
        t: sample.t,
    }
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients(weights: &DetectorWeights, sample: &TrainingSample) -> Result<(f64, Vec<Tensor>), DetectorError> {
    let mut tape = Tape::new();
    let (leaves, out) = weights.forward_tape(&mut tape, &sample.input)?;
    let pred = GridPrediction::from_raw(tape.value(out).clone())?;
    let (parts, grad) = loss_with_grad(&pred, &sample.boxes);
    let root = tape.external_scalar(out, parts.total as f32, grad)?;
    let mut grads = tape.backward(root)?;
    let per_param = leaves
        .iter()
        .zip(weights.store.params())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
        .collect();
    Ok((parts.total, per_param))
}

/// Minibatch AdamW with seeded epoch shuffling and augmentation.
pub fn train(config: &TrainConfig, dataset: &[TrainingSample], init: DetectorWeights) -> Result<TrainOutcome, DetectorError> {
    let mut weights = init;
    let mut losses = Vec::with_capacity(config.steps);
    if config.steps == 0 {
        return Ok(TrainOutcome { weights, losses });
    }
    if dataset.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(DetectorError::Config("batch size must be positive".into()));
    }
    let opt = AdamW::new(config.lr, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len();

    for step in 0..config.steps {
        let mut acc: Vec<Tensor> = weights.store.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        let mut batch_loss = 0.0;
        for _ in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let base = &dataset[order[cursor]];
            cursor += 1;
            let sample = if config.augment { augment(base, &mut rng) } else { base.clone() };
            let (l, grads) = sample_gradients(&weights, &sample).map_err(|e| match e {
                DetectorError::Kernel(_) => DetectorError::Divergence { step },
                other => other,
            })?;
            batch_loss += l;
            for (a, g) in acc.iter_mut().zip(&grads) {
                a.add_assign(g)?;
            }
        }
        let mean = batch_loss / config.batch_size as f64;
        if !mean.is_finite() {
            return Err(DetectorError::Divergence { step });
        }
        let inv = 1.0 / config.batch_size as f32;
        let acc: Vec<Tensor> = acc.iter().map(|g| g.map(|v| v * inv)).collect();
        weights
            .store
            .adamw_step(&acc, &opt)
            .map_err(|_| DetectorError::Divergence { step })?;
        losses.push(mean);
    }
    Ok(TrainOutcome { weights, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::loss::loss;
    use crate::detector::model::Architecture;

    fn sample() -> TrainingSample {
        TrainingSample {
            input: Tensor::from_fn(&[20, 16, 16], |i| ((i * 31) % 17) as f32 / 17.0),
            boxes: vec![BBox::new(3.0, 5.0, 4.0, 6.0, 1.0, 2)],
            t: 0,
        }
    }

    #[test]
    fn flip_commutes_with_loss() {
        // the all-zero prediction is mirror symmetric
        let s = sample();
        let flipped = TrainingSample {
            input: hflip_input(&s.input),
            boxes: s.boxes.iter().map(|b| b.hflip(16.0)).collect(),
            t: 0,
        };
        assert_eq!(hflip_input(&flipped.input), s.input);
        let pred = GridPrediction::from_raw(Tensor::zeros(&[5, 8, 8])).unwrap();
        assert!((loss(&pred, &s.boxes).total - loss(&pred, &flipped.boxes).total).abs() < 1e-5);
    }

    #[test]
    fn full_crop_is_identity() {
        let s = sample();
        assert_eq!(crop_resize_input(&s.input, 0, 0, 16), s.input);
        assert_eq!(crop_resize_box(&s.boxes[0], 0, 0, 16), s.boxes[0]);
    }

    #[test]
    fn augmented_boxes_stay_valid() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = augment(&s, &mut rng);
            for b in &a.boxes {
                assert!(b.w > 0.0 && b.h > 0.0);
                assert!(b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= 16.0 && b.y + b.h <= 16.0);
            }
        }
    }

    #[test]
    fn zero_steps_returns_init() {
        let init = DetectorWeights::init(Architecture::default(), 1);
        let out = train(&TrainConfig { steps: 0, ..TrainConfig::default() }, &[], init.clone()).unwrap();
        assert_eq!(out.weights, init);
        assert!(out.losses.is_empty());
    }
}
