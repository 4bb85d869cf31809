//! Grid detector over per-object attention maps: forward pass, loss,
//! training, decoding and mAP.

mod eval;
mod loss;
mod model;
mod schedule;
mod train;

use serde::{Deserialize, Serialize};

use crate::assign::BBox;
use crate::kernel::{KernelError, Tensor};

pub use eval::{
    decode, decode_and_detect, detect_sample, eleven_point, evaluate_map, mean_average_precision, EvalOptions,
    DEFAULT_CONF_THRESHOLD, MAP_IOU,
};
pub use loss::{encode_prediction, encode_targets, loss, loss_with_grad, CellTarget, LossParts, BOX_WEIGHT};
pub use model::{
    Architecture, CellPrediction, DetectorWeights, GridPrediction, CELL, CELL_OUTPUTS, GRID, INPUT_CHANNELS,
    INPUT_SIZE,
};
pub use schedule::{noise_latent, NoiseSchedule};
pub use train::{
    augment, crop_resize_box, crop_resize_input, hflip_input, sample_gradients, train, TrainConfig, TrainOutcome,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DetectorError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("training diverged at step {step}")]
    Divergence { step: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("timestep {t} outside [0, {max}]")]
    Timestep { t: usize, max: usize },
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("{0}")]
    Config(String),
}

/// One detector input with its truth boxes and the noise level it was
/// captured at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    #[serde(skip, default = "empty_input")]
    pub input: Tensor,
    pub boxes: Vec<BBox>,
    pub t: usize,
}

fn empty_input() -> Tensor {
    Tensor::zeros(&[INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE])
}

impl TrainingSample {
    /// Class of the first truth box (0 when there is none).
    pub fn class_id(&self) -> usize {
        self.boxes.first().and_then(|b| b.best_class()).map_or(0, |(id, _)| id)
    }
}
