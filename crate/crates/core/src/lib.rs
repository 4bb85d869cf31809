//! Detector Guidance: detect objects in cross-attention maps, give each
//! object one box, and rewrite later attention logits so that tokens of one
//! object stop leaking into another object's region.
//!
//! The pieces, in pipeline order:
//! - [`parser`] finds object phrases and their conflicts in a prompt.
//! - [`detector`] is a small grid detector trained on attention maps.
//! - [`assign`] merges duplicate boxes and matches boxes to objects.
//! - [`correction`] segments objects and corrects the logits.
//! - [`harness`] is a toy cross-attention sampler that exhibits mixing.
//! - [`io`] holds the file formats and configuration.
//! - [`kernel`] is the tensor and autodiff layer under all of the above.

pub mod assign;
pub mod correction;
pub mod detector;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod parser;

pub use assign::{BBox, ObjectAssignment};
pub use correction::{CamStack, SegmentationSet, SmoothSchedule};
pub use detector::{DetectorWeights, GridPrediction, TrainingSample};
pub use harness::{GenerationTrace, ScenarioSpec, ToyDenoiser};
pub use kernel::{KernelError, ParamStore, Tensor};
pub use parser::PromptStructure;
