//! Toy cross-attention generator and the guided sampling loop.

mod dataset;
mod denoiser;
mod metric;
mod run;
mod scenario;

use crate::detector::DetectorError;
use crate::kernel::KernelError;
use crate::parser::ParseError;

pub use dataset::{generate_dataset, generate_level, scene_samples, MAX_TRAINING_LEAK, NOISE_LEVELS};
pub use denoiser::{resample_pixels, CaptureBlock, DenoiserParams, ToyDenoiser};
pub use metric::mixing_metric;
pub use run::{detect_objects, run, timesteps, GenerationTrace, RunConfig, StepRecord};
pub use scenario::{ScenarioObject, ScenarioSpec, TOKEN_OFFSET};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("guided sampling needs detector weights")]
    MissingDetector,
    #[error("segmentation set has no non-empty region")]
    EmptySegmentation,
    #[error("{0}")]
    Config(String),
}

/// The 30 two-object prompts of the related-object benchmark.
pub const MRO_PROMPTS: [&str; 30] = [
    "a fluffy sheep and a bare goat",
    "a friendly koala and a watchful kangaroo",
    "a howling wolf and a purring cat",
    "a white cat and a brown dog",
    "a golden retriever and a gray wolf",
    "a regal lion and a sly fox",
    "a striped tiger and a spotted leopard",
    "a wise owl and a nimble squirrel",
    "a wild mustang and a graceful deer",
    "a robust bison and a dainty gazelle",
    "a soft bunny and a spiky porcupine",
    "a swift cheetah and a lumbering bear",
    "a cunning coyote and a timid deer",
    "a towering giraffe and a sturdy elephant",
    "a sprightly hare and a slow-moving tortoise",
    "a spotted hyena and a striped zebra",
    "a fierce falcon and a gentle dove",
    "a swift hummingbird and a perching eagle",
    "a vibrant toucan and a modest pigeon",
    "a chatty parrot and a silent owl",
    "a luminescent jellyfish and a matte sea turtle",
    "a fierce crocodile and a docile manatee",
    "a beautiful butterfly and a fluffy bee",
    "a hovering dragonfly and a perched hummingbird",
    "a wispy dandelion and a dense sunflower",
    "a red apple and a green pear",
    "a ripe peach and a tangy orange",
    "a succulent pineapple and a crisp apple",
    "a rusty robot and a delicate Muppet",
    "a futuristic drone and a traditional kite",
];

/// Folds several integers into one RNG seed (splitmix64 finalizer).
pub fn stream_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}
