use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::denoiser::ToyDenoiser;
use super::scenario::ScenarioSpec;
use super::{stream_seed, HarnessError};
use crate::detector::{noise_latent, TrainingSample};

/// Noise levels used for detector data and per-level evaluation.
pub const NOISE_LEVELS: [usize; 5] = [0, 200, 400, 600, 800];

/// Largest leak used when generating detector data.
pub const MAX_TRAINING_LEAK: f32 = 0.6;

/// Samples from one scene at step `t`: the clean painted latent is noised
/// to `t`, the denoiser's maps are captured, and every object yields one
/// sample (its core-noun maps, its true box labeled by core channel).
pub fn scene_samples(denoiser: &ToyDenoiser, spec: &ScenarioSpec, t: usize) -> Result<Vec<TrainingSample>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[spec.seed, t as u64, 0x2e7]));
    let z0 = denoiser.paint_latent(spec);
    let zt = noise_latent(&z0, t, &denoiser.schedule, &mut rng)?;
    let stack = denoiser.cams(spec, t, Some(&zt))?;
    Ok(spec
        .objects
        .iter()
        .map(|o| {
            let core = o.core_channels();
            TrainingSample {
                input: stack.detector_planes(&core),
                boxes: vec![o.truth_box(core[0])],
                t,
            }
        })
        .collect())
}

/// `count` samples at noise level `t`, reproducible from `seed`.
pub fn generate_level(denoiser: &ToyDenoiser, count: usize, t: usize, seed: u64) -> Result<Vec<TrainingSample>, HarnessError> {
    let mut out = Vec::with_capacity(count);
    let mut scene = 0u64;
    while out.len() < count {
        let scene_seed = stream_seed(&[seed, t as u64, scene]);
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
        let objects = if rng.gen_bool(0.25) { 1 } else { 2 };
        let leak = rng.gen_range(0.0..MAX_TRAINING_LEAK);
        let spec = ScenarioSpec::random(scene_seed, objects, leak);
        out.extend(scene_samples(denoiser, &spec, t)?);
        scene += 1;
    }
    out.truncate(count);
    Ok(out)
}

/// `count` samples for each noise level, grouped by level.
pub fn generate_dataset(
    denoiser: &ToyDenoiser,
    count: usize,
    levels: &[usize],
    seed: u64,
) -> Result<Vec<Vec<TrainingSample>>, HarnessError> {
    levels.iter().map(|&t| generate_level(denoiser, count, t, seed)).collect()
}
