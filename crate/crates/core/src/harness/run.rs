use serde::{Deserialize, Serialize};

use super::denoiser::ToyDenoiser;
use super::metric::mixing_metric;
use super::scenario::ScenarioSpec;
use super::HarnessError;
use crate::assign::{assign, nms_with_merge, BBox, ObjectAssignment, DEFAULT_NMS_IOU};
use crate::correction::{
    correct_stack, segment, CamStack, CorrectedStack, CorrectionRecord, SegmentationSet, SmoothSchedule, TokenRoles,
};
use crate::detector::{decode_and_detect, DetectorWeights, DEFAULT_CONF_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Number of denoising steps taken between `T` and 1.
    pub sampling_steps: usize,
    /// Corrections apply at steps with `t <= transition`.
    pub transition: usize,
    /// Boxes are recomputed on every `cache_stride`-th detection.
    pub cache_stride: usize,
    pub smooth: SmoothSchedule,
    pub nms_iou: f32,
    pub conf_threshold: f32,
    /// Keep raw and corrected stacks in the trace (large).
    pub keep_stacks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sampling_steps: 50,
            transition: 800,
            cache_stride: 3,
            smooth: SmoothSchedule::default(),
            nms_iou: DEFAULT_NMS_IOU,
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            keep_stacks: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, max_t: usize) -> Result<(), HarnessError> {
        if self.cache_stride == 0 {
            return Err(HarnessError::Config("cache stride must be at least 1".into()));
        }
        if self.sampling_steps == 0 || self.sampling_steps > max_t {
            return Err(HarnessError::Config(format!(
                "sampling steps must lie in [1, {max_t}], got {}",
                self.sampling_steps
            )));
        }
        if self.transition > max_t {
            return Err(HarnessError::Config(format!("transition {} above T = {max_t}", self.transition)));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(HarnessError::Config(format!("NMS IoU {} outside (0, 1)", self.nms_iou)));
        }
        if !(self.conf_threshold > 0.0 && self.conf_threshold < 1.0) {
            return Err(HarnessError::Config(format!(
                "confidence threshold {} outside (0, 1)",
                self.conf_threshold
            )));
        }
        Ok(())
    }
}

/// `steps` integer timesteps evenly spaced from `max_t` down to 1.
pub fn timesteps(max_t: usize, steps: usize) -> Vec<usize> {
    if steps <= 1 {
        return vec![max_t];
    }
    let span = (max_t - 1) as f64;
    (0..steps)
        .map(|i| (max_t as f64 - i as f64 * span / (steps - 1) as f64).round() as usize)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Blend weight when this step's maps were corrected.
    pub s: Option<f32>,
    /// Whether boxes were recomputed at this step (rather than reused).
    pub refreshed: bool,
    pub boxes: Vec<BBox>,
    pub assignment: Option<ObjectAssignment>,
    pub segmentation: Option<SegmentationSet>,
    /// Mixing of the maps actually used at this step, over the planted regions.
    pub mixing: f64,
    pub corrections: Vec<CorrectionRecord>,
    #[serde(skip)]
    pub raw: Option<CamStack>,
    #[serde(skip)]
    pub corrected: Option<CorrectedStack>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub seed: u64,
    pub use_dg: bool,
    pub steps: Vec<StepRecord>,
    /// Maps used at the last step (corrected when guided).
    #[serde(skip)]
    pub final_stack: Option<CamStack>,
}

impl GenerationTrace {
    pub fn final_mixing(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.mixing)
    }

    /// Segmentation computed at the last step that ran detection.
    pub fn final_segmentation(&self) -> Option<&SegmentationSet> {
        self.steps.iter().rev().find_map(|s| s.segmentation.as_ref())
    }

    pub fn corrected_steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.s.is_some())
    }

    /// One JSON object per step.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Runs the detector on every object's core-noun maps, merges duplicates
/// and assigns one box per object.
pub fn detect_objects(
    weights: &DetectorWeights,
    stack: &CamStack,
    roles: &TokenRoles,
    conf_threshold: f32,
    nms_iou: f32,
) -> Result<(Vec<BBox>, ObjectAssignment), HarnessError> {
    let mut boxes = Vec::new();
    for object in &roles.objects {
        let input = stack.detector_planes(&object.core_channels);
        boxes.extend(decode_and_detect(weights, &input, conf_threshold, object.object_id)?);
    }
    let survivors = nms_with_merge(&boxes, nms_iou);
    let assignment = assign(&survivors, &roles.object_ids());
    Ok((survivors, assignment))
}

/// One sampling trajectory, with or without guidance.
///
/// Steps run from `T` to 1. Once `t` is at or below the transition, the
/// step's maps are corrected with the segmentation found at the previous
/// step. Detection starts one step before the first corrected step so that
/// segmentation is ready; boxes are refreshed every `cache_stride`
/// detections and thresholds every step.
pub fn run(
    denoiser: &ToyDenoiser,
    spec: &ScenarioSpec,
    config: &RunConfig,
    detector: Option<&DetectorWeights>,
    use_dg: bool,
) -> Result<GenerationTrace, HarnessError> {
    config.validate(denoiser.schedule.steps)?;
    spec.validate()?;
    let detector = match (use_dg, detector) {
        (true, None) => return Err(HarnessError::MissingDetector),
        (_, d) => d,
    };
    let roles = spec.roles();
    let truth = spec.truth_segmentation();
    let ts = timesteps(denoiser.schedule.steps, config.sampling_steps);

    let mut z = denoiser.initial_latent(spec.seed);
    let mut previous: Option<SegmentationSet> = None;
    let mut cached: Option<(Vec<BBox>, ObjectAssignment)> = None;
    let mut detections = 0usize;
    let mut corrected_steps = 0usize;
    let mut steps = Vec::with_capacity(ts.len());
    let mut final_stack = None;

    for (i, &t) in ts.iter().enumerate() {
        let raw = denoiser.cams(spec, t, Some(&z))?;
        let mut record = StepRecord {
            t,
            ..Default::default()
        };

        let mut corrected = None;
        if use_dg && t <= config.transition {
            if let Some(seg) = &previous {
                let s = config.smooth.ratio(corrected_steps);
                let c = correct_stack(&raw, seg, &roles, s)?;
                record.corrections = c.records(t, s, seg);
                record.s = Some(s);
                corrected_steps += 1;
                corrected = Some(c);
            }
        }

        let next_active = ts.get(i + 1).is_some_and(|&tn| tn <= config.transition);
        if let Some(weights) = detector.filter(|_| use_dg && (t <= config.transition || next_active)) {
            let refresh = cached.is_none() || detections.is_multiple_of(config.cache_stride);
            if refresh {
                cached = Some(detect_objects(weights, &raw, &roles, config.conf_threshold, config.nms_iou)?);
            }
            detections += 1;
            let (boxes, assignment) = cached.as_ref().expect("set above");
            let seg = segment(&raw.reference(), assignment, &roles)?;
            record.refreshed = refresh;
            record.boxes = boxes.clone();
            record.assignment = Some(assignment.clone());
            record.segmentation = Some(seg.clone());
            previous = Some(seg);
        }

        let effective = corrected.as_ref().map_or(&raw, |c| &c.stack);
        record.mixing = mixing_metric(effective, &truth, &roles)?;
        let output = denoiser.attention_output(effective)?;
        z = denoiser.update_latent(&z, &output)?;

        if i + 1 == ts.len() {
            final_stack = Some(effective.clone());
        }
        if config.keep_stacks {
            record.raw = Some(raw);
            record.corrected = corrected;
        }
        steps.push(record);
    }
    Ok(GenerationTrace {
        seed: spec.seed,
        use_dg,
        steps,
        final_stack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timesteps_are_strictly_decreasing() {
        let ts = timesteps(1000, 50);
        assert_eq!(ts.len(), 50);
        assert_eq!((ts[0], ts[49]), (1000, 1));
        assert!(ts.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(timesteps(1000, 1), vec![1000]);
    }

    #[test]
    fn baseline_needs_no_detector_and_never_corrects() {
        let d = ToyDenoiser::default();
        let spec = ScenarioSpec::two_object(3, 0.6);
        let cfg = RunConfig {
            sampling_steps: 10,
            keep_stacks: true,
            ..RunConfig::default()
        };
        let trace = run(&d, &spec, &cfg, None, false).unwrap();
        assert_eq!(trace.steps.len(), 10);
        assert!(trace.steps.iter().all(|s| s.s.is_none() && s.corrected.is_none() && s.segmentation.is_none()));
        assert!(trace.final_mixing() > 0.0 && trace.final_mixing() < 1.0);
        assert_eq!(run(&d, &spec, &cfg, None, true).unwrap_err(), HarnessError::MissingDetector);
    }

    #[test]
    fn zero_cache_stride_is_rejected() {
        let d = ToyDenoiser::default();
        let cfg = RunConfig {
            cache_stride: 0,
            ..RunConfig::default()
        };
        assert!(run(&d, &ScenarioSpec::two_object(1, 0.6), &cfg, None, false).is_err());
    }
}
