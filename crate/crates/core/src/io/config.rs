use std::path::{Path, PathBuf};

use serde::Serialize;

use super::IoError;
use crate::correction::SmoothSchedule;
use crate::detector::{Architecture, TrainConfig};
use crate::harness::{RunConfig, NOISE_LEVELS};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "DG_SEED";

/// Everything a command can be configured with. Read from `key = value`
/// lines; `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub seed: u64,
    pub max_t: usize,
    pub sampling_steps: usize,
    pub transition: usize,
    pub cache_stride: usize,
    pub smooth: Vec<f32>,
    pub nms_iou: f32,
    pub conf_threshold: f32,
    pub leak: f32,
    pub runs: usize,
    pub train_steps: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub architecture: String,
    pub samples_per_level: usize,
    pub noise_levels: Vec<usize>,
    pub dataset_dir: PathBuf,
    pub weights: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        let run = RunConfig::default();
        let train = TrainConfig::default();
        Self {
            seed: 0,
            max_t: 1000,
            sampling_steps: run.sampling_steps,
            transition: run.transition,
            cache_stride: run.cache_stride,
            smooth: run.smooth.ratios().to_vec(),
            nms_iou: run.nms_iou,
            conf_threshold: run.conf_threshold,
            leak: 0.6,
            runs: 100,
            train_steps: train.steps,
            batch_size: train.batch_size,
            lr: train.lr,
            weight_decay: train.weight_decay,
            architecture: "compact".into(),
            samples_per_level: 1000,
            noise_levels: NOISE_LEVELS.to_vec(),
            dataset_dir: "data".into(),
            weights: "detector.dgw".into(),
            out_dir: "out".into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, IoError> {
    value
        .parse()
        .map_err(|_| IoError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, IoError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| IoError::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| IoError::Config(format!("line {}: {e}", no + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IoError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), IoError> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "T" | "max_t" => self.max_t = parse_num(key, value)?,
            "sampling_steps" => self.sampling_steps = parse_num(key, value)?,
            "transition" => self.transition = parse_num(key, value)?,
            "cache_stride" => self.cache_stride = parse_num(key, value)?,
            "smooth" => self.smooth = parse_list(key, value)?,
            "nms_iou" => self.nms_iou = parse_num(key, value)?,
            "conf_threshold" => self.conf_threshold = parse_num(key, value)?,
            "leak" => self.leak = parse_num(key, value)?,
            "runs" => self.runs = parse_num(key, value)?,
            "train_steps" => self.train_steps = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "architecture" => self.architecture = value.to_string(),
            "samples_per_level" => self.samples_per_level = parse_num(key, value)?,
            "noise_levels" => self.noise_levels = parse_list(key, value)?,
            "dataset_dir" => self.dataset_dir = value.into(),
            "weights" => self.weights = value.into(),
            "out_dir" => self.out_dir = value.into(),
            other => return Err(IoError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies the seed override from the environment value, if present.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), IoError> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| IoError::Config(format!("{SEED_ENV}: cannot parse {v:?}")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let fail = |m: String| Err(IoError::Config(m));
        if self.max_t == 0 {
            return fail("T must be positive".into());
        }
        if self.transition > self.max_t {
            return fail(format!("transition {} exceeds T = {}", self.transition, self.max_t));
        }
        if self.sampling_steps == 0 || self.sampling_steps > self.max_t {
            return fail(format!("sampling_steps must lie in [1, {}]", self.max_t));
        }
        if self.cache_stride == 0 {
            return fail("cache_stride must be at least 1".into());
        }
        SmoothSchedule::new(self.smooth.clone()).map_err(IoError::Config)?;
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return fail(format!("nms_iou {} outside (0, 1)", self.nms_iou));
        }
        if !(self.conf_threshold > 0.0 && self.conf_threshold < 1.0) {
            return fail(format!("conf_threshold {} outside (0, 1)", self.conf_threshold));
        }
        if !(0.0..=1.0).contains(&self.leak) {
            return fail(format!("leak {} outside [0, 1]", self.leak));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return fail("lr must be positive and weight_decay non-negative".into());
        }
        if let Some(t) = self.noise_levels.iter().find(|&&t| t > self.max_t) {
            return fail(format!("noise level {t} exceeds T = {}", self.max_t));
        }
        self.arch()?;
        Ok(())
    }

    pub fn arch(&self) -> Result<Architecture, IoError> {
        match self.architecture.as_str() {
            "compact" => Ok(Architecture::default()),
            "full" => Ok(Architecture::full()),
            other => Err(IoError::Config(format!("architecture must be compact or full, got {other:?}"))),
        }
    }

    pub fn run_config(&self) -> Result<RunConfig, IoError> {
        Ok(RunConfig {
            sampling_steps: self.sampling_steps,
            transition: self.transition,
            cache_stride: self.cache_stride,
            smooth: SmoothSchedule::new(self.smooth.clone()).map_err(IoError::Config)?,
            nms_iou: self.nms_iou,
            conf_threshold: self.conf_threshold,
            keep_stacks: false,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.train_steps,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            seed: self.seed,
            augment: true,
        }
    }
}
