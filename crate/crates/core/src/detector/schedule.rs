use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::DetectorError;
use crate::kernel::Tensor;

/// Cosine cumulative noise schedule over `t ∈ [0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub offset: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            steps: 1000,
            offset: 0.008,
        }
    }
}

impl NoiseSchedule {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    fn f(&self, t: usize) -> f64 {
        let x = (t as f64 / self.steps as f64 + self.offset) / (1.0 + self.offset);
        (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
    }

    /// `ᾱ_t`, non-increasing from 1 at `t = 0` to 0 at `t = T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            return 1.0;
        }
        if t >= self.steps {
            return 0.0;
        }
        (self.f(t) / self.f(0)).clamp(0.0, 1.0)
    }

    /// Weight of the noise component in map space, `1 − √ᾱ_t`.
    pub fn noise_level(&self, t: usize) -> f64 {
        1.0 - self.alpha_bar(t).sqrt()
    }

    pub fn check(&self, t: usize) -> Result<(), DetectorError> {
        if t > self.steps {
            return Err(DetectorError::Timestep { t, max: self.steps });
        }
        Ok(())
    }
}

/// `z_t = √ᾱ_t·z₀ + √(1−ᾱ_t)·ε` with `ε` drawn from `rng`.
pub fn noise_latent(z0: &Tensor, t: usize, schedule: &NoiseSchedule, rng: &mut impl Rng) -> Result<Tensor, DetectorError> {
    schedule.check(t)?;
    let a = schedule.alpha_bar(t);
    if a == 1.0 {
        return Ok(z0.clone());
    }
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(Tensor::from_fn(z0.shape(), |i| {
        let e: f64 = rng.sample(StandardNormal);
        (sa * z0.data()[i] as f64 + sn * e) as f32
    }))
}
