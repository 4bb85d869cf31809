use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSpec;
use super::{stream_seed, HarnessError};
use crate::correction::{BlockCams, CamStack, REFERENCE_SIZE};
use crate::detector::NoiseSchedule;
use crate::kernel::ops::{matmul, matmul_nt, sigmoid_scalar, softmax_slice};
use crate::kernel::Tensor;

/// One attention block whose maps are captured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureBlock {
    pub resolution: usize,
    /// Per-head multiplier on the planted object logits.
    pub gains: Vec<f32>,
}

/// Magnitudes of the planted logits, in logit units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserParams {
    pub amplitude: f32,
    pub start_logit: f32,
    /// Non-core phrase tokens relative to their core noun.
    pub modifier_ratio: f32,
    pub noise_std: f32,
    /// Weight of the latent-dependent term `z·W_K·(E·W_Q)ᵀ`.
    pub latent_coupling: f32,
    /// Fraction of the way the latent moves toward the attention output per step.
    pub blend: f32,
    /// Edge width of the planted disks, in reference pixels.
    pub softness: f32,
}

impl Default for DenoiserParams {
    fn default() -> Self {
        Self {
            amplitude: 8.0,
            start_logit: 6.0,
            modifier_ratio: 0.6,
            noise_std: 4.0,
            latent_coupling: 4.0,
            blend: 0.15,
            softness: 0.6,
        }
    }
}

/// Synthetic cross-attention generator standing in for a diffusion UNet.
///
/// Conditional logits at noise level `ν = 1 − √ᾱ_t` are
/// `(1−ν)·(gain·planted + κ·z·W_K·(E·W_Q)ᵀ) + ν·σ·ε`, where `planted` lights
/// each object's tokens on its own disk and, scaled by the leak, on every
/// other disk. Unconditional logits are a flat start-token background plus
/// noise. The latent `z` moves toward the attention output each step.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    pub blocks: Vec<CaptureBlock>,
    pub attn_dim: usize,
    pub schedule: NoiseSchedule,
    pub params: DenoiserParams,
    pub seed: u64,
    w_q: Tensor,
    w_k: Tensor,
}

impl Default for ToyDenoiser {
    fn default() -> Self {
        Self::new(0, DenoiserParams::default())
    }
}

/// Random orthogonal `d×d` matrix from Gram–Schmidt on Gaussian columns.
fn orthogonal(d: usize, rng: &mut impl Rng) -> Tensor {
    let rows = gram_schmidt(d, d, rng);
    Tensor::new(&[d, d], rows.into_iter().flatten().collect()).expect("square")
}

/// `n` unit vectors of length `d`, mutually orthogonal while `n ≤ d`.
fn gram_schmidt(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f32>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if i < d {
            for r in &rows {
                let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                for (a, b) in v.iter_mut().zip(r) {
                    *a -= dot * b;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        rows.push(v.iter().map(|a| a / norm).collect());
    }
    rows.into_iter().map(|r| r.into_iter().map(|a| a as f32).collect()).collect()
}

/// Interleaved `H×W×C` resize: integer downsampling averages, upsampling
/// repeats.
pub fn resample_pixels(src: &[f32], from: usize, to: usize, channels: usize) -> Vec<f32> {
    if from == to {
        return src.to_vec();
    }
    let mut out = vec![0.0f32; to * to * channels];
    if from > to && from.is_multiple_of(to) {
        let f = from / to;
        let norm = 1.0 / (f * f) as f32;
        for y in 0..from {
            for x in 0..from {
                let dst = ((y / f) * to + x / f) * channels;
                let s = (y * from + x) * channels;
                for c in 0..channels {
                    out[dst + c] += src[s + c] * norm;
                }
            }
        }
    } else {
        for y in 0..to {
            for x in 0..to {
                let s = ((y * from / to) * from + x * from / to) * channels;
                out[(y * to + x) * channels..][..channels].copy_from_slice(&src[s..s + channels]);
            }
        }
    }
    out
}

impl ToyDenoiser {
    /// Five capture blocks at 16, 32, 16, 8 and 16 pixels, four heads each.
    pub fn new(seed: u64, params: DenoiserParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[seed, 0xb10c]));
        let blocks = [16, 32, 16, 8, 16]
            .into_iter()
            .map(|resolution| CaptureBlock {
                resolution,
                gains: (0..4).map(|_| rng.gen_range(0.7..1.3)).collect(),
            })
            .collect();
        let attn_dim = 16;
        let w_q = orthogonal(attn_dim, &mut rng);
        Self {
            blocks,
            attn_dim,
            schedule: NoiseSchedule::default(),
            params,
            seed,
            w_k: w_q.clone(),
            w_q,
        }
    }

    /// Token embeddings `N×d` (values of the cross-attention).
    pub fn embeddings(&self, tokens: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[self.seed, 0xe3b]));
        let rows = gram_schmidt(tokens, self.attn_dim, &mut rng);
        Tensor::new(&[tokens, self.attn_dim], rows.into_iter().flatten().collect()).expect("embedding shape")
    }

    /// Pure-noise starting latent, `256×d`.
    pub fn initial_latent(&self, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(&[seed, 0x1a7e]));
        let n = REFERENCE_SIZE * REFERENCE_SIZE;
        Tensor::from_fn(&[n, self.attn_dim], |_| rng.sample::<f64, _>(StandardNormal) as f32)
    }

    /// Clean latent for a scene: each disk holds its core noun's embedding.
    pub fn paint_latent(&self, spec: &ScenarioSpec) -> Tensor {
        let e = self.embeddings(spec.channels());
        let (s, d) = (REFERENCE_SIZE, self.attn_dim);
        let mut z = vec![0.0f32; s * s * d];
        for o in &spec.objects {
            let core = o.core_channels();
            for px in 0..s * s {
                if o.distance(px / s, px % s, s) <= o.radius {
                    for k in 0..d {
                        z[px * d + k] = core.iter().map(|&c| e.row(c)[k]).sum::<f32>() / core.len() as f32;
                    }
                }
            }
        }
        Tensor::new(&[s * s, d], z).expect("latent shape")
    }

    /// Noise-free planted logits at one block resolution, `R²×N`.
    fn planted(&self, spec: &ScenarioSpec, resolution: usize) -> Vec<f32> {
        let n = spec.channels();
        let p = &self.params;
        let mut out = vec![0.0f32; resolution * resolution * n];
        let blobs: Vec<Vec<f32>> = spec
            .objects
            .iter()
            .map(|o| {
                (0..resolution * resolution)
                    .map(|px| sigmoid_scalar((o.radius - o.distance(px / resolution, px % resolution, resolution)) / p.softness))
                    .collect()
            })
            .collect();
        for px in 0..resolution * resolution {
            let row = &mut out[px * n..(px + 1) * n];
            row[0] = p.start_logit;
            for (i, o) in spec.objects.iter().enumerate() {
                let other: f32 = blobs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b[px]).sum();
                let core = p.amplitude * (blobs[i][px] + spec.leak * other);
                for w in o.phrase.clone() {
                    let ratio = if o.core.contains(&w) { 1.0 } else { p.modifier_ratio };
                    row[w + 1] = core * ratio;
                }
            }
        }
        out
    }

    /// Logits for every capture block at step `t`, with an optional latent
    /// (`None` leaves out the latent term).
    pub fn cams(&self, spec: &ScenarioSpec, t: usize, latent: Option<&Tensor>) -> Result<CamStack, HarnessError> {
        self.schedule.check(t)?;
        let n = spec.channels();
        let nu = self.schedule.noise_level(t) as f32;
        let clean = 1.0 - nu;
        let sigma = nu * self.params.noise_std;
        let queries = matmul(&self.embeddings(n), &self.w_q)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (bi, block) in self.blocks.iter().enumerate() {
            let r = block.resolution;
            let planted = self.planted(spec, r);
            let latent_term = match latent {
                Some(z) => {
                    z.expect_shape(&[REFERENCE_SIZE * REFERENCE_SIZE, self.attn_dim], "latent")?;
                    let zb = resample_pixels(z.data(), REFERENCE_SIZE, r, self.attn_dim);
                    let keys = matmul(&Tensor::new(&[r * r, self.attn_dim], zb)?, &self.w_k)?;
                    Some(matmul_nt(&keys, &queries)?)
                }
                None => None,
            };
            let heads = block.gains.len();
            let mut cond = Vec::with_capacity(heads * r * r * n);
            let mut uncond = Vec::with_capacity(heads * r * r * n);
            for (h, &gain) in block.gains.iter().enumerate() {
                let mut rc = ChaCha8Rng::seed_from_u64(stream_seed(&[spec.seed, t as u64, bi as u64, h as u64, 0]));
                let mut ru = ChaCha8Rng::seed_from_u64(stream_seed(&[spec.seed, t as u64, bi as u64, h as u64, 1]));
                for (i, &v) in planted.iter().enumerate() {
                    let object = if i % n == 0 { v } else { gain * v };
                    let lat = latent_term
                        .as_ref()
                        .map_or(0.0, |m| self.params.latent_coupling * m.data()[i]);
                    let e: f32 = rc.sample(StandardNormal);
                    cond.push(clean * (object + lat) + sigma * e);
                    let background = if i % n == 0 { self.params.start_logit } else { 0.0 };
                    let e: f32 = ru.sample(StandardNormal);
                    uncond.push(clean * background + sigma * e);
                }
            }
            blocks.push(BlockCams::new(
                Tensor::new(&[heads, r, r, n], cond)?,
                Tensor::new(&[heads, r, r, n], uncond)?,
            )?);
        }
        Ok(CamStack::new(blocks, self.attn_dim)?)
    }

    /// Latent-free maps for a scene at step `t`.
    pub fn simulate_cams(&self, spec: &ScenarioSpec, t: usize) -> Result<CamStack, HarnessError> {
        self.cams(spec, t, None)
    }

    /// `softmax(M/√d)·V` averaged over blocks and heads at reference
    /// resolution, `256×d`.
    pub fn attention_output(&self, stack: &CamStack) -> Result<Tensor, HarnessError> {
        let n = stack.tokens();
        let d = self.attn_dim;
        let values = self.embeddings(n);
        let inv = 1.0 / (stack.attn_dim as f32).sqrt();
        let s = REFERENCE_SIZE;
        let mut acc = vec![0.0f64; s * s * d];
        let mut count = 0;
        for block in &stack.blocks {
            let r = block.height();
            for h in 0..block.heads() {
                let base = h * r * r * n;
                let mut probs = Vec::with_capacity(r * r * n);
                for row in block.cond.data()[base..base + r * r * n].chunks(n) {
                    let scaled: Vec<f32> = row.iter().map(|v| v * inv).collect();
                    probs.extend(softmax_slice(&scaled));
                }
                let out = matmul(&Tensor::new(&[r * r, n], probs)?, &values)?;
                for (a, v) in acc.iter_mut().zip(resample_pixels(out.data(), r, s, d)) {
                    *a += v as f64;
                }
                count += 1;
            }
        }
        let data = acc.into_iter().map(|v| (v / count as f64) as f32).collect();
        Ok(Tensor::new(&[s * s, d], data)?)
    }

    /// `z ← z + β(o − z)`.
    pub fn update_latent(&self, z: &Tensor, output: &Tensor) -> Result<Tensor, HarnessError> {
        let b = self.params.blend;
        Ok(z.zip_map(output, |a, o| a + b * (o - a))?)
    }
}
