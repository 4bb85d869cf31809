//! Independent reference implementations shared by the test targets.

use std::collections::BTreeSet;

use dg_core::correction::{correct_block, SCALE_GUARD, SCALE_MAX, SCALE_MIN};
use dg_core::kernel::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Best total over all injective row→column maps, by enumeration.
pub fn brute_force(scores: &[Vec<f64>]) -> f64 {
    fn go(scores: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == scores.len() {
            return 0.0;
        }
        // The row may also stay unmatched when rows outnumber columns.
        let mut best = if scores.len() > used.len() { go(scores, row + 1, used) } else { f64::NEG_INFINITY };
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(scores[row][c] + go(scores, row + 1, used));
                used[c] = false;
            }
        }
        if best == f64::NEG_INFINITY {
            best = go(scores, row + 1, used);
        }
        best
    }
    let cols = scores.first().map_or(0, Vec::len);
    go(scores, 0, &mut vec![false; cols])
}

pub fn total(scores: &[Vec<f64>], mapping: &[Option<usize>]) -> f64 {
    mapping.iter().enumerate().filter_map(|(r, c)| c.map(|c| scores[r][c])).sum()
}

pub fn injective(mapping: &[Option<usize>]) -> bool {
    let cols: Vec<usize> = mapping.iter().flatten().copied().collect();
    cols.iter().collect::<BTreeSet<_>>().len() == cols.len()
}

/// Integer-valued scores, so totals compare exactly in f64.
pub fn grid_scores(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(0..=1000) as f64).collect())
        .collect()
}

/// Every split of a 256-bin histogram tried in turn, scored by the textbook
/// between-class variance `ω₀·ω₁·(μ₀ − μ₁)²` on bin indices.
pub fn exhaustive_otsu(values: &[f32]) -> f32 {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if hi <= lo {
        return lo;
    }
    let width = (hi as f64 - lo as f64) / 256.0;
    let bins: Vec<usize> = values
        .iter()
        .map(|&v| (((v as f64 - lo as f64) / (hi as f64 - lo as f64) * 256.0).floor() as usize).min(255))
        .collect();
    let n = values.len() as f64;
    let (mut best_k, mut best) = (0usize, 0.0f64);
    for k in 0..256 {
        let (below, above): (Vec<usize>, Vec<usize>) = bins.iter().partition(|&&b| b < k);
        if below.is_empty() || above.is_empty() {
            continue;
        }
        let mean = |c: &[usize]| c.iter().sum::<usize>() as f64 / c.len() as f64;
        let (w0, w1) = (below.len() as f64 / n, above.len() as f64 / n);
        let score = w0 * w1 * (mean(&below) - mean(&above)).powi(2);
        if score > best * (1.0 + 1e-12) {
            best = score;
            best_k = k;
        }
    }
    (lo as f64 + best_k as f64 * width) as f32
}

pub fn random_values(rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = rng.gen_range(1..300);
    match rng.gen_range(0..3) {
        // Continuous values.
        0 => (0..n).map(|_| rng.gen_range(-5.0f32..5.0)).collect(),
        // Few distinct levels, many ties.
        1 => (0..n).map(|_| rng.gen_range(0..6) as f32 * 0.25).collect(),
        // Two separated clumps.
        _ => (0..n)
            .map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.0f32..0.1) } else { rng.gen_range(0.8f32..1.0) })
            .collect(),
    }
}

pub struct Block {
    pub cond: Tensor,
    pub uncond: Tensor,
    pub mask: Tensor,
}

/// Random `heads×H×W×N` logits with per-row maxima in `[0.1, 1]` so that
/// every max ratio stays inside the clamp range.
pub fn random_block(rng: &mut ChaCha8Rng, mask_prob: f64) -> Block {
    let heads = rng.gen_range(1..4);
    let side = [4, 8, 16][rng.gen_range(0..3)];
    let n = rng.gen_range(2..8);
    let logits = |rng: &mut ChaCha8Rng| {
        let mut data: Vec<f32> = (0..heads * side * side * n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        for row in data.chunks_mut(n) {
            let k = rng.gen_range(0..n);
            row[k] = rng.gen_range(0.1f32..1.0);
            let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            if m > 1.0 {
                row.iter_mut().for_each(|v| *v /= m);
            }
        }
        Tensor::new(&[heads, side, side, n], data).unwrap()
    };
    let cond = logits(rng);
    let uncond = logits(rng);
    let mask = Tensor::from_fn(&[side, side, n], |_| rng.gen_bool(mask_prob) as u8 as f32);
    Block { cond, uncond, mask }
}

pub fn row_max(row: &[f32]) -> f32 {
    row.iter().copied().fold(f32::NEG_INFINITY, f32::max)
}

/// Correction identities on `trials` random blocks: mask zero is the identity,
/// mask one substitutes and rescales, `s = 0` and `s = 1` are exact, entries
/// come from the right source, and row maxima are restored.
pub fn correction_identities(seed: u64, trials: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..trials {
        let b = random_block(&mut rng, 0.3);
        let n = *b.cond.shape().last().unwrap();
        let mask_rows = b.mask.len() / n;

        // Mask zero: identity for any s.
        let zero = Tensor::zeros(b.mask.shape());
        for s in [0.0, 0.3, 1.0] {
            let out = correct_block(&b.cond, &b.uncond, &zero, s).unwrap();
            assert_eq!(out.logits, b.cond, "trial {trial}, s {s}");
        }

        // Mask one: every token substituted, then rescaled row by row.
        let ones = Tensor::full(b.mask.shape(), 1.0);
        let out = correct_block(&b.cond, &b.uncond, &ones, 1.0).unwrap();
        for (r, (got, uc)) in out.logits.data().chunks(n).zip(b.uncond.data().chunks(n)).enumerate() {
            let scale = out.scales[r];
            assert!(got.iter().zip(uc).all(|(&g, &u)| g == u * scale), "trial {trial} row {r}");
        }

        // Endpoint and locality: s = 0 is the identity, s = 1 is CAM₂, whose
        // entries come from cond where mask = 0 and from uncond where mask = 1.
        assert_eq!(correct_block(&b.cond, &b.uncond, &b.mask, 0.0).unwrap().logits, b.cond);
        let full = correct_block(&b.cond, &b.uncond, &b.mask, 1.0).unwrap();
        let rows = b.cond.data().chunks(n).zip(b.uncond.data().chunks(n)).zip(full.logits.data().chunks(n));
        for (r, ((c0, uc), got)) in rows.enumerate() {
            let m = &b.mask.data()[(r % mask_rows) * n..][..n];
            let scale = full.scales[r];
            for p in 0..n {
                let cam1 = if m[p] == 1.0 { uc[p] } else { c0[p] };
                let expected = if scale == 1.0 { cam1 } else { cam1 * scale };
                assert_eq!(got[p], expected, "trial {trial} row {r} token {p}");
            }
            // Max restoration where both maxima clear the guard.
            let max0 = row_max(c0);
            let cam1_max = (0..n).map(|p| if m[p] == 1.0 { uc[p] } else { c0[p] }).fold(f32::NEG_INFINITY, f32::max);
            if max0 > SCALE_GUARD && cam1_max > SCALE_GUARD && (SCALE_MIN..=SCALE_MAX).contains(&(max0 / cam1_max)) {
                assert!((SCALE_MIN..=SCALE_MAX).contains(&scale));
                assert!((row_max(got) - max0).abs() <= 1e-5, "trial {trial} row {r}: {} vs {max0}", row_max(got));
            }
        }

        // Intermediate s blends CAM₀ and CAM₂ linearly.
        let s = rng.gen_range(0.05f32..0.95);
        let mid = correct_block(&b.cond, &b.uncond, &b.mask, s).unwrap();
        for ((&m, &c0), &c2) in mid.logits.data().iter().zip(b.cond.data()).zip(full.logits.data()) {
            assert!((m - (s * c2 + (1.0 - s) * c0)).abs() <= 1e-5);
        }
    }
}

