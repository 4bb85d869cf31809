use std::cmp::Ordering;

pub const OTSU_BINS: usize = 256;

/// Histogram bin of `v` for a 256-bin histogram spanning `[min, max]`.
pub fn otsu_bin(v: f32, min: f32, max: f32) -> usize {
    let range = max as f64 - min as f64;
    if range <= 0.0 {
        return 0;
    }
    let b = ((v as f64 - min as f64) / range * OTSU_BINS as f64).floor();
    (b.max(0.0) as usize).min(OTSU_BINS - 1)
}

/// Lower edge of bin `k`.
pub fn otsu_bin_edge(k: usize, min: f32, max: f32) -> f32 {
    (min as f64 + k as f64 * (max as f64 - min as f64) / OTSU_BINS as f64) as f32
}

/// Between-class variance of splitting at bin `k`, up to the constant
/// factor `1/N²`, as an exact fraction `num / den`.
///
/// With `n0, s0` the count and bin-index sum below `k` (and `n1, s1` above),
/// `σ_b² · N² = (n0·s1 − n1·s0)² / (n0·n1)`.
pub fn split_score(n0: u64, s0: u64, n1: u64, s1: u64) -> (u128, u128) {
    if n0 == 0 || n1 == 0 {
        return (0, 1);
    }
    let diff = (n0 as i128 * s1 as i128 - n1 as i128 * s0 as i128).unsigned_abs();
    (diff * diff, n0 as u128 * n1 as u128)
}

/// Compares `a.0/a.1` with `b.0/b.1` without rounding, falling back to
/// floating point only if the cross products overflow.
pub fn compare_fractions(a: (u128, u128), b: (u128, u128)) -> Ordering {
    match (a.0.checked_mul(b.1), b.0.checked_mul(a.1)) {
        (Some(l), Some(r)) => l.cmp(&r),
        _ => (a.0 as f64 / a.1 as f64).total_cmp(&(b.0 as f64 / b.1 as f64)),
    }
}

/// Otsu threshold over a 256-bin histogram of `values` spanning their range.
///
/// Returns the lower edge of the first bin of the upper class, i.e. values
/// `>= threshold` form the foreground. Ties between candidate splits go to
/// the lowest bin; when every value is equal the threshold is that value.
pub fn otsu(values: &[f32]) -> f32 {
    assert!(!values.is_empty(), "otsu needs at least one value");
    let (min, max) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max <= min {
        return min;
    }

    let mut hist = [0u64; OTSU_BINS];
    for &v in values {
        hist[otsu_bin(v, min, max)] += 1;
    }
    let total: u64 = values.len() as u64;
    let index_sum: u64 = hist.iter().enumerate().map(|(b, &h)| b as u64 * h).sum();

    let mut best_k = 0;
    let mut best = (0u128, 1u128);
    let (mut n0, mut s0) = (0u64, 0u64);
    for k in 0..OTSU_BINS {
        let score = split_score(n0, s0, total - n0, index_sum - s0);
        if compare_fractions(score, best) == Ordering::Greater {
            best = score;
            best_k = k;
        }
        n0 += hist[k];
        s0 += k as u64 * hist[k];
    }
    otsu_bin_edge(best_k, min, max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values_return_the_value() {
        assert_eq!(otsu(&[0.7; 9]), 0.7);
        assert_eq!(otsu(&[-2.0]), -2.0);
    }

    #[test]
    fn bimodal_split_lies_between_modes() {
        let mut v = vec![0.0f32; 8];
        v.extend([1.0f32; 8]);
        let t = otsu(&v);
        assert!(t > 0.0 && t < 1.0);
        assert!(v.iter().all(|&x| (x >= t) == (x == 1.0)));
    }

    #[test]
    fn three_clusters_cut_at_widest_gap() {
        let mut v = vec![0.0f32; 10];
        v.extend([0.1f32; 10]);
        v.extend([1.0f32; 10]);
        let t = otsu(&v);
        assert!(t > 0.1 && t <= 1.0);
    }

    #[test]
    fn max_value_lands_in_last_bin() {
        assert_eq!(otsu_bin(1.0, 0.0, 1.0), 255);
        assert_eq!(otsu_bin(0.0, 0.0, 1.0), 0);
        assert_eq!(otsu_bin(0.5, 0.0, 1.0), 128);
    }
}
