use super::{ops, KernelError, Tensor};

/// Single-head cross-attention.
///
/// `keys` are per-pixel (`P×d`), `queries` and `values` per-token (`N×d`,
/// `N×d_v`). Returns the attention output (`P×d_v`) and the raw map
/// `keys·queriesᵀ` (`P×N`). The map is returned unscaled; the `1/√d`
/// temperature is applied only inside the softmax.
pub fn attention(keys: &Tensor, queries: &Tensor, values: &Tensor) -> Result<(Tensor, Tensor), KernelError> {
    let d = match (keys.shape(), queries.shape()) {
        ([_, dk], [_, dq]) if dk == dq => *dk,
        (k, q) => {
            return Err(KernelError::Shape(format!(
                "attention: key shape {k:?} and query shape {q:?} disagree on d"
            )))
        }
    };
    let cam = ops::matmul_nt(keys, queries)?;
    let output = attend(&cam, values, d)?;
    Ok((output, cam))
}

/// `Softmax(cam/√d)·values` for a precomputed (possibly edited) map.
pub fn attend(cam: &Tensor, values: &Tensor, d: usize) -> Result<Tensor, KernelError> {
    let scaled = cam.map(|x| x / (d as f32).sqrt());
    let weights = ops::softmax_rows(&scaled)?;
    ops::matmul(&weights, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(rows: usize, cols: usize, hot: impl Fn(usize) -> usize) -> Tensor {
        Tensor::from_fn(&[rows, cols], |i| if i % cols == hot(i / cols) { 1.0 } else { 0.0 })
    }

    #[test]
    fn one_hot_alignment() {
        // pixel i matches token i; large magnitude makes softmax near-argmax
        let k = one_hot(3, 3, |i| i).map(|x| x * 40.0);
        let q = one_hot(3, 3, |i| i);
        let v = Tensor::from_fn(&[3, 2], |i| i as f32);
        let (out, cam) = attention(&k, &q, &v).unwrap();
        for p in 0..3 {
            for n in 0..3 {
                let expect = if p == n { 40.0 } else { 0.0 };
                assert_eq!(cam.data()[p * 3 + n], expect);
            }
            for c in 0..2 {
                assert!((out.data()[p * 2 + c] - v.data()[p * 2 + c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn identical_values_give_that_row() {
        let k = Tensor::from_fn(&[5, 4], |i| (i as f32 * 0.7).sin() * 3.0);
        let q = Tensor::from_fn(&[6, 4], |i| (i as f32 * 1.3).cos());
        let v = Tensor::from_fn(&[6, 3], |i| [0.5, -1.0, 2.0][i % 3]);
        let (out, _) = attention(&k, &q, &v).unwrap();
        for p in 0..5 {
            for (c, &want) in [0.5f32, -1.0, 2.0].iter().enumerate() {
                assert!((out.data()[p * 3 + c] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn d_mismatch_is_error() {
        let k = Tensor::zeros(&[2, 3]);
        let q = Tensor::zeros(&[2, 4]);
        assert!(attention(&k, &q, &Tensor::zeros(&[2, 1])).is_err());
    }
}
