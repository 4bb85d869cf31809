//! Forward and backward kernels on plain tensors.
//!
//! Convolution uses direct loops. Row-wise inner loops are written over
//! contiguous slices so the compiler can vectorize them; long reductions
//! (weight gradients, softmax normalizers) accumulate in `f64`.

use super::{KernelError, Tensor};

/// Output extent of a convolution along one axis.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    filters: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    padding: usize,
}

fn conv_geometry(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGeometry, KernelError> {
    if stride == 0 {
        return Err(KernelError::Shape("conv2d: stride must be at least 1".into()));
    }
    let &[channels, height, width] = input.shape() else {
        return Err(KernelError::Shape(format!(
            "conv2d: input must be C×H×W, got {:?}",
            input.shape()
        )));
    };
    let &[filters, wc, kh, kw] = weight.shape() else {
        return Err(KernelError::Shape(format!(
            "conv2d: weight must be O×C×kh×kw, got {:?}",
            weight.shape()
        )));
    };
    if wc != channels {
        return Err(KernelError::Shape(format!(
            "conv2d: input has {channels} channels but weight expects {wc}"
        )));
    }
    let (Some(out_h), Some(out_w)) = (
        conv_out_extent(height, kh, stride, padding),
        conv_out_extent(width, kw, stride, padding),
    ) else {
        return Err(KernelError::Shape(format!(
            "conv2d: kernel {kh}×{kw} does not fit input {height}×{width} with padding {padding}"
        )));
    };
    Ok(ConvGeometry {
        channels,
        height,
        width,
        filters,
        kh,
        kw,
        out_h,
        out_w,
        stride,
        padding,
    })
}

/// Range of output columns whose input column `ox*stride + k - padding` is in bounds.
fn valid_range(out: usize, input: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    // ox*stride + k >= padding  and  ox*stride + k - padding < input
    let lo = if k >= padding { 0 } else { (padding - k).div_ceil(stride) };
    let hi = if input + padding > k {
        ((input + padding - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Copies `C×H×W` into zero-padded planes of width `W + 2p` (plus one spare row
/// so shifted windows never run off the end).
fn pad_planes(data: &[f32], c: usize, h: usize, w: usize, p: usize) -> (Vec<f32>, usize, usize) {
    let pw = w + 2 * p;
    let ph = h + 2 * p + 1;
    let mut out = vec![0.0f32; c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let src = &data[(ch * h + y) * w..(ch * h + y + 1) * w];
            let dst = (ch * ph + y + p) * pw + p;
            out[dst..dst + w].copy_from_slice(src);
        }
    }
    (out, ph, pw)
}

/// Stride-1 forward on padded planes. Output is computed on a grid of row
/// pitch `pw`; columns past `out_w` are scratch and dropped afterwards.
fn conv2d_stride1(g: &ConvGeometry, x: &[f32], w: &[f32], bias: Option<&Tensor>) -> Vec<f32> {
    let (xp, ph, pw) = pad_planes(x, g.channels, g.height, g.width, g.padding);
    let span = g.out_h * pw;
    let mut acc = vec![0.0f32; span];
    let mut out = vec![0.0f32; g.filters * g.out_h * g.out_w];
    for o in 0..g.filters {
        acc.fill(bias.map_or(0.0, |b| b.data()[o]));
        for c in 0..g.channels {
            let plane = &xp[c * ph * pw..(c + 1) * ph * pw];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = w[((o * g.channels + c) * g.kh + ky) * g.kw + kx];
                    let off = ky * pw + kx;
                    for (dst, &src) in acc.iter_mut().zip(&plane[off..off + span]) {
                        *dst += wv * src;
                    }
                }
            }
        }
        for oy in 0..g.out_h {
            let dst = (o * g.out_h + oy) * g.out_w;
            out[dst..dst + g.out_w].copy_from_slice(&acc[oy * pw..oy * pw + g.out_w]);
        }
    }
    out
}

fn conv2d_backward_stride1(g: &ConvGeometry, x: &[f32], w: &[f32], go: &[f32]) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let (xp, ph, pw) = pad_planes(x, g.channels, g.height, g.width, g.padding);
    let span = g.out_h * pw;
    let mut gxp = vec![0.0f32; xp.len()];
    let mut gw = vec![0.0f32; w.len()];
    let mut gb = vec![0.0f32; g.filters];
    // output gradient on the padded-pitch grid, scratch columns zero
    let mut gop = vec![0.0f32; span];
    for o in 0..g.filters {
        gop.fill(0.0);
        let mut bias_acc = 0.0f64;
        for oy in 0..g.out_h {
            let src = &go[(o * g.out_h + oy) * g.out_w..(o * g.out_h + oy + 1) * g.out_w];
            gop[oy * pw..oy * pw + g.out_w].copy_from_slice(src);
            bias_acc += src.iter().map(|&v| v as f64).sum::<f64>();
        }
        gb[o] = bias_acc as f32;
        for c in 0..g.channels {
            let base = c * ph * pw;
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let widx = ((o * g.channels + c) * g.kh + ky) * g.kw + kx;
                    let wv = w[widx];
                    let off = base + ky * pw + kx;
                    gw[widx] = lane_dot(&gop, &xp[off..off + span]) as f32;
                    for (dst, &gv) in gxp[off..off + span].iter_mut().zip(&gop) {
                        *dst += wv * gv;
                    }
                }
            }
        }
    }
    let mut gin = vec![0.0f32; x.len()];
    for c in 0..g.channels {
        for y in 0..g.height {
            let src = (c * ph + y + g.padding) * pw + g.padding;
            let dst = (c * g.height + y) * g.width;
            gin[dst..dst + g.width].copy_from_slice(&gxp[src..src + g.width]);
        }
    }
    (gin, gw, gb)
}

/// Dot product with eight independent `f32` lanes, combined in `f64`.
fn lane_dot(a: &[f32], b: &[f32]) -> f64 {
    let mut lanes = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    lanes.iter().map(|&v| v as f64).sum::<f64>() + tail
}

pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor, KernelError> {
    let g = conv_geometry(input, weight, stride, padding)?;
    if let Some(b) = bias {
        b.expect_shape(&[g.filters], "conv2d bias")?;
    }
    if g.stride == 1 {
        let out = conv2d_stride1(&g, input.data(), weight.data(), bias);
        let out = Tensor::new(&[g.filters, g.out_h, g.out_w], out)?;
        out.check_finite("conv2d")?;
        return Ok(out);
    }
    let plane = g.out_h * g.out_w;
    let mut out = vec![0.0f32; g.filters * plane];
    let x = input.data();
    let w = weight.data();
    for o in 0..g.filters {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        if let Some(b) = bias {
            out_plane.fill(b.data()[o]);
        }
        for c in 0..g.channels {
            let in_plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
            for ky in 0..g.kh {
                let (oy_lo, oy_hi) = valid_range(g.out_h, g.height, ky, g.stride, g.padding);
                for kx in 0..g.kw {
                    let wv = w[((o * g.channels + c) * g.kh + ky) * g.kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = valid_range(g.out_w, g.width, kx, g.stride, g.padding);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ky - g.padding;
                        let in_row = &in_plane[iy * g.width..(iy + 1) * g.width];
                        let out_row = &mut out_plane[oy * g.out_w..(oy + 1) * g.out_w];
                        if g.stride == 1 {
                            let ix0 = ox_lo + kx - g.padding;
                            let n = ox_hi - ox_lo;
                            for (dst, &src) in out_row[ox_lo..ox_hi].iter_mut().zip(&in_row[ix0..ix0 + n]) {
                                *dst += wv * src;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                out_row[ox] += wv * in_row[ox * g.stride + kx - g.padding];
                            }
                        }
                    }
                }
            }
        }
    }
    let out = Tensor::new(&[g.filters, g.out_h, g.out_w], out)?;
    out.check_finite("conv2d")?;
    Ok(out)
}

/// Gradients of a convolution: `(d input, d weight, d bias)`.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor), KernelError> {
    let g = conv_geometry(input, weight, stride, padding)?;
    grad_out.expect_shape(&[g.filters, g.out_h, g.out_w], "conv2d grad")?;
    if g.stride == 1 {
        let (gin, gw, gb) = conv2d_backward_stride1(&g, input.data(), weight.data(), grad_out.data());
        return Ok((
            Tensor::new(input.shape(), gin)?,
            Tensor::new(weight.shape(), gw)?,
            Tensor::new(&[g.filters], gb)?,
        ));
    }
    let plane = g.out_h * g.out_w;
    let in_plane_len = g.height * g.width;
    let x = input.data();
    let w = weight.data();
    let go = grad_out.data();
    let mut gin = vec![0.0f32; x.len()];
    let mut gw = vec![0.0f32; w.len()];
    let mut gb = vec![0.0f32; g.filters];
    for o in 0..g.filters {
        let go_plane = &go[o * plane..(o + 1) * plane];
        gb[o] = go_plane.iter().map(|&v| v as f64).sum::<f64>() as f32;
        for c in 0..g.channels {
            let in_plane = &x[c * in_plane_len..(c + 1) * in_plane_len];
            let gin_plane = &mut gin[c * in_plane_len..(c + 1) * in_plane_len];
            for ky in 0..g.kh {
                let (oy_lo, oy_hi) = valid_range(g.out_h, g.height, ky, g.stride, g.padding);
                for kx in 0..g.kw {
                    let widx = ((o * g.channels + c) * g.kh + ky) * g.kw + kx;
                    let wv = w[widx];
                    let (ox_lo, ox_hi) = valid_range(g.out_w, g.width, kx, g.stride, g.padding);
                    let mut acc = 0.0f64;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ky - g.padding;
                        let go_row = &go_plane[oy * g.out_w..(oy + 1) * g.out_w];
                        if g.stride == 1 {
                            let ix0 = ox_lo + kx - g.padding;
                            let n = ox_hi - ox_lo;
                            let in_row = &in_plane[iy * g.width + ix0..iy * g.width + ix0 + n];
                            let gsl = &go_row[ox_lo..ox_hi];
                            let mut row_acc = 0.0f32;
                            for (&a, &b) in gsl.iter().zip(in_row) {
                                row_acc += a * b;
                            }
                            acc += row_acc as f64;
                            let gin_row = &mut gin_plane[iy * g.width + ix0..iy * g.width + ix0 + n];
                            for (dst, &gv) in gin_row.iter_mut().zip(gsl) {
                                *dst += wv * gv;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                let ix = ox * g.stride + kx - g.padding;
                                acc += go_row[ox] as f64 * in_plane[iy * g.width + ix] as f64;
                                gin_plane[iy * g.width + ix] += wv * go_row[ox];
                            }
                        }
                    }
                    gw[widx] = acc as f32;
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape(), gin)?,
        Tensor::new(weight.shape(), gw)?,
        Tensor::new(&[g.filters], gb)?,
    ))
}

fn expect_matrix(t: &Tensor, what: &str) -> Result<(usize, usize), KernelError> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(KernelError::Shape(format!("{what}: expected a matrix, got {:?}", t.shape()))),
    }
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    let (m, k) = expect_matrix(a, "matmul lhs")?;
    let (k2, n) = expect_matrix(b, "matmul rhs")?;
    if k != k2 {
        return Err(KernelError::Shape(format!("matmul: inner dimensions {k} and {k2} differ")));
    }
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = b.row(p);
            for (dst, &bv) in orow.iter_mut().zip(brow) {
                *dst += av as f64 * bv as f64;
            }
        }
    }
    let out = Tensor::new(&[m, n], out.into_iter().map(|v| v as f32).collect())?;
    out.check_finite("matmul")?;
    Ok(out)
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    let (m, k) = expect_matrix(a, "matmul_nt lhs")?;
    let (n, k2) = expect_matrix(b, "matmul_nt rhs")?;
    if k != k2 {
        return Err(KernelError::Shape(format!("matmul_nt: inner dimensions {k} and {k2} differ")));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let dot: f64 = arow.iter().zip(b.row(j)).map(|(&x, &y)| x as f64 * y as f64).sum();
            out.push(dot as f32);
        }
    }
    let out = Tensor::new(&[m, n], out)?;
    out.check_finite("matmul_nt")?;
    Ok(out)
}

pub fn transpose(a: &Tensor) -> Result<Tensor, KernelError> {
    let (m, n) = expect_matrix(a, "transpose")?;
    let d = a.data();
    Tensor::new(&[n, m], (0..n * m).map(|idx| d[(idx % m) * n + idx / m]).collect())
}

/// Row-wise softmax of a matrix.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor, KernelError> {
    let (m, n) = expect_matrix(x, "softmax")?;
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        out.extend(softmax_slice(x.row(i)));
    }
    let out = Tensor::new(&[m, n], out)?;
    out.check_finite("softmax")?;
    Ok(out)
}

/// Softmax of one row, max-shifted, normalized in `f64`.
pub fn softmax_slice(row: &[f32]) -> Vec<f32> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if max == f32::NEG_INFINITY {
        return vec![1.0 / row.len() as f32; row.len()];
    }
    let exps: Vec<f64> = row.iter().map(|&v| ((v - max) as f64).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / total) as f32).collect()
}

/// Backward of row softmax given its output `y`.
pub fn softmax_rows_backward(y: &Tensor, grad_out: &Tensor) -> Result<Tensor, KernelError> {
    let (m, n) = expect_matrix(y, "softmax backward")?;
    grad_out.expect_same_shape(y, "softmax backward")?;
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let yr = y.row(i);
        let gr = grad_out.row(i);
        let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a as f64 * b as f64).sum();
        out.extend(yr.iter().zip(gr).map(|(&yv, &gv)| (yv as f64 * (gv as f64 - dot)) as f32));
    }
    Tensor::new(&[m, n], out)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid_scalar(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Non-overlapping `k×k` average pooling of a `C×H×W` tensor.
pub fn avg_pool2d(x: &Tensor, k: usize) -> Result<Tensor, KernelError> {
    let &[c, h, w] = x.shape() else {
        return Err(KernelError::Shape(format!("avg_pool2d: expected C×H×W, got {:?}", x.shape())));
    };
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(KernelError::Shape(format!("avg_pool2d: window {k} does not tile {h}×{w}")));
    }
    let (oh, ow) = (h / k, w / k);
    let norm = 1.0 / (k * k) as f64;
    let d = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for dy in 0..k {
                    for dx in 0..k {
                        acc += d[(ch * h + oy * k + dy) * w + ox * k + dx] as f64;
                    }
                }
                out.push((acc * norm) as f32);
            }
        }
    }
    Tensor::new(&[c, oh, ow], out)
}

pub fn avg_pool2d_backward(input_shape: &[usize], grad_out: &Tensor, k: usize) -> Result<Tensor, KernelError> {
    let &[c, h, w] = input_shape else {
        return Err(KernelError::Shape("avg_pool2d backward: bad input shape".into()));
    };
    let (oh, ow) = (h / k, w / k);
    grad_out.expect_shape(&[c, oh, ow], "avg_pool2d grad")?;
    let norm = 1.0 / (k * k) as f32;
    let g = grad_out.data();
    Ok(Tensor::from_fn(&[c, h, w], |idx| {
        let ch = idx / (h * w);
        let y = (idx / w) % h;
        let x = idx % w;
        g[(ch * oh + y / k) * ow + x / k] * norm
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor::zeros(&[1, 3, 3]);
        let w = Tensor::from_fn(&[2, 1, 3, 3], |i| i as f32 * 0.37 - 1.0);
        let b = Tensor::zeros(&[2]);
        let y = conv2d(&x, &w, Some(&b), 1, 1).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = Tensor::from_fn(&[1, 4, 5], |i| (i as f32).sin());
        let w = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let y = conv2d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn strided_conv_arithmetic() {
        let x = Tensor::from_fn(&[2, 7, 6], |i| i as f32 * 0.01);
        let w = Tensor::from_fn(&[3, 2, 3, 3], |i| (i % 5) as f32 - 2.0);
        let y = conv2d(&x, &w, None, 2, 1).unwrap();
        assert_eq!(y.shape(), &[3, 4, 3]);
        // naive reference
        for o in 0..3 {
            for oy in 0..4 {
                for ox in 0..3 {
                    let mut acc = 0.0f64;
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= 7 || ix >= 6 {
                                    continue;
                                }
                                acc += x.data()[(c * 7 + iy as usize) * 6 + ix as usize] as f64
                                    * w.data()[((o * 2 + c) * 3 + ky) * 3 + kx] as f64;
                            }
                        }
                    }
                    let got = y.data()[(o * 4 + oy) * 3 + ox] as f64;
                    assert!((got - acc).abs() < 1e-4, "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &w, None, 1, 1), Err(KernelError::Shape(_))));
        let w = Tensor::zeros(&[1, 2, 7, 7]);
        assert!(conv2d(&x, &w, None, 1, 0).is_err());
        let w = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(conv2d(&x, &w, None, 0, 0).is_err());
    }

    #[test]
    fn softmax_handles_all_negative_infinity() {
        let p = softmax_slice(&[f32::NEG_INFINITY, f32::NEG_INFINITY]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matmul(&a, &b).is_err());
        assert!(matmul_nt(&a, &b).is_ok());
    }

    #[test]
    fn transpose_roundtrip() {
        let a = Tensor::from_fn(&[3, 4], |i| i as f32);
        let t = transpose(&a).unwrap();
        assert_eq!(t.shape(), &[4, 3]);
        assert_eq!(t.data()[1], 4.0);
        assert_eq!(transpose(&t).unwrap(), a);
    }
}
