//! Reverse-mode gradients against central differences.
//!
//! Each case builds a random graph on the tape, reduces its output to a
//! scalar with a random weighting, and compares the tape's directional
//! derivative with `(L(x + h·u) − L(x − h·u)) / 2h` along a random `u`.
//!
//! The difference quotient is taken on plain f64 reference forwards written
//! here, not on the f32 kernel: at `h = 1e-3`, rounding the shifted inputs
//! and outputs to f32 alone moves the quotient by about 1e-3 relative. The
//! kernel's forward values are checked against the same references.

use dg_core::assign::BBox;
use dg_core::detector::{encode_targets, loss_with_grad, GridPrediction, BOX_WEIGHT, CELL_OUTPUTS, GRID};
use dg_core::kernel::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const STEP: f64 = 1e-3;
const REL_TOL: f64 = 1e-3;
const CASES: u64 = 100;

/// f64 array with a shape, for the reference forwards.
#[derive(Clone, Debug)]
struct Arr {
    shape: Vec<usize>,
    v: Vec<f64>,
}

impl Arr {
    fn of(t: &Tensor) -> Self {
        Self {
            shape: t.shape().to_vec(),
            v: t.data().iter().map(|&x| x as f64).collect(),
        }
    }

    fn new(shape: &[usize], v: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), v.len());
        Self { shape: shape.to_vec(), v }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(&self.shape, self.v.iter().map(|&x| f(x)).collect())
    }

    fn zip(&self, o: &Arr, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, o.shape);
        Self::new(&self.shape, self.v.iter().zip(&o.v).map(|(&a, &b)| f(a, b)).collect())
    }
}

mod reference {
    use super::Arr;

    pub fn conv2d(x: &Arr, w: &Arr, b: Option<&Arr>, stride: usize, pad: usize) -> Arr {
        let (c, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
        let (o, kh, kw) = (w.shape[0], w.shape[2], w.shape[3]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; o * oh * ow];
        for f in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b.v[f]);
                    for ch in 0..c {
                        for di in 0..kh {
                            for dj in 0..kw {
                                let (y, xx) = ((i * stride + di) as isize - pad as isize, (j * stride + dj) as isize - pad as isize);
                                if y < 0 || xx < 0 || y >= h as isize || xx >= wd as isize {
                                    continue;
                                }
                                acc += x.v[(ch * h + y as usize) * wd + xx as usize] * w.v[((f * c + ch) * kh + di) * kw + dj];
                            }
                        }
                    }
                    out[(f * oh + i) * ow + j] = acc;
                }
            }
        }
        Arr::new(&[o, oh, ow], out)
    }

    pub fn matmul(a: &Arr, b: &Arr, b_transposed: bool) -> Arr {
        let (m, k) = (a.shape[0], a.shape[1]);
        let n = if b_transposed { b.shape[0] } else { b.shape[1] };
        let at = |r: usize, c: usize| if b_transposed { b.v[c * k + r] } else { b.v[r * n + c] };
        let v = (0..m * n)
            .map(|idx| (0..k).map(|p| a.v[(idx / n) * k + p] * at(p, idx % n)).sum())
            .collect();
        Arr::new(&[m, n], v)
    }

    pub fn softmax_rows(x: &Arr) -> Arr {
        let n = *x.shape.last().unwrap();
        let mut v = x.v.clone();
        for row in v.chunks_mut(n) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|&z| (z - m).exp()).sum();
            row.iter_mut().for_each(|z| *z = (*z - m).exp() / s);
        }
        Arr::new(&x.shape, v)
    }

    pub fn avg_pool(x: &Arr, k: usize) -> Arr {
        let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
        let (oh, ow) = (h / k, w / k);
        let mut v = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = 0.0;
                    for a in 0..k {
                        for b in 0..k {
                            s += x.v[(ch * h + i * k + a) * w + j * k + b];
                        }
                    }
                    v[(ch * oh + i) * ow + j] = s / (k * k) as f64;
                }
            }
        }
        Arr::new(&[c, oh, ow], v)
    }

    pub fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    pub fn sum(x: &Arr) -> Arr {
        Arr::new(&[], vec![x.v.iter().sum()])
    }
}

fn normal(rng: &mut ChaCha8Rng, shape: &[usize], scale: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.sample::<f32, _>(StandardNormal) * scale)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn as_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&x| x as f64).collect()
}

fn assert_close(what: &str, analytic: f64, numeric: f64) {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    assert!(
        (analytic - numeric).abs() <= REL_TOL * scale,
        "{what}: analytic {analytic} vs numeric {numeric}"
    );
}

/// Directional check of `tape_fn` against its reference `ref_fn`.
fn check<F, R>(name: &str, seed: u64, inputs: Vec<Tensor>, tape_fn: F, ref_fn: R)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
    R: Fn(&[Arr]) -> Arr,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone()).unwrap()).collect();
    let out = tape_fn(&mut tape, &leaves);
    let y = tape.value(out).clone();

    let x64: Vec<Arr> = inputs.iter().map(Arr::of).collect();
    let expected = ref_fn(&x64);
    assert_eq!(y.shape(), expected.shape.as_slice(), "{name} case {seed}: shape");
    for (i, (&got, &want)) in y.data().iter().zip(&expected.v).enumerate() {
        assert!(
            (got as f64 - want).abs() <= 1e-5 * (1.0 + want.abs()),
            "{name} case {seed}: forward element {i} is {got}, reference {want}"
        );
    }

    let w = normal(&mut rng, y.shape(), 1.0);
    let wv = tape.leaf(w.clone()).unwrap();
    let prod = tape.mul(out, wv).unwrap();
    let root = tape.sum(prod).unwrap();
    let grads = tape.backward(root).unwrap();

    let dirs: Vec<Vec<f64>> = inputs.iter().map(|x| as_f64(&normal(&mut rng, x.shape(), 1.0))).collect();
    let analytic: f64 = leaves
        .iter()
        .zip(&inputs)
        .zip(&dirs)
        .map(|((&v, x), u)| dot(&as_f64(&grads.get_or_zeros(v, x)), u))
        .sum();

    let w64 = as_f64(&w);
    let loss_at = |h: f64| {
        let moved: Vec<Arr> = x64
            .iter()
            .zip(&dirs)
            .map(|(x, u)| Arr::new(&x.shape, x.v.iter().zip(u).map(|(a, b)| a + h * b).collect()))
            .collect();
        dot(&ref_fn(&moved).v, &w64)
    };
    let numeric = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
    assert_close(&format!("{name} case {seed}"), analytic, numeric);
}

fn dims(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

pub fn conv2d_with_bias_stride_and_padding() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ci, co) = (dims(&mut rng, 1, 4), dims(&mut rng, 1, 4));
        let k = [1, 3][rng.gen_range(0..2)];
        let stride = dims(&mut rng, 1, 2);
        let padding = if k == 3 { dims(&mut rng, 0, 1) } else { 0 };
        let size = dims(&mut rng, 3, 7);
        let inputs = vec![
            normal(&mut rng, &[ci, size, size], 1.0),
            normal(&mut rng, &[co, ci, k, k], 0.5),
            normal(&mut rng, &[co], 0.5),
        ];
        check(
            "conv2d",
            seed,
            inputs,
            |t, v| t.conv2d(v[0], v[1], Some(v[2]), stride, padding).unwrap(),
            |x| reference::conv2d(&x[0], &x[1], Some(&x[2]), stride, padding),
        );
    }
}

pub fn elementwise_ops() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [dims(&mut rng, 1, 4), dims(&mut rng, 1, 5)];
        let a = normal(&mut rng, &shape, 1.0);
        let b = normal(&mut rng, &shape, 1.0);
        let factor = rng.gen_range(-3.0f32..3.0);
        let pair = vec![a.clone(), b.clone()];
        check("add", seed, pair.clone(), |t, v| t.add(v[0], v[1]).unwrap(), |x| x[0].zip(&x[1], |p, q| p + q));
        check("mul", seed, pair, |t, v| t.mul(v[0], v[1]).unwrap(), |x| x[0].zip(&x[1], |p, q| p * q));
        check(
            "scale",
            seed,
            vec![a.clone()],
            |t, v| t.scale(v[0], factor).unwrap(),
            |x| x[0].map(|p| p * factor as f64),
        );
        check(
            "sigmoid",
            seed,
            vec![normal(&mut rng, &shape, 3.0)],
            |t, v| t.sigmoid(v[0]).unwrap(),
            |x| x[0].map(reference::sigmoid),
        );
        // Inputs stay clear of the kink so the difference quotient is defined.
        let away = a.map(|x| if x.abs() < 0.05 { x + 0.1f32.copysign(x) } else { x });
        check("relu", seed, vec![away], |t, v| t.relu(v[0]).unwrap(), |x| x[0].map(|p| p.max(0.0)));
    }
}

pub fn pooling_and_sum() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = dims(&mut rng, 1, 3);
        let size = k * dims(&mut rng, 1, 3);
        let c = dims(&mut rng, 1, 3);
        let x = normal(&mut rng, &[c, size, size], 1.0);
        check(
            "avg_pool",
            seed,
            vec![x.clone()],
            |t, v| t.avg_pool2d(v[0], k).unwrap(),
            |x| reference::avg_pool(&x[0], k),
        );
        check("sum", seed, vec![x], |t, v| t.sum(v[0]).unwrap(), |x| reference::sum(&x[0]));
    }
}

pub fn matrix_products_and_softmax() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k, n) = (dims(&mut rng, 1, 5), dims(&mut rng, 1, 5), dims(&mut rng, 1, 5));
        let a = normal(&mut rng, &[m, k], 1.0);
        check(
            "matmul",
            seed,
            vec![a.clone(), normal(&mut rng, &[k, n], 1.0)],
            |t, v| t.matmul(v[0], v[1]).unwrap(),
            |x| reference::matmul(&x[0], &x[1], false),
        );
        check(
            "matmul_nt",
            seed,
            vec![a, normal(&mut rng, &[n, k], 1.0)],
            |t, v| t.matmul_nt(v[0], v[1]).unwrap(),
            |x| reference::matmul(&x[0], &x[1], true),
        );
        check(
            "softmax_rows",
            seed,
            vec![normal(&mut rng, &[m, n], 2.0)],
            |t, v| t.softmax_rows(v[0]).unwrap(),
            |x| reference::softmax_rows(&x[0]),
        );
    }
}

pub fn attention_chain() {
    // softmax(Q·Kᵀ)·V, the composition the toy sampler uses.
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, n, d) = (dims(&mut rng, 2, 6), dims(&mut rng, 2, 5), dims(&mut rng, 2, 4));
        let inputs = vec![
            normal(&mut rng, &[p, d], 0.7),
            normal(&mut rng, &[n, d], 0.7),
            normal(&mut rng, &[n, d], 1.0),
        ];
        check(
            "attention",
            seed,
            inputs,
            |t, v| {
                let logits = t.matmul_nt(v[0], v[1]).unwrap();
                let probs = t.softmax_rows(logits).unwrap();
                t.matmul(probs, v[2]).unwrap()
            },
            |x| reference::matmul(&reference::softmax_rows(&reference::matmul(&x[0], &x[1], true)), &x[2], false),
        );
    }
}

fn random_truth(rng: &mut ChaCha8Rng) -> Vec<BBox> {
    (0..rng.gen_range(0..=3))
        .map(|_| {
            let w = rng.gen_range(1.5f32..8.0);
            let h = rng.gen_range(1.5f32..8.0);
            let x = rng.gen_range(0.0..16.0 - w);
            let y = rng.gen_range(0.0..16.0 - h);
            BBox::new(x, y, w, h, 1.0, 0)
        })
        .collect()
}

/// Detector loss from its definition: cross-entropy on confidence at every
/// cell plus weighted squared error on the box terms of responsible cells.
fn reference_loss(raw: &Arr, truth: &[BBox]) -> f64 {
    let at = |ch: usize, r: usize, c: usize| raw.v[(ch * GRID + r) * GRID + c];
    let targets = encode_targets(truth);
    let mut total = 0.0;
    for r in 0..GRID {
        for c in 0..GRID {
            let p = reference::sigmoid(at(0, r, c));
            let y = targets.iter().any(|t| (t.row, t.col) == (r, c));
            total -= if y { p.ln() } else { (1.0 - p).ln() };
        }
    }
    for t in &targets {
        let pred = [
            reference::sigmoid(at(1, t.row, t.col)),
            reference::sigmoid(at(2, t.row, t.col)),
            at(3, t.row, t.col),
            at(4, t.row, t.col),
        ];
        let goal = [t.tx, t.ty, t.tw, t.th];
        total += BOX_WEIGHT * pred.iter().zip(goal).map(|(p, g)| (p - g as f64).powi(2)).sum::<f64>();
    }
    total
}

pub fn detector_loss_matches_difference_quotient() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_truth(&mut rng);
        let raw = normal(&mut rng, &[CELL_OUTPUTS, GRID, GRID], 1.5);
        let dir = as_f64(&normal(&mut rng, raw.shape(), 1.0));
        let (parts, grad) = loss_with_grad(&GridPrediction::from_raw(raw.clone()).unwrap(), &truth);
        let base = Arr::of(&raw);
        let expected = reference_loss(&base, &truth);
        assert!((parts.total - expected).abs() <= 1e-6 * (1.0 + expected), "loss case {seed}: value");

        let analytic = dot(&as_f64(&grad), &dir);
        let at = |h: f64| reference_loss(&Arr::new(&base.shape, base.v.iter().zip(&dir).map(|(a, b)| a + h * b).collect()), &truth);
        let numeric = (at(STEP) - at(-STEP)) / (2.0 * STEP);
        assert_close(&format!("loss case {seed}"), analytic, numeric);
    }
}

pub fn fused_loss_flows_through_the_tape() {
    // conv → detector loss attached as an external scalar: the loss gradient
    // must reach both the input and the weights.
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_truth(&mut rng);
        let inputs = [normal(&mut rng, &[2, GRID, GRID], 1.0), normal(&mut rng, &[CELL_OUTPUTS, 2, 3, 3], 0.4)];
        let mut tape = Tape::new();
        let xv = tape.leaf(inputs[0].clone()).unwrap();
        let wv = tape.leaf(inputs[1].clone()).unwrap();
        let out = tape.conv2d(xv, wv, None, 1, 1).unwrap();
        let pred = GridPrediction::from_raw(tape.value(out).clone()).unwrap();
        let (parts, grad) = loss_with_grad(&pred, &truth);
        let root = tape.external_scalar(out, parts.total as f32, grad).unwrap();
        let grads = tape.backward(root).unwrap();

        let dirs: Vec<Vec<f64>> = inputs.iter().map(|x| as_f64(&normal(&mut rng, x.shape(), 1.0))).collect();
        let analytic = dot(&as_f64(grads.get(xv).unwrap()), &dirs[0]) + dot(&as_f64(grads.get(wv).unwrap()), &dirs[1]);
        let x64: Vec<Arr> = inputs.iter().map(Arr::of).collect();
        let at = |h: f64| {
            let m: Vec<Arr> = x64
                .iter()
                .zip(&dirs)
                .map(|(x, u)| Arr::new(&x.shape, x.v.iter().zip(u).map(|(a, b)| a + h * b).collect()))
                .collect();
            reference_loss(&reference::conv2d(&m[0], &m[1], None, 1, 1), &truth)
        };
        let numeric = (at(STEP) - at(-STEP)) / (2.0 * STEP);
        assert_close(&format!("fused case {seed}"), analytic, numeric);
    }
}

pub fn every_weight_of_a_small_convolution() {
    // 4×16×16 input, eight 3×3 filters, stride 1, pad 1; loss is the plain
    // sum of the 8×16×16 output, checked one weight at a time.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let x = normal(&mut rng, &[4, 16, 16], 1.0);
    let w = normal(&mut rng, &[8, 4, 3, 3], 0.3);

    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone()).unwrap();
    let wv = tape.leaf(w.clone()).unwrap();
    let y = tape.conv2d(xv, wv, None, 1, 1).unwrap();
    assert_eq!(tape.value(y).shape(), &[8, 16, 16]);
    let root = tape.sum(y).unwrap();
    let gw = tape.backward(root).unwrap().get(wv).unwrap().clone();

    let (x64, w64) = (Arr::of(&x), Arr::of(&w));
    for i in 0..w.len() {
        let at = |h: f64| {
            let mut moved = w64.clone();
            moved.v[i] += h;
            reference::conv2d(&x64, &moved, None, 1, 1).v.iter().sum::<f64>()
        };
        let numeric = (at(STEP) - at(-STEP)) / (2.0 * STEP);
        assert_close(&format!("weight {i}"), gw.data()[i] as f64, numeric);
    }
}
