//! Reverse-mode differentiation over a linear tape.
//!
//! Every op appends a node holding its forward value. `backward` walks the
//! tape in reverse from a scalar root and returns gradients for every node
//! that the root depends on.

use super::{ops, KernelError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Relu(Var),
    Sigmoid(Var),
    AvgPool2d(Var, usize),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    SoftmaxRows(Var),
    Sum(Var),
    /// Scalar computed outside the tape with a known gradient w.r.t. `input`.
    External { input: Var, grad: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` if the root did not depend on it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var, KernelError> {
        value.check_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor) -> Result<Var, KernelError> {
        self.push(value, Op::Leaf, "leaf")
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var, KernelError> {
        let value = ops::conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            padding,
        )?;
        self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            "conv2d",
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        self.push(value, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        self.push(value, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Result<Var, KernelError> {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor), "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, KernelError> {
        let value = ops::relu(self.value(a));
        self.push(value, Op::Relu(a), "relu")
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, KernelError> {
        let value = ops::sigmoid(self.value(a));
        self.push(value, Op::Sigmoid(a), "sigmoid")
    }

    pub fn avg_pool2d(&mut self, a: Var, k: usize) -> Result<Var, KernelError> {
        let value = ops::avg_pool2d(self.value(a), k)?;
        self.push(value, Op::AvgPool2d(a, k), "avg_pool2d")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let value = ops::matmul(self.value(a), self.value(b))?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let value = ops::matmul_nt(self.value(a), self.value(b))?;
        self.push(value, Op::MatMulNt(a, b), "matmul_nt")
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, KernelError> {
        let value = ops::softmax_rows(self.value(a))?;
        self.push(value, Op::SoftmaxRows(a), "softmax")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, KernelError> {
        let value = Tensor::scalar(self.value(a).sum() as f32);
        self.push(value, Op::Sum(a), "sum")
    }

    /// Records a scalar whose gradient w.r.t. `input` was computed elsewhere.
    pub fn external_scalar(&mut self, input: Var, value: f32, grad: Tensor) -> Result<Var, KernelError> {
        grad.expect_same_shape(self.value(input), "external scalar gradient")?;
        grad.check_finite("external scalar gradient")?;
        self.push(Tensor::scalar(value), Op::External { input, grad }, "external scalar")
    }

    /// Gradients of the scalar `root` w.r.t. every recorded node.
    pub fn backward(&self, root: Var) -> Result<Gradients, KernelError> {
        if self.value(root).len() != 1 {
            return Err(KernelError::Shape(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    stride,
                    padding,
                } => {
                    let (gi, gw, gb) =
                        ops::conv2d_backward(self.value(*input), self.value(*weight), &g, *stride, *padding)?;
                    accumulate(&mut grads, *input, gi)?;
                    accumulate(&mut grads, *weight, gw)?;
                    if let Some(b) = bias {
                        accumulate(&mut grads, *b, gb)?;
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Scale(a, factor) => {
                    let f = *factor;
                    accumulate(&mut grads, *a, g.map(|x| x * f))?;
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |gv, s| gv * s * (1.0 - s))?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::AvgPool2d(a, k) => {
                    let ga = ops::avg_pool2d_backward(self.value(*a).shape(), &g, *k)?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::MatMul(a, b) => {
                    // y = a·b: da = g·bᵀ, db = aᵀ·g
                    let ga = ops::matmul_nt(&g, self.value(*b))?;
                    let gb = ops::matmul(&ops::transpose(self.value(*a))?, &g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::MatMulNt(a, b) => {
                    // y = a·bᵀ: da = g·b, db = gᵀ·a
                    let ga = ops::matmul(&g, self.value(*b))?;
                    let gb = ops::matmul(&ops::transpose(&g)?, self.value(*a))?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::SoftmaxRows(a) => {
                    let ga = ops::softmax_rows_backward(&node.value, &g)?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    accumulate(&mut grads, *a, Tensor::full(self.value(*a).shape(), gv))?;
                }
                Op::External { input, grad } => {
                    let gv = g.item();
                    accumulate(&mut grads, *input, grad.map(|x| x * gv))?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<(), KernelError> {
    g.check_finite("backward")?;
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
