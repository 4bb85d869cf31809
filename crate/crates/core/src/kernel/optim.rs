use super::{KernelError, Tensor};

/// AdamW hyperparameters. Betas and epsilon are the usual defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamW {
    pub lr: f32,
    pub weight_decay: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamW {
    pub fn new(lr: f32, weight_decay: f32) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// A named parameter with its optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

/// Ordered parameter set plus optimizer step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        let first_moment = Tensor::zeros(value.shape());
        let second_moment = Tensor::zeros(value.shape());
        self.params.push(Param {
            name: name.into(),
            value,
            first_moment,
            second_moment,
        });
        self.params.len() - 1
    }

    /// Inserts a parameter with explicit moments (used when loading).
    pub fn insert_with_moments(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        first_moment: Tensor,
        second_moment: Tensor,
    ) -> Result<usize, KernelError> {
        first_moment.expect_same_shape(&value, "first moment")?;
        second_moment.expect_same_shape(&value, "second moment")?;
        self.params.push(Param {
            name: name.into(),
            value,
            first_moment,
            second_moment,
        });
        Ok(self.params.len() - 1)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, index: usize) -> &Tensor {
        &self.params[index].value
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// One decoupled-weight-decay Adam update; `grads` align with `params()`.
    pub fn adamw_step(&mut self, grads: &[Tensor], opt: &AdamW) -> Result<(), KernelError> {
        if grads.len() != self.params.len() {
            return Err(KernelError::Shape(format!(
                "adamw: {} gradients for {} parameters",
                grads.len(),
                self.params.len()
            )));
        }
        for (p, g) in self.params.iter().zip(grads) {
            g.expect_same_shape(&p.value, &p.name)?;
            g.check_finite("adamw gradient")?;
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = opt.beta1 as f64;
        let b2 = opt.beta2 as f64;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        let lr = opt.lr as f64;
        let decay = 1.0 - lr * opt.weight_decay as f64;
        for (p, g) in self.params.iter_mut().zip(grads) {
            let values = p.value.data_mut();
            let m = p.first_moment.data_mut();
            let v = p.second_moment.data_mut();
            for i in 0..values.len() {
                let gi = g.data()[i] as f64;
                let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = (mi / bias1) / ((vi / bias2).sqrt() + opt.eps as f64);
                values[i] = (values[i] as f64 * decay - lr * update) as f32;
            }
            p.value.check_finite("adamw")?;
        }
        Ok(())
    }
}
