use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DetectorError;
use crate::kernel::{KernelError, ParamStore, Tape, Tensor, Var};

pub const INPUT_CHANNELS: usize = 20;
pub const INPUT_SIZE: usize = 16;
pub const GRID: usize = 8;
pub const CELL: f32 = (INPUT_SIZE / GRID) as f32;
/// Outputs per cell: confidence, tx, ty, tw, th.
pub const CELL_OUTPUTS: usize = 5;

/// Backbone widths and head width of the grid detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub block_widths: Vec<usize>,
    pub head_width: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            block_widths: vec![16, 16, 16, 16],
            head_width: 16,
        }
    }
}

impl Architecture {
    /// Full-width variant: 20→32→64→64→64.
    pub fn full() -> Self {
        Self {
            block_widths: vec![32, 64, 64, 64],
            head_width: 64,
        }
    }
}

/// Trained (or freshly initialized) detector with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorWeights {
    pub arch: Architecture,
    pub store: ParamStore,
}

impl DetectorWeights {
    /// He-normal convolution weights, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut conv = |store: &mut ParamStore, name: &str, c_out: usize, c_in: usize, k: usize, gain: f64| {
            let std = gain * (2.0 / (c_in * k * k) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let w = Tensor::from_fn(&[c_out, c_in, k, k], |_| normal.sample(&mut rng) as f32);
            store.insert(format!("{name}.w"), w);
        };
        let mut c_in = INPUT_CHANNELS;
        for (i, &c_out) in arch.block_widths.iter().enumerate() {
            conv(&mut store, &format!("block{i}.conv"), c_out, c_in, 3, 1.0);
            store.insert(format!("block{i}.conv.b"), Tensor::zeros(&[c_out]));
            if c_in != c_out {
                conv(&mut store, &format!("block{i}.proj"), c_out, c_in, 1, 1.0);
            }
            c_in = c_out;
        }
        conv(&mut store, "head.0", arch.head_width, c_in, 3, 1.0);
        store.insert("head.0.b", Tensor::zeros(&[arch.head_width]));
        conv(&mut store, "head.1", CELL_OUTPUTS, arch.head_width, 3, 0.1);
        store.insert("head.1.b", Tensor::zeros(&[CELL_OUTPUTS]));
        Self { arch, store }
    }

    fn param(&self, name: &str) -> Result<usize, DetectorError> {
        self.store
            .index_of(name)
            .ok_or_else(|| DetectorError::MissingParameter(name.to_string()))
    }

    /// Records the forward pass; returns the leaf for every parameter (in
    /// store order) and the raw `5×8×8` output.
    pub fn forward_tape(&self, tape: &mut Tape, input: &Tensor) -> Result<(Vec<Var>, Var), DetectorError> {
        input.expect_shape(&[INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE], "detector input")?;
        let leaves = self
            .store
            .params()
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let leaf = |name: &str| -> Result<Var, DetectorError> { Ok(leaves[self.param(name)?]) };

        let mut x = tape.leaf(input.clone())?;
        let mut c_in = INPUT_CHANNELS;
        for (i, &c_out) in self.arch.block_widths.iter().enumerate() {
            let h = tape.conv2d(x, leaf(&format!("block{i}.conv.w"))?, Some(leaf(&format!("block{i}.conv.b"))?), 1, 1)?;
            let skip = if c_in != c_out {
                tape.conv2d(x, leaf(&format!("block{i}.proj.w"))?, None, 1, 0)?
            } else {
                x
            };
            let sum = tape.add(h, skip)?;
            x = tape.relu(sum)?;
            c_in = c_out;
        }
        let h = tape.conv2d(x, leaf("head.0.w")?, Some(leaf("head.0.b")?), 1, 1)?;
        let h = tape.relu(h)?;
        let h = tape.conv2d(h, leaf("head.1.w")?, Some(leaf("head.1.b")?), 1, 1)?;
        let out = tape.avg_pool2d(h, INPUT_SIZE / GRID)?;
        Ok((leaves, out))
    }

    pub fn forward(&self, input: &Tensor) -> Result<GridPrediction, DetectorError> {
        let mut tape = Tape::new();
        let (_, out) = self.forward_tape(&mut tape, input)?;
        Ok(GridPrediction::from_raw(tape.value(out).clone())?)
    }
}

/// Decoded view of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellPrediction {
    pub confidence: f32,
    pub tx: f32,
    pub ty: f32,
    pub tw: f32,
    pub th: f32,
}

/// Raw per-cell outputs `5×8×8` (channel-major); sigmoid is applied to
/// confidence and offsets on read.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPrediction {
    raw: Tensor,
}

impl GridPrediction {
    pub fn from_raw(raw: Tensor) -> Result<Self, KernelError> {
        raw.expect_shape(&[CELL_OUTPUTS, GRID, GRID], "grid prediction")?;
        Ok(Self { raw })
    }

    pub fn raw(&self) -> &Tensor {
        &self.raw
    }

    pub fn raw_at(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.raw.data()[(channel * GRID + row) * GRID + col]
    }

    pub fn cell(&self, row: usize, col: usize) -> CellPrediction {
        let sig = crate::kernel::ops::sigmoid_scalar;
        CellPrediction {
            confidence: sig(self.raw_at(0, row, col)),
            tx: sig(self.raw_at(1, row, col)),
            ty: sig(self.raw_at(2, row, col)),
            tw: self.raw_at(3, row, col),
            th: self.raw_at(4, row, col),
        }
    }
}
