use std::io::{Read, Write};
use std::path::Path;

use super::binary::{expect_magic, read_f32s, read_u32, write_f32s, write_u32};
use super::IoError;
use crate::detector::{Architecture, DetectorWeights};
use crate::kernel::{ParamStore, Tensor};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DGW1";
const FIRST: &str = "adamw.m.";
const SECOND: &str = "adamw.v.";
const STEP: &str = "adamw.step";

fn write_record(w: &mut impl Write, name: &str, t: &Tensor) -> Result<(), IoError> {
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_u32(w, t.rank() as u32)?;
    for &e in t.shape() {
        write_u32(w, e as u32)?;
    }
    write_f32s(w, t.data())
}

fn read_record(r: &mut impl Read) -> Result<(String, Tensor), IoError> {
    let len = read_u32(r, "record name length")? as usize;
    if len > 1 << 16 {
        return Err(IoError::Invalid(format!("record name length {len}")));
    }
    let mut name = vec![0u8; len];
    r.read_exact(&mut name).map_err(|_| IoError::Truncated("record name".into()))?;
    let name = String::from_utf8(name).map_err(|_| IoError::Invalid("record name is not UTF-8".into()))?;
    let rank = read_u32(r, "record rank")? as usize;
    if rank > 8 {
        return Err(IoError::Invalid(format!("record {name} has rank {rank}")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(r, "record extent").map(|e| e as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let count: usize = shape.iter().product();
    let data = read_f32s(r, count, &name)?;
    Ok((name, Tensor::new(&shape, data)?))
}

/// Writes parameters, both optimizer moments and the step counter.
/// The step is stored bit-for-bit as two `u32` halves in an `f32` record.
pub fn write_weights(w: &mut impl Write, weights: &DetectorWeights) -> Result<(), IoError> {
    let params = weights.store.params();
    w.write_all(WEIGHTS_MAGIC)?;
    write_u32(w, (params.len() * 3 + 1) as u32)?;
    for p in params {
        write_record(w, &p.name, &p.value)?;
        write_record(w, &format!("{FIRST}{}", p.name), &p.first_moment)?;
        write_record(w, &format!("{SECOND}{}", p.name), &p.second_moment)?;
    }
    let step = weights.store.step();
    let halves = vec![f32::from_bits(step as u32), f32::from_bits((step >> 32) as u32)];
    write_record(w, STEP, &Tensor::new(&[2], halves)?)
}

pub fn read_weights(r: &mut impl Read) -> Result<DetectorWeights, IoError> {
    expect_magic(r, WEIGHTS_MAGIC)?;
    let count = read_u32(r, "record count")? as usize;
    let mut records = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        records.push(read_record(r)?);
    }
    let find = |name: &str| records.iter().find(|(n, _)| n == name).map(|(_, t)| t);
    let mut store = ParamStore::new();
    for (name, value) in records.iter().filter(|(n, _)| !n.starts_with("adamw.")) {
        let m = find(&format!("{FIRST}{name}")).ok_or_else(|| IoError::Invalid(format!("no first moment for {name}")))?;
        let v = find(&format!("{SECOND}{name}")).ok_or_else(|| IoError::Invalid(format!("no second moment for {name}")))?;
        store.insert_with_moments(name.clone(), value.clone(), m.clone(), v.clone())?;
    }
    let step = find(STEP).ok_or_else(|| IoError::Invalid("no step record".into()))?;
    if step.len() != 2 {
        return Err(IoError::Invalid("step record must hold two words".into()));
    }
    store.set_step(step.data()[0].to_bits() as u64 | (step.data()[1].to_bits() as u64) << 32);
    let arch = architecture_of(&store)?;
    Ok(DetectorWeights { arch, store })
}

/// Widths recovered from the parameter shapes.
fn architecture_of(store: &ParamStore) -> Result<Architecture, IoError> {
    let out_channels = |name: &str| store.index_of(name).map(|i| store.value(i).shape()[0]);
    let mut block_widths = Vec::new();
    while let Some(c) = out_channels(&format!("block{}.conv.w", block_widths.len())) {
        block_widths.push(c);
    }
    let head_width = out_channels("head.0.w").ok_or_else(|| IoError::Invalid("no head.0.w parameter".into()))?;
    if block_widths.is_empty() {
        return Err(IoError::Invalid("no backbone blocks".into()));
    }
    Ok(Architecture {
        block_widths,
        head_width,
    })
}

pub fn save_weights(path: &Path, weights: &DetectorWeights) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_weights(&mut buf, weights)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<DetectorWeights, IoError> {
    let bytes = std::fs::read(path)?;
    read_weights(&mut bytes.as_slice())
}
