use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::binary::{expect_magic, read_f32s, read_u32, write_f32s, write_u32};
use super::IoError;
use crate::assign::BBox;
use crate::detector::{TrainingSample, INPUT_CHANNELS, INPUT_SIZE};
use crate::kernel::Tensor;

pub const SAMPLE_MAGIC: &[u8; 4] = b"DGS1";
const PAYLOAD: usize = INPUT_CHANNELS * INPUT_SIZE * INPUT_SIZE;

/// Magic, `t`, the `20×16×16` input, then `(x, y, w, h, class)` per box.
/// Box confidence is not stored; loaded boxes have confidence 1.
pub fn write_sample(w: &mut impl Write, sample: &TrainingSample) -> Result<(), IoError> {
    sample
        .input
        .expect_shape(&[INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE], "sample input")?;
    w.write_all(SAMPLE_MAGIC)?;
    write_u32(w, sample.t as u32)?;
    write_f32s(w, sample.input.data())?;
    write_u32(w, sample.boxes.len() as u32)?;
    for b in &sample.boxes {
        write_f32s(w, &[b.x, b.y, b.w, b.h])?;
        let class = b.best_class().map_or(0, |(id, _)| id);
        write_u32(w, class as u32)?;
    }
    Ok(())
}

pub fn read_sample(r: &mut impl Read) -> Result<TrainingSample, IoError> {
    expect_magic(r, SAMPLE_MAGIC)?;
    let t = read_u32(r, "noise level")? as usize;
    let input = Tensor::new(&[INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE], read_f32s(r, PAYLOAD, "sample payload")?)?;
    let count = read_u32(r, "box count")? as usize;
    if count > 4096 {
        return Err(IoError::Invalid(format!("{count} boxes in one sample")));
    }
    let mut boxes = Vec::with_capacity(count);
    for _ in 0..count {
        let v = read_f32s(r, 4, "box")?;
        let class = read_u32(r, "box class")? as usize;
        boxes.push(BBox::new(v[0], v[1], v[2], v[3], 1.0, class));
    }
    Ok(TrainingSample { input, boxes, t })
}

pub fn sample_file_name(t: usize, index: usize) -> String {
    format!("sample_t{t:04}_{index:06}.dgs")
}

/// Writes each sample to its own file; returns the paths in order.
pub fn save_samples(dir: &Path, samples: &[TrainingSample]) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(dir)?;
    let mut counters = std::collections::BTreeMap::<usize, usize>::new();
    let mut paths = Vec::with_capacity(samples.len());
    for s in samples {
        let index = counters.entry(s.t).or_default();
        let path = dir.join(sample_file_name(s.t, *index));
        *index += 1;
        let mut buf = Vec::new();
        write_sample(&mut buf, s)?;
        std::fs::write(&path, buf)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Every `.dgs` file of a directory, in file-name order.
pub fn load_samples(dir: &Path) -> Result<Vec<TrainingSample>, IoError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dgs"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p)?;
            read_sample(&mut bytes.as_slice())
        })
        .collect()
}
