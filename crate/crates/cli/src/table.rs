//! Box tables in CSV form, for scoring detections produced elsewhere.

use std::path::Path;

use anyhow::{bail, Context};
use dg_core::BBox;

/// One parsed row: image index and box.
fn parse_row(line: &str, with_confidence: bool) -> anyhow::Result<(usize, BBox)> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let expected = if with_confidence { 7 } else { 6 };
    if fields.len() != expected {
        bail!("expected {expected} fields, found {}", fields.len());
    }
    let image: usize = fields[0].parse().context("image index")?;
    let class: usize = fields[1].parse().context("class")?;
    let mut v = [0f32; 4];
    for (slot, field) in v.iter_mut().zip(&fields[2..6]) {
        *slot = field.parse().with_context(|| format!("coordinate {field:?}"))?;
    }
    let confidence = if with_confidence {
        fields[6].parse().context("confidence")?
    } else {
        1.0
    };
    Ok((image, BBox::new(v[0], v[1], v[2], v[3], confidence, class)))
}

/// Rows of `image,class,x,y,w,h[,confidence]` after a header line.
pub fn read_boxes(path: &Path, with_confidence: bool) -> anyhow::Result<Vec<(usize, BBox)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| parse_row(l, with_confidence).with_context(|| format!("{}:{}", path.display(), no + 1)))
        .collect()
}

/// Groups rows into per-image lists covering images `0..images`.
pub fn by_image(rows: Vec<(usize, BBox)>, images: usize) -> Vec<Vec<BBox>> {
    let mut out = vec![Vec::new(); images];
    for (image, b) in rows {
        out[image].push(b);
    }
    out
}
