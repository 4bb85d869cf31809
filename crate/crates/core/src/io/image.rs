use std::path::Path;

use super::IoError;

/// Maps values to 0–255 by min–max scaling; a constant plane maps to 128.
pub fn normalize(values: &[f32]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    let range = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| (((v - lo) as f64 / range) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>, IoError> {
    if pixels.len() != width * height {
        return Err(IoError::Invalid(format!(
            "{} pixels for a {width}×{height} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>, IoError> {
    if rgb.len() != width * height * 3 {
        return Err(IoError::Invalid(format!(
            "{} bytes for a {width}×{height} color image",
            rgb.len()
        )));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}

/// Writes an `H×W` map as a normalized gray image.
pub fn export_cam_image(values: &[f32], height: usize, width: usize, path: &Path) -> Result<(), IoError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(IoError::Invalid("map contains non-finite values".into()));
    }
    std::fs::write(path, encode_pgm(width, height, &normalize(values))?)?;
    Ok(())
}

/// Writes a binary mask as 0/255.
pub fn export_mask_image(mask: &[bool], height: usize, width: usize, path: &Path) -> Result<(), IoError> {
    let pixels: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    std::fs::write(path, encode_pgm(width, height, &pixels)?)?;
    Ok(())
}

/// Equal-sized maps placed left to right, each normalized on its own and
/// separated by one red column.
pub fn export_side_by_side(planes: &[&[f32]], height: usize, width: usize, path: &Path) -> Result<(), IoError> {
    if planes.is_empty() {
        return Err(IoError::Invalid("nothing to place side by side".into()));
    }
    let total = planes.len() * width + planes.len() - 1;
    let mut rgb = vec![0u8; total * height * 3];
    for (i, plane) in planes.iter().enumerate() {
        if plane.len() != height * width {
            return Err(IoError::Invalid(format!("plane {i} is not {height}×{width}")));
        }
        let gray = normalize(plane);
        let x0 = i * (width + 1);
        for y in 0..height {
            for x in 0..width {
                let o = (y * total + x0 + x) * 3;
                rgb[o..o + 3].fill(gray[y * width + x]);
            }
            if i + 1 < planes.len() {
                let o = (y * total + x0 + width) * 3;
                rgb[o] = 255;
            }
        }
    }
    std::fs::write(path, encode_ppm(total, height, &rgb)?)?;
    Ok(())
}
