//! On-disk formats: weights, samples, images, configuration and CSV.

mod binary;
mod config;
mod image;
mod samples;
mod weights;

pub use config::{Config, SEED_ENV};
pub use image::{encode_pgm, encode_ppm, export_cam_image, export_mask_image, export_side_by_side, normalize};
pub use samples::{load_samples, read_sample, sample_file_name, save_samples, write_sample, SAMPLE_MAGIC};
pub use weights::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_MAGIC};

use crate::kernel::KernelError;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("expected magic {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("file ends early while reading {0}")]
    Truncated(String),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// CSV text with a header row, `.` decimals and `\n` line endings.
pub fn csv<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.as_ref().join(","));
        out.push('\n');
    }
    out
}
