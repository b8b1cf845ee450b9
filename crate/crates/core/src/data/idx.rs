use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{Dataset, InputShape};
use crate::error::{EaeError, Result};
use crate::nn::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes.get(at..at + 4).ok_or(EaeError::Length {
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Reads a file, transparently inflating gzip (`1f 8b`) content.
fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| EaeError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| EaeError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Returns `(count, rows, cols, pixels)` of an IDX3 unsigned-byte image file.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(EaeError::Format {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() < expected {
        return Err(EaeError::Length {
            expected,
            found: bytes.len(),
        });
    }
    Ok((n, rows, cols, &bytes[16..expected]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(EaeError::Format {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(EaeError::Length {
            expected,
            found: bytes.len(),
        });
    }
    Ok(&bytes[8..expected])
}

pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub(crate) fn dataset_from_idx(
    images: &[u8],
    labels: Option<&[u8]>,
    name: &str,
) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = match labels {
        Some(b) => {
            let l = parse_idx_labels(b)?;
            if l.len() != n {
                return Err(EaeError::dim("IDX labels", n, l.len()));
            }
            Some(l.to_vec())
        }
        None => None,
    };
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let examples = Tensor::matrix(n, rows * cols, data)?;
    Dataset::new(
        examples,
        InputShape::Image {
            height: rows,
            width: cols,
        },
        name,
        labels,
    )
}

/// Loads IDX images (magic 2051) and optional labels (magic 2049), raw or
/// gzipped, scaling pixels to `[0, 1]`.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let img = read_bytes(images)?;
    let lab = labels.map(read_bytes).transpose()?;
    let name = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    dataset_from_idx(&img, lab.as_deref(), &name)
}
