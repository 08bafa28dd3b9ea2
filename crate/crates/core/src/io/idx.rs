//! Reader for the big-endian IDX image and label files used by MNIST and
//! Fashion-MNIST.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dataset, Split};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxOptions {
    /// Output side length; must not exceed the stored side.
    pub downsample_to: usize,
    /// Scale pixels to `[0, 1]`; otherwise keep raw `0..=255` values.
    pub normalize: bool,
}

impl Default for IdxOptions {
    fn default() -> Self {
        Self {
            downsample_to: 8,
            normalize: true,
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(at as u64, format!("{what}: file ends inside the header")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = be_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::format(
            0,
            format!("{what}: bad magic {magic:#010x}, expected {expected:#010x}"),
        ));
    }
    Ok(())
}

/// Loads an image file and its label file.
pub fn load_idx(
    images: &Path,
    labels: &Path,
    options: IdxOptions,
    split: Split,
) -> Result<Dataset> {
    let read = |p: &Path| {
        fs::read(p).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(p.to_path_buf())
            } else {
                e.into()
            }
        })
    };
    parse_idx(&read(images)?, &read(labels)?, options, split)
}

/// Parses in-memory IDX bytes. Byte offsets in errors refer to the file named
/// in the message.
pub fn parse_idx(
    images: &[u8],
    labels: &[u8],
    options: IdxOptions,
    split: Split,
) -> Result<Dataset> {
    check_magic(images, IMAGES_MAGIC, "images")?;
    check_magic(labels, LABELS_MAGIC, "labels")?;
    let count = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let label_count = be_u32(labels, 4, "labels")? as usize;
    if label_count != count {
        return Err(Error::format(
            4,
            format!("labels: count {label_count} does not match {count} images"),
        ));
    }
    if rows != cols || rows == 0 {
        return Err(Error::format(
            8,
            format!("images: expected square images, got {rows}x{cols}"),
        ));
    }
    let pixels_needed = 16 + count * rows * cols;
    if images.len() < pixels_needed {
        return Err(Error::format(
            images.len() as u64,
            format!("images: truncated, expected {pixels_needed} bytes"),
        ));
    }
    if labels.len() < 8 + count {
        return Err(Error::format(
            labels.len() as u64,
            format!("labels: truncated, expected {} bytes", 8 + count),
        ));
    }
    let to = options.downsample_to;
    if to == 0 || to > rows {
        return Err(Error::InvalidArgument(format!(
            "cannot downsample {rows}x{rows} images to {to}x{to}"
        )));
    }
    let weights = area_weights(rows, to);
    let scale = if options.normalize { 1.0 / 255.0 } else { 1.0 };
    let mut inputs = Vec::with_capacity(count * to * to);
    let mut class = Vec::with_capacity(count);
    let mut image = vec![0.0; rows * rows];
    for i in 0..count {
        let raw = &images[16 + i * rows * rows..16 + (i + 1) * rows * rows];
        for (p, &b) in image.iter_mut().zip(raw) {
            *p = b as f64 * scale;
        }
        inputs.extend(downsample_with(&image, rows, to, &weights));
        let label = labels[8 + i] as usize;
        if label >= NUM_CLASSES {
            return Err(Error::format(
                8 + i as u64,
                format!("labels: label {label} out of range"),
            ));
        }
        class.push(label);
    }
    Dataset::from_labels(inputs, &class, to * to, NUM_CLASSES, split)
}

/// `weights[i][r]`: the fraction of output cell `i` covered by input pixel `r`
/// along one axis. Each row sums to 1.
fn area_weights(from: usize, to: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = from as f64 / to as f64;
    (0..to)
        .map(|i| {
            let (lo, hi) = (i as f64 * ratio, (i + 1) as f64 * ratio);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(from);
            (first..last)
                .filter_map(|r| {
                    let overlap = hi.min((r + 1) as f64) - lo.max(r as f64);
                    (overlap > 0.0).then_some((r, overlap / ratio))
                })
                .collect()
        })
        .collect()
}

fn downsample_with(
    image: &[f64],
    from: usize,
    to: usize,
    weights: &[Vec<(usize, f64)>],
) -> Vec<f64> {
    if from == to {
        return image.to_vec();
    }
    // Rows first, then columns.
    let mut half = vec![0.0; to * from];
    for (i, wi) in weights.iter().enumerate() {
        for &(r, a) in wi {
            for c in 0..from {
                half[i * from + c] += a * image[r * from + c];
            }
        }
    }
    let mut out = vec![0.0; to * to];
    for i in 0..to {
        for (j, wj) in weights.iter().enumerate() {
            out[i * to + j] = wj.iter().map(|&(c, a)| a * half[i * from + c]).sum();
        }
    }
    out
}

/// Area-weighted block averaging of a square `from x from` image; the mean
/// intensity is preserved for any `to <= from`.
pub fn downsample(image: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
    if image.len() != from * from {
        return Err(Error::dims("image pixels", from * from, image.len()));
    }
    if to == 0 || to > from {
        return Err(Error::InvalidArgument(format!(
            "cannot downsample {from}x{from} to {to}x{to}"
        )));
    }
    Ok(downsample_with(image, from, to, &area_weights(from, to)))
}

/// Encodes square images as an IDX image file.
pub fn encode_idx_images(side: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (side * side);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, side as u32, side as u32] {
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
