//! MNIST IDX reader.
//!
//! Images: big-endian magic `0x00000803`, then count, rows, cols (u32 BE),
//! then `count * rows * cols` unsigned bytes. Labels: magic `0x00000801`,
//! count, then `count` bytes.

use std::path::Path;

use super::sprites::Glyph;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
/// Pixels at or above this value are set.
pub const BINARIZE_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: u32,
    pub cols: u32,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = (self.rows * self.cols) as usize;
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// Binarized glyphs with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGlyphs {
    pub glyphs: Vec<Glyph>,
    pub labels: Vec<u8>,
}

impl LabeledGlyphs {
    /// First non-empty glyph of each class 0..=9.
    pub fn exemplars(&self) -> Vec<Option<Glyph>> {
        (0..10u8)
            .map(|c| {
                self.labels
                    .iter()
                    .zip(&self.glyphs)
                    .find(|(l, g)| **l == c && g.tight_bounds().is_some())
                    .map(|(_, g)| g.clone())
            })
            .collect()
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated { expected: at + 4, actual: bytes.len() })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Format(format!("bad IDX magic {magic:#010x}, expected {expected:#010x}")));
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)?;
    let cols = be_u32(bytes, 12)?;
    let expected = (rows as usize)
        .checked_mul(cols as usize)
        .and_then(|n| n.checked_mul(count))
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| Error::Format("IDX image dimensions overflow".into()))?;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    Ok(IdxImages { count, rows, cols, pixels: bytes[16..expected].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let expected = count.checked_add(8).ok_or_else(|| Error::Format("IDX label count overflow".into()))?;
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, actual: bytes.len() });
    }
    Ok(bytes[8..expected].to_vec())
}

/// Pair parsed images with labels and binarize them.
pub fn decode_mnist(image_bytes: &[u8], label_bytes: &[u8]) -> Result<LabeledGlyphs> {
    let images = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if images.count != labels.len() {
        return Err(Error::Format(format!("{} images but {} labels", images.count, labels.len())));
    }
    let glyphs = (0..images.count)
        .map(|i| Glyph {
            width: images.cols,
            height: images.rows,
            bits: images.image(i).iter().map(|p| *p >= BINARIZE_THRESHOLD).collect(),
        })
        .collect();
    Ok(LabeledGlyphs { glyphs, labels })
}

pub fn read_mnist_idx(images: &Path, labels: &Path) -> Result<LabeledGlyphs> {
    let ib = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lb = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
    decode_mnist(&ib, &lb)
}

/// Encode images in IDX form.
pub fn encode_idx_images(rows: u32, cols: u32, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [IMAGE_MAGIC, images.len() as u32, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
