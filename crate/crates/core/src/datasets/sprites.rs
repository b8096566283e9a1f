//! Digit sprites and their per-class motion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary bitmap, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Glyph {
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    /// Inclusive-exclusive bounds `(x0, y0, x1, y1)` of the set pixels.
    pub fn tight_bounds(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bounds: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bounds = Some(match bounds {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        bounds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpriteClass {
    pub class_id: u32,
    pub glyph: Glyph,
    /// Pixels per frame.
    pub velocity: (i32, i32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum SpriteSource {
    Procedural,
    /// IDX image and label files.
    MnistIdx { images: String, labels: String },
}

/// Per-class motion: every component has magnitude at most 2 px/frame.
pub const VELOCITIES: [(i32, i32); 10] = [(2, 0), (-2, 0), (0, 2), (0, -2), (2, 2), (2, -2), (-2, 2), (-2, -2), (2, 1), (-2, -1)];

// Each pattern cell becomes a 2x2 block of the 16x16 glyph. Every pattern
// touches all four borders so the glyph's tight box is the full bitmap.
const PATTERNS: [[&str; 8]; 10] = [
    ["########", "##....##", "##....##", "##....##", "##....##", "##....##", "##....##", "########"],
    ["...##...", "..###...", ".####...", "...##...", "...##...", "...##...", "...##...", "########"],
    ["########", "......##", "......##", "########", "##......", "##......", "##......", "########"],
    ["########", "......##", "......##", ".#######", "......##", "......##", "......##", "########"],
    ["##....##", "##....##", "##....##", "########", "......##", "......##", "......##", "......##"],
    ["########", "##......", "##......", "########", "......##", "......##", "......##", "########"],
    ["########", "##......", "##......", "########", "##....##", "##....##", "##....##", "########"],
    ["########", "......##", ".....##.", "....##..", "...##...", "..##....", ".##.....", "##......"],
    ["########", "##....##", "##....##", "########", "##....##", "##....##", "##....##", "########"],
    ["########", "##....##", "##....##", "########", "......##", "......##", "......##", "########"],
];

/// Deterministic 16x16 glyph for `class_id`.
pub fn procedural_glyph(class_id: u32) -> Glyph {
    let pattern = &PATTERNS[class_id as usize % 10];
    let mut bits = vec![false; 16 * 16];
    for (py, row) in pattern.iter().enumerate() {
        for (px, c) in row.bytes().enumerate() {
            if c == b'#' {
                for dy in 0..2 {
                    for dx in 0..2 {
                        bits[(2 * py + dy) * 16 + 2 * px + dx] = true;
                    }
                }
            }
        }
    }
    Glyph { width: 16, height: 16, bits }
}

/// The ten sprite classes with their fixed velocities.
pub fn make_sprite_classes(source: &SpriteSource) -> Result<Vec<SpriteClass>> {
    let glyphs: Vec<Glyph> = match source {
        SpriteSource::Procedural => (0..10).map(procedural_glyph).collect(),
        SpriteSource::MnistIdx { images, labels } => {
            let set = super::idx::read_mnist_idx(images.as_ref(), labels.as_ref())?;
            let exemplars = set.exemplars();
            exemplars
                .into_iter()
                .enumerate()
                .map(|(c, g)| g.ok_or_else(|| Error::Format(format!("no non-empty MNIST exemplar for class {c}"))))
                .collect::<Result<_>>()?
        }
    };
    Ok(glyphs
        .into_iter()
        .enumerate()
        .map(|(c, glyph)| SpriteClass { class_id: c as u32, glyph, velocity: VELOCITIES[c] })
        .collect())
}
