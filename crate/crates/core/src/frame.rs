//! 8-bit grayscale frames and their binary PGM (P5) encoding.

use crate::error::{Error, Result};
use crate::geometry::FrameSize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: u32,
    pub height: u32,
    /// Row-major, one byte per pixel.
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, pixels: vec![0; width as usize * height as usize] }
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self { width, height, pixels: vec![value; width as usize * height as usize] }
    }

    pub fn size(&self) -> FrameSize {
        FrameSize::new(self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.pixels[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parse a binary PGM with 8-bit samples. `#` comments are allowed in the header.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        if bytes.len() < 2 || &bytes[..2] != b"P5" {
            return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
        }
        pos += 2;
        let width = header_number(bytes, &mut pos)?;
        let height = header_number(bytes, &mut pos)?;
        let maxval = header_number(bytes, &mut pos)?;
        if width == 0 || height == 0 {
            return Err(Error::Format(format!("PGM dimensions must be positive, got {width}x{height}")));
        }
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(Error::Format("missing whitespace after PGM header".into())),
        }
        let (w, h) = (u32::try_from(width), u32::try_from(height));
        let (Ok(w), Ok(h)) = (w, h) else {
            return Err(Error::Format("PGM dimensions too large".into()));
        };
        let n = (w as usize).checked_mul(h as usize).ok_or_else(|| Error::Format("PGM dimensions too large".into()))?;
        let available = bytes.len() - pos;
        if available < n {
            return Err(Error::Truncated { expected: n, actual: available });
        }
        let pixels = bytes[pos..pos + n].to_vec();
        if let Some(v) = pixels.iter().find(|v| u64::from(**v) > maxval) {
            return Err(Error::Format(format!("sample {v} exceeds maxval {maxval}")));
        }
        Ok(Self { width: w, height: h, pixels })
    }
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(b) = bytes.get(*pos) {
                    *pos += 1;
                    if *b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::Format("unexpected end of PGM header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("expected a number in PGM header".into()));
    }
    // at most 10 digits keeps the value well inside u64
    if *pos - start > 10 {
        return Err(Error::Format("PGM header number too long".into()));
    }
    let text = std::str::from_utf8(&bytes[start..*pos]).expect("ascii digits");
    Ok(text.parse().expect("bounded digit string"))
}
