//! Axis-aligned box arithmetic in the top-left + size parameterization.

use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle: top-left corner `(x, y)` plus `(w, h)`, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Componentwise difference between two boxes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Offset {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    /// Box with the given center and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }

    /// Non-negative size and finite coordinates.
    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.w >= 0.0 && self.h >= 0.0
    }

    /// Corner form `(x1, y1, x2, y2)`.
    fn corners(&self) -> (f64, f64, f64, f64) {
        (self.x, self.y, self.x + self.w, self.y + self.h)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.x * factor, self.y * factor, self.w * factor, self.h * factor)
    }
}

impl Offset {
    pub const ZERO: Offset = Offset { dx: 0.0, dy: 0.0, dw: 0.0, dh: 0.0 };

    pub const fn new(dx: f64, dy: f64, dw: f64, dh: f64) -> Self {
        Self { dx, dy, dw, dh }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for Offset {
    type Output = Offset;

    fn add(self, rhs: Offset) -> Offset {
        Offset::new(self.dx + rhs.dx, self.dy + rhs.dy, self.dw + rhs.dw, self.dh + rhs.dh)
    }
}

impl std::ops::AddAssign for Offset {
    fn add_assign(&mut self, rhs: Offset) {
        *self = *self + rhs;
    }
}

impl std::ops::Neg for Offset {
    type Output = Offset;

    fn neg(self) -> Offset {
        Offset::new(-self.dx, -self.dy, -self.dw, -self.dh)
    }
}

impl FrameSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    /// Per-coordinate scale used to normalize boxes: `(W, H, W, H)`.
    pub fn box_scale(&self) -> [f64; 4] {
        let (w, h) = (self.width as f64, self.height as f64);
        [w, h, w, h]
    }
}

/// Intersection over union. Zero when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

pub fn offset_between(prev: &BBox, next: &BBox) -> Offset {
    Offset::new(next.x - prev.x, next.y - prev.y, next.w - prev.w, next.h - prev.h)
}

/// Componentwise `b + d`. The result may have negative size; callers check validity.
pub fn apply_offset(b: &BBox, d: &Offset) -> BBox {
    BBox::new(b.x + d.dx, b.y + d.dy, b.w + d.dw, b.h + d.dh)
}

/// Intersect a box with `[0, width] x [0, height]`.
///
/// A box entirely outside the frame collapses to a zero-area box at the
/// nearest point of the frame.
pub fn clamp_to_frame(b: &BBox, frame: FrameSize) -> BBox {
    let (fw, fh) = (frame.width as f64, frame.height as f64);
    let (x1, y1, x2, y2) = b.corners();
    let cx1 = x1.clamp(0.0, fw);
    let cy1 = y1.clamp(0.0, fh);
    let cx2 = x2.clamp(0.0, fw).max(cx1);
    let cy2 = y2.clamp(0.0, fh).max(cy1);
    BBox::new(cx1, cy1, cx2 - cx1, cy2 - cy1)
}
