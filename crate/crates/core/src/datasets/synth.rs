//! Moving-digit video synthesis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sprites::{make_sprite_classes, SpriteClass, SpriteSource};
use crate::association::GtObject;
use crate::error::{Error, Result};
use crate::frame::GrayFrame;
use crate::geometry::{clamp_to_frame, BBox, FrameSize};
use crate::seed;
use crate::trajectory::GroundTruthTrack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Straight-line motion across the frame. The box is the glyph box
    /// clipped to the frame; the path passes near the frame center at mid-video.
    Pass,
    /// Reflect the velocity component that would leave the frame.
    Bounce,
    /// Toroidal frame.
    Wrap,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Pass => "pass",
            Boundary::Bounce => "bounce",
            Boundary::Wrap => "wrap",
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pass" => Ok(Boundary::Pass),
            "bounce" => Ok(Boundary::Bounce),
            "wrap" => Ok(Boundary::Wrap),
            other => Err(Error::InvalidArgument(format!("unknown boundary '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub boundary: Boundary,
    pub source: SpriteSource,
    /// Each glyph pixel is rendered as a `sprite_scale x sprite_scale` block.
    pub sprite_scale: u32,
    pub frame_size: FrameSize,
    pub n_frames: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 80,
            seed: 0,
            boundary: Boundary::Pass,
            source: SpriteSource::Procedural,
            sprite_scale: 3,
            frame_size: FrameSize::new(64, 64),
            n_frames: 32,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n_train.is_multiple_of(10) || !self.n_test.is_multiple_of(10) {
            return Err(Error::InvalidArgument(format!(
                "split sizes must be multiples of 10 (one video per class each), got {} / {}",
                self.n_train, self.n_test
            )));
        }
        if self.n_train == 0 {
            return Err(Error::InvalidArgument("n_train must be positive".into()));
        }
        if self.sprite_scale == 0 || self.n_frames == 0 || self.frame_size.width == 0 || self.frame_size.height == 0 {
            return Err(Error::InvalidArgument("sprite scale, frame count and frame size must be positive".into()));
        }
        Ok(())
    }
}

/// One annotated object over a whole video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTrack {
    pub track_id: u32,
    pub track: GroundTruthTrack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedVideo {
    pub id: String,
    pub class_id: u32,
    pub start: (i32, i32),
    pub frames: Vec<GrayFrame>,
    pub tracks: Vec<VideoTrack>,
}

impl AnnotatedVideo {
    pub fn frame_size(&self) -> FrameSize {
        self.frames[0].size()
    }

    /// Annotated objects per frame.
    pub fn objects_per_frame(&self) -> Vec<Vec<GtObject>> {
        (0..self.frames.len())
            .map(|f| {
                self.tracks
                    .iter()
                    .filter_map(|t| t.track.get(f).map(|b| GtObject { track_id: t.track_id, class_id: t.track.class_id, bbox: b }))
                    .collect()
            })
            .collect()
    }
}

/// Size in pixels of the rendered glyph's set region, and its offset inside the scaled bitmap.
fn sprite_extent(sprite: &SpriteClass, scale: u32) -> Result<((i32, i32), (i32, i32))> {
    let (x0, y0, x1, y1) = sprite
        .glyph
        .tight_bounds()
        .ok_or_else(|| Error::InvalidArgument(format!("glyph of class {} is empty", sprite.class_id)))?;
    let s = scale as i32;
    Ok((((x1 - x0) as i32 * s, (y1 - y0) as i32 * s), (x0 as i32 * s, y0 as i32 * s)))
}

/// Advance one coordinate by `v`, reflecting at `0` and `max`.
fn bounce_step(p: i32, v: i32, max: i32) -> (i32, i32) {
    let mut next = p + v;
    let mut v = v;
    if max == 0 {
        return (0, v);
    }
    if next > max {
        next = 2 * max - next;
        v = -v;
    } else if next < 0 {
        next = -next;
        v = -v;
    }
    (next, v)
}

/// Render a video of one sprite translating with its class velocity.
///
/// `start` is the top-left of the glyph's tight box in frame 0. Only
/// [`Boundary::Pass`] accepts a start outside the frame.
pub fn synthesize_video(
    sprite: &SpriteClass,
    start: (i32, i32),
    frame_size: FrameSize,
    n_frames: usize,
    boundary: Boundary,
    scale: u32,
) -> Result<AnnotatedVideo> {
    let ((bw, bh), (ox, oy)) = sprite_extent(sprite, scale)?;
    let (fw, fh) = (frame_size.width as i32, frame_size.height as i32);
    if bw > fw || bh > fh {
        return Err(Error::InvalidArgument(format!("sprite {bw}x{bh} does not fit a {fw}x{fh} frame")));
    }
    let (max_x, max_y) = (fw - bw, fh - bh);
    if boundary != Boundary::Pass && (!(0..=max_x).contains(&start.0) || !(0..=max_y).contains(&start.1)) {
        return Err(Error::InvalidArgument(format!("start {start:?} places the sprite outside the frame")));
    }
    let (mut x, mut y) = start;
    let (mut vx, mut vy) = sprite.velocity;
    let mut frames = Vec::with_capacity(n_frames);
    let mut boxes = Vec::with_capacity(n_frames);
    let mut valid = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        frames.push(render(sprite, x - ox, y - oy, frame_size, scale, boundary));
        let b = BBox::new(x as f64, y as f64, bw as f64, bh as f64);
        if boundary == Boundary::Pass {
            let c = clamp_to_frame(&b, frame_size);
            valid.push(c.w > 0.0 && c.h > 0.0);
            boxes.push(c);
        } else {
            valid.push(true);
            boxes.push(b);
        }
        match boundary {
            Boundary::Pass => {
                x += vx;
                y += vy;
            }
            Boundary::Bounce => {
                (x, vx) = bounce_step(x, vx, max_x);
                (y, vy) = bounce_step(y, vy, max_y);
            }
            Boundary::Wrap => {
                x = (x + vx).rem_euclid(fw);
                y = (y + vy).rem_euclid(fh);
            }
        }
    }
    Ok(AnnotatedVideo {
        id: String::new(),
        class_id: sprite.class_id,
        start,
        frames,
        tracks: vec![VideoTrack { track_id: 0, track: GroundTruthTrack::new(boxes, valid, sprite.class_id)? }],
    })
}

fn render(sprite: &SpriteClass, left: i32, top: i32, size: FrameSize, scale: u32, boundary: Boundary) -> GrayFrame {
    let mut frame = GrayFrame::new(size.width, size.height);
    let (fw, fh) = (size.width as i32, size.height as i32);
    let g = &sprite.glyph;
    for gy in 0..g.height {
        for gx in 0..g.width {
            if !g.get(gx, gy) {
                continue;
            }
            for sy in 0..scale {
                for sx in 0..scale {
                    let px = left + (gx * scale + sx) as i32;
                    let py = top + (gy * scale + sy) as i32;
                    let (px, py) = match boundary {
                        Boundary::Wrap => (px.rem_euclid(fw), py.rem_euclid(fh)),
                        Boundary::Bounce | Boundary::Pass => (px, py),
                    };
                    if (0..fw).contains(&px) && (0..fh).contains(&py) {
                        frame.set(px as u32, py as u32, 255);
                    }
                }
            }
        }
    }
    frame
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub train: Vec<AnnotatedVideo>,
    pub test: Vec<AnnotatedVideo>,
}

/// Largest displacement of the mid-video position from the frame center under [`Boundary::Pass`].
pub const PASS_JITTER: i32 = 12;

/// Frame-0 position whose straight path puts the glyph near the frame center at mid-video.
fn pass_start(velocity: (i32, i32), (bw, bh): (i32, i32), cfg: &DatasetConfig, rng: &mut impl Rng) -> (i32, i32) {
    let half = (cfg.n_frames as i32 - 1) as f64 / 2.0;
    let mut axis = |v: i32, size: i32, frame: u32| {
        let centered = (frame as i32 - size) as f64 / 2.0 - v as f64 * half;
        centered.round() as i32 + rng.random_range(-PASS_JITTER..=PASS_JITTER)
    };
    let x = axis(velocity.0, bw, cfg.frame_size.width);
    let y = axis(velocity.1, bh, cfg.frame_size.height);
    (x, y)
}

fn build_split(classes: &[SpriteClass], cfg: &DatasetConfig, split: &str, n: usize) -> Result<Vec<AnnotatedVideo>> {
    (0..n)
        .map(|i| {
            let sprite = &classes[i % 10];
            let ((bw, bh), _) = sprite_extent(sprite, cfg.sprite_scale)?;
            let mut rng = seed::indexed_stream(cfg.seed, &format!("data/{split}"), i as u64);
            let max_x = cfg.frame_size.width as i32 - bw;
            let max_y = cfg.frame_size.height as i32 - bh;
            if max_x < 0 || max_y < 0 {
                return Err(Error::InvalidArgument("sprite larger than frame".into()));
            }
            let start = match cfg.boundary {
                Boundary::Pass => pass_start(sprite.velocity, (bw, bh), cfg, &mut rng),
                Boundary::Bounce | Boundary::Wrap => (rng.random_range(0..=max_x), rng.random_range(0..=max_y)),
            };
            let mut video = synthesize_video(sprite, start, cfg.frame_size, cfg.n_frames, cfg.boundary, cfg.sprite_scale)?;
            video.id = format!("{split}_{i:04}");
            Ok(video)
        })
        .collect()
}

/// Train and test splits with equal per-class counts; class of video `i` is `i % 10`.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let classes = make_sprite_classes(&cfg.source)?;
    Ok(Dataset {
        config: cfg.clone(),
        train: build_split(&classes, cfg, "train", cfg.n_train)?,
        test: build_split(&classes, cfg, "test", cfg.n_test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::sprites::VELOCITIES;

    fn classes() -> Vec<SpriteClass> {
        make_sprite_classes(&SpriteSource::Procedural).unwrap()
    }

    fn raster_bounds(f: &GrayFrame) -> Option<BBox> {
        let mut b: Option<(u32, u32, u32, u32)> = None;
        for y in 0..f.height {
            for x in 0..f.width {
                if f.get(x, y) > 0 {
                    b = Some(match b {
                        None => (x, y, x + 1, y + 1),
                        Some((a, c, d, e)) => (a.min(x), c.min(y), d.max(x + 1), e.max(y + 1)),
                    });
                }
            }
        }
        b.map(|(x0, y0, x1, y1)| BBox::new(x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64))
    }

    #[test]
    fn linear_motion() {
        let v = synthesize_video(&classes()[0], (10, 10), FrameSize::new(64, 64), 32, Boundary::Bounce, 1).unwrap();
        assert_eq!(v.tracks[0].track.boxes[5].x, 20.0);
        assert_eq!(v.frames.len(), 32);
        assert!(v.tracks[0].track.valid.iter().all(|x| *x));
    }

    #[test]
    fn bounce_reflects_symmetrically() {
        // independent scalar simulation: unfold the motion and fold it back into [0, max]
        let v = synthesize_video(&classes()[0], (40, 0), FrameSize::new(64, 64), 32, Boundary::Bounce, 1).unwrap();
        let max = 64 - 16;
        let fold = |p: i32| {
            let period = 2 * max;
            let m = p.rem_euclid(period);
            if m > max { period - m } else { m }
        };
        for (f, b) in v.tracks[0].track.boxes.iter().enumerate() {
            assert_eq!(b.x, fold(40 + 2 * f as i32) as f64, "frame {f}");
        }
        // at contact the position is at the wall, and neighbors are mirror images
        assert_eq!(v.tracks[0].track.boxes[4].x, 48.0);
        assert_eq!(v.tracks[0].track.boxes[3].x, v.tracks[0].track.boxes[5].x);
    }

    #[test]
    fn wrap_is_modular() {
        let v = synthesize_video(&classes()[0], (30, 5), FrameSize::new(64, 64), 32, Boundary::Wrap, 1).unwrap();
        for (f, b) in v.tracks[0].track.boxes.iter().enumerate() {
            assert_eq!(b.x as i32, (30 + 2 * f as i32).rem_euclid(64));
        }
        // frame 20: x = 70 mod 64 = 6; the glyph occupies columns 6..22 with no spill
        assert_eq!(raster_bounds(&v.frames[20]).unwrap().x, 6.0);
        // frame 18: x = 66 mod 64 = 2
        assert_eq!(raster_bounds(&v.frames[18]).unwrap().x, 2.0);
        // frame 10: x = 50, the glyph wraps across the right edge
        assert_eq!(raster_bounds(&v.frames[10]).unwrap().w, 64.0);
    }

    #[test]
    fn boxes_are_tight_and_inside() {
        for (c, s) in classes().iter().enumerate() {
            for scale in [1, 3] {
                let v = synthesize_video(s, (3, 7), FrameSize::new(64, 64), 32, Boundary::Bounce, scale).unwrap();
                for (f, frame) in v.frames.iter().enumerate() {
                    let b = v.tracks[0].track.boxes[f];
                    assert_eq!(raster_bounds(frame), Some(b), "class {c} scale {scale} frame {f}");
                    assert!(b.x >= 0.0 && b.y >= 0.0 && b.x + b.w <= 64.0 && b.y + b.h <= 64.0);
                }
                assert_eq!(s.velocity, VELOCITIES[c]);
            }
        }
    }

    #[test]
    fn pass_clips_to_visible_part() {
        // 16 px glyph moving +2 in x from x = -10: visible width grows, then shrinks at the right edge
        let v = synthesize_video(&classes()[0], (-10, 4), FrameSize::new(64, 64), 40, Boundary::Pass, 1).unwrap();
        let t = &v.tracks[0].track;
        assert_eq!(t.boxes[0], BBox::new(0.0, 4.0, 6.0, 16.0));
        assert_eq!(t.boxes[10], BBox::new(10.0, 4.0, 16.0, 16.0));
        assert_eq!(t.boxes[34], BBox::new(58.0, 4.0, 6.0, 16.0));
        assert!(t.valid[36] && !t.valid[37]);
        for (f, frame) in v.frames.iter().enumerate().filter(|(f, _)| t.valid[*f]) {
            assert_eq!(raster_bounds(frame), Some(t.boxes[f]), "frame {f}");
        }
        assert_eq!(raster_bounds(&v.frames[39]), None);
    }

    #[test]
    fn pass_paths_visible_and_centered() {
        let d = build_dataset(&DatasetConfig { n_train: 20, n_test: 10, seed: 2, ..Default::default() }).unwrap();
        for v in d.train.iter().chain(&d.test) {
            let t = &v.tracks[0].track;
            assert!(t.valid.iter().all(|x| *x), "{}", v.id);
            let vel = VELOCITIES[v.class_id as usize];
            // unclipped top-left at mid-video lies within the jitter of the centered position (8, 8)
            for (axis, s) in [(0, v.start.0), (1, v.start.1)] {
                let mid = s as f64 + [vel.0, vel.1][axis] as f64 * 15.5;
                assert!((mid - 8.0).abs() <= PASS_JITTER as f64 + 1.0, "{} axis {axis}: {mid}", v.id);
            }
        }
    }

    #[test]
    fn start_outside_rejected() {
        assert!(synthesize_video(&classes()[0], (60, 0), FrameSize::new(64, 64), 4, Boundary::Bounce, 1).is_err());
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let cfg = DatasetConfig { n_train: 20, n_test: 10, seed: 3, ..Default::default() };
        let a = build_dataset(&cfg).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (20, 10));
        for c in 0..10 {
            assert_eq!(a.train.iter().filter(|v| v.class_id == c).count(), 2);
            assert_eq!(a.test.iter().filter(|v| v.class_id == c).count(), 1);
        }
        assert_eq!(a, build_dataset(&cfg).unwrap());
        let small = build_dataset(&DatasetConfig { n_train: 10, n_test: 0, ..cfg.clone() }).unwrap();
        assert_eq!(small.train.len(), 10);
        assert!(build_dataset(&DatasetConfig { n_train: 15, ..cfg }).is_err());
    }

    #[test]
    fn default_counts() {
        let d = build_dataset(&DatasetConfig::default()).unwrap();
        assert_eq!((d.train.len(), d.test.len()), (200, 80));
        for c in 0..10 {
            assert_eq!(d.train.iter().filter(|v| v.class_id == c).count(), 20);
            assert_eq!(d.test.iter().filter(|v| v.class_id == c).count(), 8);
        }
    }
}
