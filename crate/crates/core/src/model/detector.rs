//! Oracle keyframe detector: ground-truth boxes plus Gaussian jitter.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::association::GtObject;
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleDetectorConfig {
    /// Standard deviation in pixels of the noise added to each box coordinate.
    pub jitter_sigma: f64,
}

impl Default for OracleDetectorConfig {
    fn default() -> Self {
        Self { jitter_sigma: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyframeDetection {
    pub bbox: BBox,
    pub class_id: u32,
    pub score: f64,
    pub track_id: u32,
}

/// Perturb `bbox` by independent N(0, sigma) noise per coordinate.
pub fn jitter_box(bbox: &BBox, sigma: f64, rng: &mut impl Rng) -> Result<BBox> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("jitter sigma must be a finite non-negative number, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(*bbox);
    }
    let n = Normal::new(0.0, sigma).expect("sigma validated");
    let a = bbox.to_array();
    Ok(BBox::from_array([a[0] + n.sample(rng), a[1] + n.sample(rng), a[2] + n.sample(rng), a[3] + n.sample(rng)]))
}

/// One detection per ground-truth object, score 1.
pub fn oracle_detect(gts: &[GtObject], cfg: &OracleDetectorConfig, rng: &mut impl Rng) -> Result<Vec<KeyframeDetection>> {
    gts.iter()
        .map(|g| {
            Ok(KeyframeDetection { bbox: jitter_box(&g.bbox, cfg.jitter_sigma, rng)?, class_id: g.class_id, score: 1.0, track_id: g.track_id })
        })
        .collect()
}
