mod common;

use common::ap_oracle::reference_ap;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use traj_anticipation::eval::{average_precision, iou_thresholds, Detection, GtBox};
use traj_anticipation::BBox;

fn grid_box(rng: &mut impl Rng) -> BBox {
    // coarse grid so exact IoU ties occur
    BBox::new(2.0 * rng.random_range(0..6) as f64, 2.0 * rng.random_range(0..6) as f64, 8.0 + 2.0 * rng.random_range(0..3) as f64, 8.0)
}

fn instance(rng: &mut impl Rng) -> (Vec<Detection>, Vec<GtBox>) {
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for frame in 0..rng.random_range(1..4u64) {
        for _ in 0..rng.random_range(0..4) {
            gts.push(GtBox { frame_id: frame, bbox: grid_box(rng), class_id: rng.random_range(0..2) });
        }
        for _ in 0..rng.random_range(0..6) {
            let score = rng.random_range(1..6) as f64 / 5.0;
            dets.push(Detection { frame_id: frame, bbox: grid_box(rng), class_id: rng.random_range(0..2), score });
        }
    }
    (dets, gts)
}

#[test]
fn matches_exhaustive_reference_on_200_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let thresholds = iou_thresholds();
    let mut compared = 0;
    while compared < 200 {
        let (dets, gts) = instance(&mut rng);
        let thr = thresholds[rng.random_range(0..thresholds.len())];
        let class = rng.random_range(0..2);
        let got = average_precision(&dets, &gts, class, thr).unwrap();
        let want = reference_ap(&dets, &gts, class, thr);
        assert_eq!(got.is_some(), want.is_some());
        if let (Some(g), Some(w)) = (got, want) {
            assert!((g - w).abs() < 1e-6, "{g} vs {w}: {dets:?} {gts:?} thr {thr}");
            compared += 1;
        }
    }
}

proptest! {
    #[test]
    fn reference_agreement(seed in any::<u64>(), t in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dets, gts) = instance(&mut rng);
        let thr = iou_thresholds()[t];
        for class in 0..2 {
            let got = average_precision(&dets, &gts, class, thr).unwrap();
            let want = reference_ap(&dets, &gts, class, thr);
            match (got, want) {
                (Some(g), Some(w)) => prop_assert!((g - w).abs() < 1e-6),
                (g, w) => prop_assert_eq!(g, w),
            }
        }
    }
}
