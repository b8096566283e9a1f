//! Reference AP by exhaustive enumeration of detection-to-ground-truth
//! assignments. Only suitable for tiny instances.

use traj_anticipation::eval::{Detection, GtBox};
use traj_anticipation::iou;

/// Score of one detection's assignment: matched IoU, preferring lower GT index.
type Key = Option<(f64, std::cmp::Reverse<usize>)>;

/// All injective partial assignments of `dets` (in rank order) to `gts`
/// that respect the IoU threshold; returns the lexicographically best one.
fn best_assignment(dets: &[Detection], gts: &[(usize, GtBox)], thr: f64) -> Vec<bool> {
    fn rec(i: usize, dets: &[Detection], gts: &[(usize, GtBox)], thr: f64, used: &mut Vec<bool>, cur: &mut Vec<Key>, best: &mut Option<Vec<Key>>) {
        if i == dets.len() {
            let better = match best {
                None => true,
                Some(b) => cmp_keys(cur, b) == std::cmp::Ordering::Greater,
            };
            if better {
                *best = Some(cur.clone());
            }
            return;
        }
        cur.push(None);
        rec(i + 1, dets, gts, thr, used, cur, best);
        cur.pop();
        for (j, (idx, g)) in gts.iter().enumerate() {
            let v = iou(&dets[i].bbox, &g.bbox);
            if used[j] || v < thr {
                continue;
            }
            used[j] = true;
            cur.push(Some((v, std::cmp::Reverse(*idx))));
            rec(i + 1, dets, gts, thr, used, cur, best);
            cur.pop();
            used[j] = false;
        }
    }
    let mut best = None;
    rec(0, dets, gts, thr, &mut vec![false; gts.len()], &mut Vec::new(), &mut best);
    best.unwrap().iter().map(Option::is_some).collect()
}

fn cmp_keys(a: &[Key], b: &[Key]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = match (x, y) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, Some(_)) => std::cmp::Ordering::Less,
            (Some(_), None) => std::cmp::Ordering::Greater,
            (Some((v1, r1)), Some((v2, r2))) => v1.total_cmp(v2).then(r1.cmp(r2)),
        };
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

pub fn reference_ap(dets: &[Detection], gts: &[GtBox], class_id: u32, thr: f64) -> Option<f64> {
    let n_gt = gts.iter().filter(|g| g.class_id == class_id).count();
    if n_gt == 0 {
        return None;
    }
    // rank: descending score, input order on ties
    let mut ranked: Vec<(usize, Detection)> = dets.iter().copied().enumerate().filter(|(_, d)| d.class_id == class_id).collect();
    ranked.sort_by(|(ia, a), (ib, b)| b.score.partial_cmp(&a.score).unwrap().then(ia.cmp(ib)));
    let mut tp = vec![false; ranked.len()];
    let mut frames: Vec<u64> = ranked.iter().map(|(_, d)| d.frame_id).collect();
    frames.sort_unstable();
    frames.dedup();
    for f in frames {
        let pos: Vec<usize> = (0..ranked.len()).filter(|&k| ranked[k].1.frame_id == f).collect();
        let fd: Vec<Detection> = pos.iter().map(|&k| ranked[k].1).collect();
        let fg: Vec<(usize, GtBox)> = gts.iter().copied().enumerate().filter(|(_, g)| g.frame_id == f && g.class_id == class_id).collect();
        for (k, m) in pos.iter().zip(best_assignment(&fd, &fg, thr)) {
            tp[*k] = m;
        }
    }
    // interpolated precision at recall k/100: best precision at any rank reaching it
    let mut sum = 0.0;
    for level in 0..=100usize {
        let mut best: f64 = 0.0;
        let mut hits = 0usize;
        for (rank, &t) in tp.iter().enumerate() {
            hits += t as usize;
            if hits * 100 >= level * n_gt {
                best = best.max(hits as f64 / (rank + 1) as f64);
            }
        }
        sum += best;
    }
    Some(sum / 101.0)
}
