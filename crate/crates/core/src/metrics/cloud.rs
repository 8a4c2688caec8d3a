//! Point-cloud comparison: Chamfer distance, thresholded precision/recall,
//! F-score and IoU.
//!
//! Nearest neighbors come from a uniform grid hash with cell size equal to
//! the match threshold. Queries walk a few rings around their own cell,
//! which settles the common case of a neighbor within the threshold; a
//! query whose nearest point is far instead scans the occupied cells with
//! box-distance pruning, so isolated outliers cost one pass over the cell
//! table instead of a ring walk across the gap. Both paths are exact; a
//! brute-force equivalence test keeps them honest.

use crate::error::{Error, Result};
use nalgebra::Vector3;
use std::collections::HashMap;

/// Match threshold for precision/recall, distance units.
pub const DEFAULT_MATCH_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudMetrics {
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub iou: f64,
}

struct GridIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn build(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(p, cell)).or_default().push(i);
        }
        GridIndex { points, cell, map }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    fn scan_bucket(&self, key: (i64, i64, i64), q: &Vector3<f64>, best: &mut f64) {
        if let Some(bucket) = self.map.get(&key) {
            for &i in bucket {
                let d = (self.points[i] - q).norm();
                if d < *best {
                    *best = d;
                }
            }
        }
    }

    /// Smallest distance from `q` to the axis-aligned box of a cell; zero
    /// inside it.
    fn cell_box_distance(&self, key: (i64, i64, i64), q: &Vector3<f64>) -> f64 {
        let gap = |k: i64, v: f64| {
            let lo = k as f64 * self.cell;
            let hi = lo + self.cell;
            (lo - v).max(v - hi).max(0.0)
        };
        let (dx, dy, dz) = (gap(key.0, q.x), gap(key.1, q.y), gap(key.2, q.z));
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Exact distance to the nearest indexed point. Cells in Chebyshev ring
    /// m+1 or beyond cannot hold anything closer than m * cell to a query
    /// inside the center cell, so a best hit within that bound ends the
    /// walk. Rings are capped: a query far from every point would otherwise
    /// walk the whole gap in cell-sized steps, so past the cap the occupied
    /// cells are scanned directly, pruned by their box distance against an
    /// upper bound taken from the cell whose box lies closest.
    fn nearest_distance(&self, q: &Vector3<f64>) -> f64 {
        const MAX_RING: i64 = 2;
        let (cx, cy, cz) = Self::key(q, self.cell);
        let mut best = f64::INFINITY;
        for ring in 0..=MAX_RING {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        self.scan_bucket((cx + dx, cy + dy, cz + dz), q, &mut best);
                    }
                }
            }
            if best.is_finite() && best <= ring as f64 * self.cell {
                return best;
            }
        }
        let mut nearest_box = f64::INFINITY;
        let mut nearest_key = (cx, cy, cz);
        for &key in self.map.keys() {
            let d = self.cell_box_distance(key, q);
            if d < nearest_box {
                nearest_box = d;
                nearest_key = key;
            }
        }
        self.scan_bucket(nearest_key, q, &mut best);
        for &key in self.map.keys() {
            if key != nearest_key && self.cell_box_distance(key, q) < best {
                self.scan_bucket(key, q, &mut best);
            }
        }
        best
    }
}

fn directed_distances(from: &[Vector3<f64>], to_index: &GridIndex) -> Vec<f64> {
    from.iter().map(|p| to_index.nearest_distance(p)).collect()
}

/// Chamfer distance (sum of the two directed mean nearest-neighbor
/// distances), precision/recall at `delta` (strict), F = 2PR/(P+R) and
/// IoU = PR/(P+R-PR).
pub fn pointcloud_metrics(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    delta: f64,
) -> Result<CloudMetrics> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::data("point-cloud metrics need two nonempty clouds"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::config(format!("match distance must be finite and > 0, got {delta}")));
    }
    let gt_index = GridIndex::build(gt, delta);
    let pred_index = GridIndex::build(pred, delta);
    let pred_to_gt = directed_distances(pred, &gt_index);
    let gt_to_pred = directed_distances(gt, &pred_index);

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let chamfer = mean(&pred_to_gt) + mean(&gt_to_pred);
    let precision = pred_to_gt.iter().filter(|&&d| d < delta).count() as f64 / pred.len() as f64;
    let recall = gt_to_pred.iter().filter(|&&d| d < delta).count() as f64 / gt.len() as f64;
    let f_score = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    let denom = precision + recall - precision * recall;
    let iou = if denom > 0.0 { precision * recall / denom } else { 0.0 };
    Ok(CloudMetrics { chamfer, precision, recall, f_score, iou })
}

/// O(N*M) reference used by the equivalence tests.
pub fn pointcloud_metrics_brute(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    delta: f64,
) -> Result<CloudMetrics> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::data("point-cloud metrics need two nonempty clouds"));
    }
    let nearest = |from: &[Vector3<f64>], to: &[Vector3<f64>]| -> Vec<f64> {
        from.iter()
            .map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let pred_to_gt = nearest(pred, gt);
    let gt_to_pred = nearest(gt, pred);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let chamfer = mean(&pred_to_gt) + mean(&gt_to_pred);
    let precision = pred_to_gt.iter().filter(|&&d| d < delta).count() as f64 / pred.len() as f64;
    let recall = gt_to_pred.iter().filter(|&&d| d < delta).count() as f64 / gt.len() as f64;
    let f_score = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    let denom = precision + recall - precision * recall;
    let iou = if denom > 0.0 { precision * recall / denom } else { 0.0 };
    Ok(CloudMetrics { chamfer, precision, recall, f_score, iou })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn identical_clouds_are_perfect() {
        let cloud: Vec<_> = (0..40).map(|i| v(i as f64 * 0.03, (i % 5) as f64, 1.0)).collect();
        let m = pointcloud_metrics(&cloud, &cloud, DEFAULT_MATCH_DISTANCE).unwrap();
        assert_eq!(m.chamfer, 0.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f_score, 1.0);
        assert_eq!(m.iou, 1.0);
    }

    #[test]
    fn two_point_example_reproduces_hand_numbers() {
        let pred = vec![v(0.0, 0.0, 0.0)];
        let gt = vec![v(0.0, 0.0, 0.05), v(0.0, 0.0, 0.5)];
        let m = pointcloud_metrics(&pred, &gt, 0.1).unwrap();
        assert!((m.chamfer - 0.325).abs() < 1e-12);
        assert!((m.precision - 1.0).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f_score - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.iou - 0.5).abs() < 1e-12);
    }

    #[test]
    fn half_half_matching_gives_third_iou() {
        let pred = vec![v(0.0, 0.0, 0.0), v(5.0, 0.0, 0.0)];
        let gt = vec![v(0.05, 0.0, 0.0), v(9.0, 0.0, 0.0)];
        let m = pointcloud_metrics(&pred, &gt, 0.1).unwrap();
        assert!((m.precision - 0.5).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f_score - 0.5).abs() < 1e-12);
        assert!((m.iou - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn chamfer_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<_> = (0..80).map(|_| v(rng.gen(), rng.gen(), rng.gen::<f64>() * 3.0)).collect();
        let b: Vec<_> = (0..65).map(|_| v(rng.gen(), rng.gen(), rng.gen::<f64>() * 3.0)).collect();
        let ab = pointcloud_metrics(&a, &b, 0.1).unwrap();
        let ba = pointcloud_metrics(&b, &a, 0.1).unwrap();
        assert_eq!(ab.chamfer, ba.chamfer);
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.f_score, ba.f_score);
        assert_eq!(ab.iou, ba.iou);
    }

    #[test]
    fn grid_index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for case in 0..8 {
            let spread = if case % 2 == 0 { 1.0 } else { 20.0 };
            let n = 50 + case * 37;
            let a: Vec<_> = (0..n)
                .map(|_| v(rng.gen::<f64>() * spread, rng.gen::<f64>() * spread, rng.gen::<f64>() * spread))
                .collect();
            let b: Vec<_> = (0..n + 11)
                .map(|_| v(rng.gen::<f64>() * spread, rng.gen::<f64>() * spread, rng.gen::<f64>() * spread))
                .collect();
            let fast = pointcloud_metrics(&a, &b, 0.1).unwrap();
            let brute = pointcloud_metrics_brute(&a, &b, 0.1).unwrap();
            assert!((fast.chamfer - brute.chamfer).abs() < 1e-12);
            assert_eq!(fast.precision, brute.precision);
            assert_eq!(fast.recall, brute.recall);
        }
    }

    #[test]
    fn distant_outliers_stay_exact_and_fast() {
        // A handful of points tens of units from the other cloud forces the
        // occupied-cell fallback; the ring walk alone would cross the gap in
        // 0.1-unit steps.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a: Vec<_> = (0..400).map(|_| v(rng.gen(), rng.gen(), 5.0 + rng.gen::<f64>())).collect();
        let b: Vec<_> = (0..400).map(|_| v(rng.gen(), rng.gen(), 5.0 + rng.gen::<f64>())).collect();
        a.push(v(40.0, -25.0, 90.0));
        a.push(v(-60.0, 0.0, 3.0));
        let fast = pointcloud_metrics(&a, &b, 0.1).unwrap();
        let brute = pointcloud_metrics_brute(&a, &b, 0.1).unwrap();
        assert!((fast.chamfer - brute.chamfer).abs() < 1e-12);
        assert_eq!(fast.precision, brute.precision);
        assert_eq!(fast.recall, brute.recall);
    }

    #[test]
    fn empty_clouds_are_rejected() {
        let cloud = vec![v(0.0, 0.0, 1.0)];
        assert!(pointcloud_metrics(&cloud, &[], 0.1).is_err());
        assert!(pointcloud_metrics(&[], &cloud, 0.1).is_err());
    }
}
