//! Depth-boundary extraction and edge accuracy/completeness.
//!
//! Edges come from hysteresis-thresholded Sobel gradients of log-depth with
//! non-maximum suppression; ties keep both pixels so a one-pixel depth step
//! marks both adjacent columns. Distances between edge sets use an exact
//! Euclidean distance transform capped at [`EDGE_DISTANCE_CAP`] pixels.

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::grid::{reflect, Grid};
use std::collections::VecDeque;

/// Cap on edge distances, pixels.
pub const EDGE_DISTANCE_CAP: f64 = 10.0;

/// Sentinel for "no set pixel anywhere"; large enough to dominate any real
/// squared pixel distance, small enough to survive the parabola arithmetic.
const FAR: f64 = 1e20;

/// Binary map of depth-boundary pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize) -> Self {
        EdgeMap { width, height, data: vec![false; width * height] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::data("edge map size mismatch"));
        }
        Ok(EdgeMap { width, height, data })
    }

    pub fn at(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Which set the accuracy mean iterates over; completeness takes the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccOrientation {
    /// Accuracy averages the distance to the nearest predicted edge over
    /// ground-truth edge pixels.
    GtToPred,
    /// Accuracy averages the distance to the nearest ground-truth edge over
    /// predicted edge pixels.
    PredToGt,
}

impl Default for AccOrientation {
    fn default() -> Self {
        AccOrientation::GtToPred
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMetrics {
    pub acc: f64,
    pub comp: f64,
    /// Set when the corresponding mean had no pixels to average over and
    /// reported the cap instead.
    pub acc_degenerate: bool,
    pub comp_degenerate: bool,
}

fn sobel(log_depth: &Grid) -> (Grid, Grid) {
    let (w, h) = (log_depth.width, log_depth.height);
    let mut gx = Grid::new(w, h, 0.0);
    let mut gy = Grid::new(w, h, 0.0);
    for y in 0..h {
        let ym = reflect(y as isize - 1, h);
        let yp = reflect(y as isize + 1, h);
        for x in 0..w {
            let xm = reflect(x as isize - 1, w);
            let xp = reflect(x as isize + 1, w);
            let v = |xx: usize, yy: usize| log_depth.data[yy * w + xx];
            // Normalized by 8 so a linear field reports its per-pixel slope.
            gx.data[y * w + x] = ((v(xp, ym) - v(xm, ym))
                + 2.0 * (v(xp, y) - v(xm, y))
                + (v(xp, yp) - v(xm, yp)))
                / 8.0;
            gy.data[y * w + x] = ((v(xm, yp) - v(xm, ym))
                + 2.0 * (v(x, yp) - v(x, ym))
                + (v(xp, yp) - v(xp, ym)))
                / 8.0;
        }
    }
    (gx, gy)
}

/// Offset along which the gradient points, quantized to 45 degrees.
fn nms_direction(gx: f64, gy: f64) -> (isize, isize) {
    let angle = gy.atan2(gx);
    let sector = (angle / std::f64::consts::FRAC_PI_4).round() as i64;
    match sector.rem_euclid(4) {
        0 => (1, 0),
        1 => (1, 1),
        2 => (0, 1),
        _ => (-1, 1),
    }
}

/// Gradient-magnitude depth boundaries of log-depth with non-maximum
/// suppression and hysteresis. `low`/`high` are per-pixel log-depth slopes.
pub fn extract_edges(depth: &DepthMap, low: f64, high: f64) -> Result<EdgeMap> {
    if !(low > 0.0 && low <= high && high.is_finite()) {
        return Err(Error::config(format!("edge thresholds need 0 < low <= high, got {low}, {high}")));
    }
    let (w, h) = (depth.width(), depth.height());
    let mut log_depth = Grid::new(w, h, 0.0);
    for i in 0..w * h {
        log_depth.data[i] = depth.values.data[i].clamp(1e-3, 100.0).ln();
    }
    let (gx, gy) = sobel(&log_depth);
    let mut magnitude = Grid::new(w, h, 0.0);
    for i in 0..w * h {
        magnitude.data[i] = gx.data[i].hypot(gy.data[i]);
    }

    // Non-maximum suppression; >= on both sides keeps plateau ties.
    let mut keep = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let m = magnitude.data[i];
            if m < low {
                continue;
            }
            let (dx, dy) = nms_direction(gx.data[i], gy.data[i]);
            let side = |sx: isize, sy: isize| -> f64 {
                let (nx, ny) = (x as isize + sx, y as isize + sy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    0.0
                } else {
                    magnitude.data[ny as usize * w + nx as usize]
                }
            };
            keep[i] = m >= side(dx, dy) && m >= side(-dx, -dy);
        }
    }

    // Hysteresis: grow strong pixels through weak ones, 8-connected.
    let mut edges = vec![false; w * h];
    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if keep[i] && magnitude.data[i] >= high {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if keep[j] && !edges[j] {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    EdgeMap::from_data(w, h, edges)
}

fn dt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        d[q] = (q as f64 - p as f64) * (q as f64 - p as f64) + f[p];
    }
}

/// Exact squared Euclidean distance to the nearest set pixel; `FAR`-ish
/// everywhere when the set is empty.
pub fn distance_transform_squared(set: &EdgeMap) -> Grid {
    let (w, h) = (set.width, set.height);
    let mut dist = Grid::new(w, h, 0.0);
    for i in 0..w * h {
        dist.data[i] = if set.data[i] { 0.0 } else { FAR };
    }
    let mut column = vec![0.0; h];
    let mut out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            column[y] = dist.data[y * w + x];
        }
        dt_1d(&column, &mut out);
        for y in 0..h {
            dist.data[y * w + x] = out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        dt_1d(&dist.data[y * w..(y + 1) * w].to_vec(), &mut row_out);
        dist.data[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    dist
}

fn mean_capped_distance(over: &EdgeMap, to: &EdgeMap) -> (f64, bool) {
    let n = over.count();
    if n == 0 {
        return (EDGE_DISTANCE_CAP, true);
    }
    let dt = distance_transform_squared(to);
    let mut sum = 0.0;
    for i in 0..over.data.len() {
        if over.data[i] {
            sum += dt.data[i].sqrt().min(EDGE_DISTANCE_CAP);
        }
    }
    (sum / n as f64, false)
}

/// Edge accuracy and completeness between predicted and ground-truth edge
/// maps, distances capped at 10 px. An empty reference set reports the cap
/// and raises the degenerate flag.
pub fn edge_metrics(pred: &EdgeMap, gt: &EdgeMap, orientation: AccOrientation) -> Result<EdgeMetrics> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::data("edge map shapes disagree"));
    }
    let (acc, acc_degenerate, comp, comp_degenerate) = match orientation {
        AccOrientation::GtToPred => {
            let (acc, af) = mean_capped_distance(gt, pred);
            let (comp, cf) = mean_capped_distance(pred, gt);
            (acc, af, comp, cf)
        }
        AccOrientation::PredToGt => {
            let (acc, af) = mean_capped_distance(pred, gt);
            let (comp, cf) = mean_capped_distance(gt, pred);
            (acc, af, comp, cf)
        }
    };
    Ok(EdgeMetrics { acc, comp, acc_degenerate, comp_degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use crate::world::{render_view, Layout, TextureSpec};
    use crate::geometry::RigidTransform;

    fn single(w: usize, h: usize, x: usize, y: usize) -> EdgeMap {
        let mut m = EdgeMap::new(w, h);
        m.data[y * w + x] = true;
        m
    }

    #[test]
    fn constant_depth_has_no_edges() {
        let d = DepthMap::constant(32, 24, 7.0);
        let edges = extract_edges(&d, 0.05, 0.15).unwrap();
        assert_eq!(edges.count(), 0);
    }

    #[test]
    fn shallow_ramp_stays_below_threshold() {
        let mut g = Grid::new(40, 20, 0.0);
        for y in 0..20 {
            for x in 0..40 {
                g.data[y * 40 + x] = 8.0 + 0.002 * x as f64;
            }
        }
        let edges = extract_edges(&DepthMap::from_grid(g), 0.05, 0.15).unwrap();
        assert_eq!(edges.count(), 0);
    }

    #[test]
    fn step_scene_edges_sit_on_the_boundary() {
        let layout = Layout::TwoPlaneStep { near: 6.0, far: 10.0, split_x: 0.0 };
        let k = Intrinsics::new(60.0, 60.0, 24.0, 16.0, 48, 32).unwrap();
        let (_, depth) = render_view(&layout, &TextureSpec::default(), &k, &RigidTransform::identity()).unwrap();
        let edges = extract_edges(&depth, 0.05, 0.15).unwrap();
        assert!(edges.count() > 0);
        // The boundary projects to u = cx; flagged pixels stay within 1 px.
        let mut cols = std::collections::BTreeSet::new();
        for y in 0..32 {
            for x in 0..48 {
                if edges.at(x, y) {
                    cols.insert(x);
                }
            }
        }
        for &c in &cols {
            assert!((c as f64 - 24.0).abs() <= 1.5, "edge in column {c}");
        }
        // Every row sees the boundary.
        for y in 0..32 {
            assert!((0..48).any(|x| edges.at(x, y)), "row {y} missed the edge");
        }
    }

    #[test]
    fn identical_maps_score_zero() {
        let m = single(20, 20, 5, 7);
        let r = edge_metrics(&m, &m, AccOrientation::default()).unwrap();
        assert_eq!(r.acc, 0.0);
        assert_eq!(r.comp, 0.0);
        assert!(!r.acc_degenerate && !r.comp_degenerate);
    }

    #[test]
    fn single_pixel_pair_reports_their_distance() {
        let pred = single(20, 20, 4, 6);
        let gt = single(20, 20, 7, 10);
        for orientation in [AccOrientation::GtToPred, AccOrientation::PredToGt] {
            let r = edge_metrics(&pred, &gt, orientation).unwrap();
            assert!((r.acc - 5.0).abs() < 1e-12);
            assert!((r.comp - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distances_cap_at_ten_pixels() {
        let pred = single(40, 5, 0, 2);
        let gt = single(40, 5, 30, 2);
        let r = edge_metrics(&pred, &gt, AccOrientation::default()).unwrap();
        assert_eq!(r.acc, EDGE_DISTANCE_CAP);
        assert_eq!(r.comp, EDGE_DISTANCE_CAP);
        assert!(!r.acc_degenerate);
    }

    #[test]
    fn empty_reference_set_reports_the_cap_and_flags() {
        let empty = EdgeMap::new(10, 10);
        let gt = single(10, 10, 3, 3);
        let r = edge_metrics(&empty, &gt, AccOrientation::default()).unwrap();
        // Accuracy iterates gt pixels against an empty prediction: capped,
        // not degenerate. Completeness has nothing to iterate: flagged.
        assert_eq!(r.acc, EDGE_DISTANCE_CAP);
        assert!(!r.acc_degenerate);
        assert_eq!(r.comp, EDGE_DISTANCE_CAP);
        assert!(r.comp_degenerate);
    }

    #[test]
    fn orientation_flag_swaps_the_two_means() {
        let mut pred = EdgeMap::new(15, 15);
        pred.data[3 * 15 + 3] = true;
        pred.data[3 * 15 + 9] = true;
        let gt = single(15, 15, 3, 3);
        let a = edge_metrics(&pred, &gt, AccOrientation::GtToPred).unwrap();
        let b = edge_metrics(&pred, &gt, AccOrientation::PredToGt).unwrap();
        assert!((a.acc - b.comp).abs() < 1e-15);
        assert!((a.comp - b.acc).abs() < 1e-15);
        assert!((a.acc - 0.0).abs() < 1e-15);
        assert!((a.comp - 3.0).abs() < 1e-15);
    }

    #[test]
    fn transform_matches_brute_force_exactly() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let (w, h) = (21, 17);
            let mut m = EdgeMap::new(w, h);
            for b in m.data.iter_mut() {
                *b = rng.gen_bool(0.07);
            }
            let fast = distance_transform_squared(&m);
            let set: Vec<(usize, usize)> = (0..w * h).filter(|&i| m.data[i]).map(|i| (i % w, i / w)).collect();
            for y in 0..h {
                for x in 0..w {
                    let brute = set
                        .iter()
                        .map(|&(sx, sy)| {
                            let dx = sx as f64 - x as f64;
                            let dy = sy as f64 - y as f64;
                            dx * dx + dy * dy
                        })
                        .fold(f64::INFINITY, f64::min);
                    if set.is_empty() {
                        assert!(fast.data[y * w + x] >= 1e19);
                    } else {
                        assert_eq!(fast.data[y * w + x], brute, "at ({x},{y})");
                    }
                }
            }
        }
    }
}
