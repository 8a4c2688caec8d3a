//! Depth evaluation: image-space errors, edge accuracy/completeness and
//! point-cloud agreement, gathered into one serializable report.

pub mod cloud;
pub mod edges;

pub use cloud::{pointcloud_metrics, pointcloud_metrics_brute, CloudMetrics, DEFAULT_MATCH_DISTANCE};
pub use edges::{
    distance_transform_squared, edge_metrics, extract_edges, AccOrientation, EdgeMap, EdgeMetrics,
    EDGE_DISTANCE_CAP,
};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Depth values are clamped into this range before any metric.
pub const EVAL_DEPTH_MIN: f64 = 1e-3;
pub const EVAL_DEPTH_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
}

/// Everything measured for one image, flattened for JSON/CSV export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub edge_acc: f64,
    pub edge_comp: f64,
    pub edge_acc_degenerate: bool,
    pub edge_comp_degenerate: bool,
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub iou: f64,
}

impl MetricReport {
    pub fn assemble(image: ImageMetrics, edge: EdgeMetrics, cloud: CloudMetrics) -> Self {
        MetricReport {
            abs_rel: image.abs_rel,
            sq_rel: image.sq_rel,
            rmse: image.rmse,
            rmse_log: image.rmse_log,
            delta1: image.delta1,
            delta2: image.delta2,
            delta3: image.delta3,
            edge_acc: edge.acc,
            edge_comp: edge.comp,
            edge_acc_degenerate: edge.acc_degenerate,
            edge_comp_degenerate: edge.comp_degenerate,
            chamfer: cloud.chamfer,
            precision: cloud.precision,
            recall: cloud.recall,
            f_score: cloud.f_score,
            iou: cloud.iou,
        }
    }

    /// Field-wise mean over per-image reports; degenerate flags or-reduce.
    pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport> {
        if reports.is_empty() {
            return Err(Error::data("cannot aggregate zero metric reports"));
        }
        let n = reports.len() as f64;
        let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Ok(MetricReport {
            abs_rel: mean(|r| r.abs_rel),
            sq_rel: mean(|r| r.sq_rel),
            rmse: mean(|r| r.rmse),
            rmse_log: mean(|r| r.rmse_log),
            delta1: mean(|r| r.delta1),
            delta2: mean(|r| r.delta2),
            delta3: mean(|r| r.delta3),
            edge_acc: mean(|r| r.edge_acc),
            edge_comp: mean(|r| r.edge_comp),
            edge_acc_degenerate: reports.iter().any(|r| r.edge_acc_degenerate),
            edge_comp_degenerate: reports.iter().any(|r| r.edge_comp_degenerate),
            chamfer: mean(|r| r.chamfer),
            precision: mean(|r| r.precision),
            recall: mean(|r| r.recall),
            f_score: mean(|r| r.f_score),
            iou: mean(|r| r.iou),
        })
    }
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// KITTI-style depth errors over pixels valid in both maps. With
/// `median_scale` the prediction is first multiplied by
/// median(gt)/median(pred); both maps are then clamped to the evaluation
/// range before the error equations.
pub fn image_metrics(pred: &DepthMap, gt: &DepthMap, median_scale: bool) -> Result<ImageMetrics> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::data("depth map shapes disagree"));
    }
    let mut p = Vec::new();
    let mut g = Vec::new();
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if gt.is_valid(x, y) && pred.is_valid(x, y) {
                p.push(pred.at(x, y));
                g.push(gt.at(x, y));
            }
        }
    }
    if p.is_empty() {
        return Err(Error::data("no valid pixels shared by prediction and ground truth"));
    }
    if median_scale {
        let factor = median_of(g.clone()) / median_of(p.clone());
        for v in p.iter_mut() {
            *v *= factor;
        }
    }
    let n = p.len() as f64;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    let mut d3 = 0usize;
    for i in 0..p.len() {
        let pv = p[i].clamp(EVAL_DEPTH_MIN, EVAL_DEPTH_MAX);
        let gv = g[i].clamp(EVAL_DEPTH_MIN, EVAL_DEPTH_MAX);
        let diff = pv - gv;
        abs_rel += diff.abs() / gv;
        sq_rel += diff * diff / gv;
        sq += diff * diff;
        let log_diff = pv.ln() - gv.ln();
        sq_log += log_diff * log_diff;
        let ratio = (pv / gv).max(gv / pv);
        if ratio < 1.25 {
            d1 += 1;
        }
        if ratio < 1.25f64.powi(2) {
            d2 += 1;
        }
        if ratio < 1.25f64.powi(3) {
            d3 += 1;
        }
    }
    Ok(ImageMetrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rmse: (sq / n).sqrt(),
        rmse_log: (sq_log / n).sqrt(),
        delta1: d1 as f64 / n,
        delta2: d2 as f64 / n,
        delta3: d3 as f64 / n,
    })
}
