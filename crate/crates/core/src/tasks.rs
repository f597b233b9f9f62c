//! Evaluation metrics for the task heads.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{squared_distance, Point3};
use crate::linalg::Mat;
use crate::math;
use crate::{Error, Result};

fn check_lengths(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            what,
            expected: a,
            found: b,
        });
    }
    if a == 0 {
        return Err(Error::InvalidArgument(format!("{what}: empty input")));
    }
    Ok(())
}

/// Per-part intersection over union of one shape.
#[derive(Clone, Debug, PartialEq)]
pub struct IouReport {
    /// `(part, IoU)` for every part present in the prediction or the
    /// ground truth, ascending by part.
    pub per_part: Vec<(u32, f64)>,
    pub mean: f64,
}

/// `|pred=p ∧ gt=p| / |pred=p ∨ gt=p|` per part; parts absent from both
/// are skipped.
pub fn iou(pred: &[u32], gt: &[u32]) -> Result<IouReport> {
    check_lengths("segmentation labels", gt.len(), pred.len())?;
    // part -> (intersection, union)
    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gt) {
        if p == g {
            let e = counts.entry(p).or_default();
            e.0 += 1;
            e.1 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(g).or_default().1 += 1;
        }
    }
    let per_part: Vec<(u32, f64)> = counts
        .into_iter()
        .map(|(part, (i, u))| (part, i as f64 / u as f64))
        .collect();
    let mean = per_part.iter().map(|p| p.1).sum::<f64>() / per_part.len() as f64;
    Ok(IouReport { per_part, mean })
}

pub fn point_accuracy(pred: &[u32], gt: &[u32]) -> Result<f64> {
    check_lengths("segmentation labels", gt.len(), pred.len())?;
    Ok(pred.iter().zip(gt).filter(|(p, g)| p == g).count() as f64 / gt.len() as f64)
}

/// Mean IoU of one category and how many shapes it averages.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryIou<K> {
    pub category: K,
    pub count: usize,
    pub mean_iou: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoryReport<K> {
    pub categories: Vec<CategoryIou<K>>,
    /// Category means weighted by shape count.
    pub weighted_mean: f64,
}

/// Per-category means of per-shape IoUs, combined with weights equal to
/// each category's shape count.
pub fn category_mean_iou<K: Clone>(groups: &[(K, Vec<f64>)]) -> Result<CategoryReport<K>> {
    if groups.is_empty() {
        return Err(Error::InvalidArgument("no categories".into()));
    }
    let mut categories = Vec::with_capacity(groups.len());
    let (mut num, mut den) = (0.0, 0usize);
    for (k, shapes) in groups {
        if shapes.is_empty() {
            return Err(Error::InvalidArgument("category without shapes".into()));
        }
        let mean = shapes.iter().sum::<f64>() / shapes.len() as f64;
        num += shapes.len() as f64 * mean;
        den += shapes.len();
        categories.push(CategoryIou {
            category: k.clone(),
            count: shapes.len(),
            mean_iou: mean,
        });
    }
    Ok(CategoryReport {
        categories,
        weighted_mean: num / den as f64,
    })
}

/// Category owning the most predicted points; ties go to the lowest
/// category id. `part_category[p]` is the category of part label `p`.
pub fn majority_vote_classify(pred: &[u32], part_category: &[u32]) -> Result<u32> {
    if pred.is_empty() {
        return Err(Error::InvalidArgument("no points to vote".into()));
    }
    let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
    for &p in pred {
        let cat = *part_category.get(p as usize).ok_or(Error::UnknownLabel(p))?;
        *votes.entry(cat).or_default() += 1;
    }
    let mut best = (0u32, 0usize);
    for (cat, n) in votes {
        if n > best.1 {
            best = (cat, n);
        }
    }
    Ok(best.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointResult {
    pub predicted: Vec<Point3>,
    pub ground_truth: Vec<Point3>,
}

/// Fraction of keypoints within each Euclidean error threshold.
pub fn pck(results: &[KeypointResult], thresholds: &[f64]) -> Result<Vec<f64>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("PCK thresholds must be ascending".into()));
    }
    let mut errors = Vec::new();
    for r in results {
        if r.predicted.len() != r.ground_truth.len() {
            return Err(Error::DimensionMismatch {
                what: "keypoint count",
                expected: r.ground_truth.len(),
                found: r.predicted.len(),
            });
        }
        errors.extend(
            r.predicted
                .iter()
                .zip(&r.ground_truth)
                .map(|(p, g)| math::sqrt(squared_distance(p, g))),
        );
    }
    if errors.is_empty() {
        return Err(Error::InvalidArgument("no keypoints".into()));
    }
    let total = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| errors.iter().filter(|&&e| e <= t).count() as f64 / total)
        .collect())
}

/// Predicted keypoint positions from per-point class scores: column 0 is
/// background, column `k` scores keypoint `k`; each keypoint goes to its
/// highest-scoring point (lowest index on ties).
pub fn keypoint_predictions(scores: &Mat, points: &[Point3]) -> Result<Vec<Point3>> {
    check_lengths("keypoint scores", points.len(), scores.rows())?;
    Ok((1..scores.cols())
        .map(|k| {
            let mut best = 0;
            for i in 1..scores.rows() {
                if scores[(i, k)] > scores[(best, k)] {
                    best = i;
                }
            }
            points[best]
        })
        .collect())
}

/// Per-point class labels for keypoint training: background `0`,
/// keypoint `k` (1-based) at its annotated point index.
pub fn keypoint_labels(n: usize, keypoints: &[usize]) -> Result<Vec<u32>> {
    let mut labels = vec![0u32; n];
    for (k, &i) in keypoints.iter().enumerate() {
        *labels.get_mut(i).ok_or(Error::OutOfBounds(i))? = k as u32 + 1;
    }
    Ok(labels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalReport {
    /// Mean unsigned angle in degrees over points with a nonzero
    /// prediction; `None` when every prediction is zero.
    pub mean_angle_deg: Option<f64>,
    /// Mean over points of `‖p − g‖²`.
    pub l2: f64,
    pub zero_norm_predictions: usize,
}

pub fn normal_error(pred: &[Point3], gt: &[Point3]) -> Result<NormalReport> {
    check_lengths("normals", gt.len(), pred.len())?;
    let mut angle_sum = 0.0;
    let mut counted = 0usize;
    let mut zero = 0usize;
    let mut l2 = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        l2 += squared_distance(p, g);
        let pn = math::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        let gn = math::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        if pn == 0.0 {
            zero += 1;
            continue;
        }
        let c = ((p[0] * g[0] + p[1] * g[1] + p[2] * g[2]) / (pn * gn)).abs().min(1.0);
        angle_sum += math::acos(c).to_degrees();
        counted += 1;
    }
    Ok(NormalReport {
        mean_angle_deg: (counted > 0).then(|| angle_sum / counted as f64),
        l2: l2 / gt.len() as f64,
        zero_norm_predictions: zero,
    })
}

/// Row-wise argmax (lowest column on ties).
pub fn argmax_rows(scores: &Mat) -> Vec<u32> {
    (0..scores.rows())
        .map(|i| {
            let row = scores.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect()
}
