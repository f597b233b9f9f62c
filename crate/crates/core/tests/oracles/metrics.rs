//! Brute-force reference implementations of the evaluation metrics, and
//! random fixtures to compare them on.

use sscnn_core::rng::SeededRng;
use sscnn_core::tasks::{self, KeypointResult};

pub type P3 = [f64; 3];

/// IoU of every part that occurs anywhere, by set counting.
pub fn iou(pred: &[u32], gt: &[u32]) -> (Vec<(u32, f64)>, f64) {
    let mut parts: Vec<u32> = pred.iter().chain(gt).copied().collect();
    parts.sort_unstable();
    parts.dedup();
    let per: Vec<(u32, f64)> = parts
        .iter()
        .map(|&p| {
            let inter = (0..gt.len()).filter(|&i| pred[i] == p && gt[i] == p).count();
            let union = (0..gt.len()).filter(|&i| pred[i] == p || gt[i] == p).count();
            (p, inter as f64 / union as f64)
        })
        .collect();
    let mean = per.iter().map(|x| x.1).sum::<f64>() / per.len() as f64;
    (per, mean)
}

/// `Σ n_c·IoU_c / Σ n_c`.
pub fn weighted_mean(groups: &[(u32, Vec<f64>)]) -> f64 {
    let total: usize = groups.iter().map(|g| g.1.len()).sum();
    let num: f64 = groups
        .iter()
        .map(|(_, v)| v.len() as f64 * (v.iter().sum::<f64>() / v.len() as f64))
        .sum();
    num / total as f64
}

pub fn majority(pred: &[u32], table: &[u32]) -> u32 {
    let cats = *table.iter().max().unwrap() + 1;
    let counts: Vec<usize> = (0..cats).map(|c| pred.iter().filter(|&&p| table[p as usize] == c).count()).collect();
    let top = *counts.iter().max().unwrap();
    counts.iter().position(|&n| n == top).unwrap() as u32
}

pub fn pck(results: &[KeypointResult], thresholds: &[f64]) -> Vec<f64> {
    let errs: Vec<f64> = results
        .iter()
        .flat_map(|r| r.predicted.iter().zip(&r.ground_truth))
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt())
        .collect();
    thresholds
        .iter()
        .map(|t| errs.iter().filter(|&&e| e <= *t).count() as f64 / errs.len() as f64)
        .collect()
}

/// `(mean angle in degrees over nonzero predictions, mean squared error,
/// zero-prediction count)`.
pub fn normals(pred: &[P3], gt: &[P3]) -> (Option<f64>, f64, usize) {
    let mut angles = Vec::new();
    let mut zero = 0;
    let mut l2 = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        l2 += (0..3).map(|a| (p[a] - g[a]).powi(2)).sum::<f64>();
        let pn = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if pn == 0.0 {
            zero += 1;
            continue;
        }
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        let cos = ((p[0] * g[0] + p[1] * g[1] + p[2] * g[2]) / (pn * gn)).abs().min(1.0);
        angles.push(cos.acos().to_degrees());
    }
    let mean = (!angles.is_empty()).then(|| angles.iter().sum::<f64>() / angles.len() as f64);
    (mean, l2 / gt.len() as f64, zero)
}

pub fn unit(rng: &mut SeededRng) -> P3 {
    let v = [rng.normal(), rng.normal(), rng.normal()];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn labels(n: usize, k: u32, rng: &mut SeededRng) -> Vec<u32> {
    (0..n).map(|_| rng.below(k as usize) as u32).collect()
}

/// Compares every metric against its oracle on one random fixture;
/// returns a description of the first disagreement.
pub fn check_fixture(seed: u64) -> Result<(), String> {
    const TOL: f64 = 1e-12;
    let mut rng = SeededRng::new(seed);
    let close = |a: f64, b: f64| (a - b).abs() <= TOL;

    let n = 20 + rng.below(200);
    let k = 1 + rng.below(6) as u32;
    let gt = labels(n, k, &mut rng);
    let pred = if rng.below(5) == 0 { gt.clone() } else { labels(n, k + 1, &mut rng) };
    let report = tasks::iou(&pred, &gt).map_err(|e| e.to_string())?;
    let (per, mean) = iou(&pred, &gt);
    if report.per_part != per || !close(report.mean, mean) {
        return Err(format!("iou: {:?} vs {:?}", report.per_part, per));
    }

    let cats = 1 + rng.below(16);
    let groups: Vec<(u32, Vec<f64>)> = (0..cats)
        .map(|c| (c as u32, (0..1 + rng.below(10)).map(|_| rng.uniform()).collect()))
        .collect();
    let cr = tasks::category_mean_iou(&groups).map_err(|e| e.to_string())?;
    if !close(cr.weighted_mean, weighted_mean(&groups)) {
        return Err(format!("weighted mean {} vs {}", cr.weighted_mean, weighted_mean(&groups)));
    }
    let lo = cr.categories.iter().map(|c| c.mean_iou).fold(f64::INFINITY, f64::min);
    let hi = cr.categories.iter().map(|c| c.mean_iou).fold(f64::NEG_INFINITY, f64::max);
    if cr.weighted_mean < lo - TOL || cr.weighted_mean > hi + TOL {
        return Err("weighted mean outside category range".into());
    }

    let parts = 2 + rng.below(10);
    let table: Vec<u32> = (0..parts).map(|_| rng.below(4) as u32).collect();
    let votes = labels(1 + rng.below(100), parts as u32, &mut rng);
    let got = tasks::majority_vote_classify(&votes, &table).map_err(|e| e.to_string())?;
    if got != majority(&votes, &table) {
        return Err(format!("vote {got} vs {}", majority(&votes, &table)));
    }

    let results: Vec<KeypointResult> = (0..1 + rng.below(5))
        .map(|_| {
            let kp = 1 + rng.below(6);
            let ground_truth: Vec<P3> = (0..kp).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect();
            let predicted = ground_truth
                .iter()
                .map(|g| {
                    let s = 0.2 * rng.uniform();
                    [g[0] + s * rng.normal(), g[1] + s * rng.normal(), g[2] + s * rng.normal()]
                })
                .collect();
            KeypointResult { predicted, ground_truth }
        })
        .collect();
    let mut th: Vec<f64> = (0..8).map(|_| 0.3 * rng.uniform()).collect();
    th.sort_by(f64::total_cmp);
    let curve = tasks::pck(&results, &th).map_err(|e| e.to_string())?;
    if curve != pck(&results, &th) {
        return Err(format!("pck {curve:?}"));
    }
    if curve.windows(2).any(|w| w[0] > w[1]) || curve.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err("pck not monotone in [0, 1]".into());
    }

    let m = 5 + rng.below(50);
    let gtn: Vec<P3> = (0..m).map(|_| unit(&mut rng)).collect();
    let predn: Vec<P3> = (0..m)
        .map(|_| if rng.below(10) == 0 { [0.0; 3] } else { [rng.normal(), rng.normal(), rng.normal()] })
        .collect();
    let nr = tasks::normal_error(&predn, &gtn).map_err(|e| e.to_string())?;
    let (angle, l2, zero) = normals(&predn, &gtn);
    let angle_ok = match (nr.mean_angle_deg, angle) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    };
    if !angle_ok || !close(nr.l2, l2) || nr.zero_norm_predictions != zero {
        return Err(format!("normals {nr:?} vs {angle:?} {l2} {zero}"));
    }
    Ok(())
}
