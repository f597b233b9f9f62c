//! Procedural two-part shapes for tests and demos.
//!
//! Three families with different topology — ellipsoids, tori and capsules —
//! are sampled as surface point clouds with analytic unit normals. Each
//! point is labeled by which side of a paraboloid `z = κ(x² + y²) + b` it
//! lies on, giving two parts separated by a curved boundary. A handful of
//! extreme points serve as keypoints. Every shape is rotated about `z`
//! (which leaves the labeling rule unchanged) and then fitted into the
//! unit cube.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::graph::{Point3, PointCloud};
use crate::math;
use crate::rng::SeededRng;
use crate::sync::normalize_to_unit_cube;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    Ellipsoid,
    Torus,
    Capsule,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::Ellipsoid, SynthKind::Torus, SynthKind::Capsule];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Ellipsoid => "ellipsoid",
            SynthKind::Torus => "torus",
            SynthKind::Capsule => "capsule",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticShape {
    pub kind: SynthKind,
    pub id: String,
    /// Points in `[0, 1]³` with part labels (0 below the boundary, 1 above)
    /// and outward unit normals.
    pub cloud: PointCloud,
    /// Point indices of the keypoints: extremes along −x, +x, −y, +y, +z.
    pub keypoints: Vec<usize>,
}

pub const KEYPOINT_COUNT: usize = 5;

fn normalize(v: Point3) -> Point3 {
    let n = math::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn unit_sphere(rng: &mut SeededRng) -> Point3 {
    loop {
        let v = [rng.normal(), rng.normal(), rng.normal()];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-12 {
            return normalize(v);
        }
    }
}

/// One surface sample and its outward normal, in the shape's own frame.
fn sample_surface(kind: SynthKind, dims: [f64; 3], rng: &mut SeededRng) -> (Point3, Point3) {
    match kind {
        SynthKind::Ellipsoid => {
            // Area-weighted by rejection on the stretch factor.
            let [a, b, c] = dims;
            let max_s = a.max(b).max(c) * a.max(b).max(c);
            loop {
                let u = unit_sphere(rng);
                let p = [a * u[0], b * u[1], c * u[2]];
                let n = normalize([u[0] / a, u[1] / b, u[2] / c]);
                let s = math::sqrt(
                    (b * c * u[0]) * (b * c * u[0]) + (a * c * u[1]) * (a * c * u[1]) + (a * b * u[2]) * (a * b * u[2]),
                );
                if rng.uniform() * max_s <= s {
                    return (p, n);
                }
            }
        }
        SynthKind::Torus => {
            let [big, small, _] = dims;
            loop {
                let u = rng.uniform_range(0.0, 2.0 * PI);
                let v = rng.uniform_range(0.0, 2.0 * PI);
                if rng.uniform() * (big + small) > big + small * math::cos(v) {
                    continue;
                }
                let ring = big + small * math::cos(v);
                let p = [ring * math::cos(u), ring * math::sin(u), small * math::sin(v)];
                let n = [math::cos(v) * math::cos(u), math::cos(v) * math::sin(u), math::sin(v)];
                return (p, n);
            }
        }
        SynthKind::Capsule => {
            // Lying along x: cylinder of radius r, half-length h, two caps.
            let [r, h, _] = dims;
            let cyl = 2.0 * h * 2.0 * PI * r;
            let caps = 4.0 * PI * r * r;
            if rng.uniform() * (cyl + caps) < cyl {
                let t = rng.uniform_range(0.0, 2.0 * PI);
                let x = rng.uniform_range(-h, h);
                ([x, r * math::cos(t), r * math::sin(t)], [0.0, math::cos(t), math::sin(t)])
            } else {
                let u = unit_sphere(rng);
                let shift = if u[0] >= 0.0 { h } else { -h };
                ([shift + r * u[0], r * u[1], r * u[2]], u)
            }
        }
    }
}

fn random_dims(kind: SynthKind, rng: &mut SeededRng) -> [f64; 3] {
    match kind {
        SynthKind::Ellipsoid => [
            rng.uniform_range(0.8, 1.2),
            rng.uniform_range(0.6, 1.0),
            rng.uniform_range(0.7, 1.1),
        ],
        SynthKind::Torus => [rng.uniform_range(0.75, 0.95), rng.uniform_range(0.3, 0.45), 0.0],
        SynthKind::Capsule => [rng.uniform_range(0.35, 0.5), rng.uniform_range(0.4, 0.7), 0.0],
    }
}

/// A labeled shape of `kind` with `n_points` points.
pub fn synthetic_shape(kind: SynthKind, n_points: usize, seed: u64) -> Result<SyntheticShape> {
    if n_points < 2 * KEYPOINT_COUNT {
        return Err(Error::TooFewPoints {
            have: n_points,
            need: 2 * KEYPOINT_COUNT,
        });
    }
    let mut rng = SeededRng::new(seed);
    let dims = random_dims(kind, &mut rng);
    let theta = rng.uniform_range(0.0, 2.0 * PI);
    let (ct, st) = (math::cos(theta), math::sin(theta));
    let rot = |v: Point3| [ct * v[0] - st * v[1], st * v[0] + ct * v[1], v[2]];
    let curvature = rng.uniform_range(0.5, 0.9);

    let mut points = Vec::with_capacity(n_points);
    let mut normals = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let (p, n) = sample_surface(kind, dims, &mut rng);
        points.push(rot(p));
        normals.push(normalize(rot(n)));
    }
    // Boundary offset: put the median of z − κ(x²+y²) at the split so both
    // parts are populated.
    let mut height: Vec<f64> = points
        .iter()
        .map(|p| p[2] - curvature * (p[0] * p[0] + p[1] * p[1]))
        .collect();
    let labels: Vec<u32> = {
        let mut sorted = height.clone();
        sorted.sort_by(f64::total_cmp);
        let offset = sorted[sorted.len() * 3 / 5];
        height.iter_mut().map(|h| u32::from(*h > offset)).collect()
    };

    let extreme = |key: &dyn Fn(&Point3) -> f64| {
        let mut best = 0;
        for (i, p) in points.iter().enumerate() {
            if key(p) > key(&points[best]) {
                best = i;
            }
        }
        best
    };
    let keypoints = Vec::from([
        extreme(&|p| -p[0]),
        extreme(&|p| p[0]),
        extreme(&|p| -p[1]),
        extreme(&|p| p[1]),
        extreme(&|p| p[2]),
    ]);

    let cloud = PointCloud::new(points)?.with_labels(labels)?.with_normals(normals)?;
    Ok(SyntheticShape {
        kind,
        id: alloc::format!("{}_{seed:016x}", kind.name()),
        cloud: normalize_to_unit_cube(&cloud)?,
        keypoints,
    })
}

/// `count` shapes cycling through the families.
pub fn synthetic_set(count: usize, n_points: usize, seed: u64) -> Result<Vec<SyntheticShape>> {
    let mut rng = SeededRng::new(seed);
    (0..count)
        .map(|i| synthetic_shape(SynthKind::ALL[i % SynthKind::ALL.len()], n_points, rng.next_u64()))
        .collect()
}
