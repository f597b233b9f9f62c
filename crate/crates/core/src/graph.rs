//! Point clouds, kNN weight graphs and symmetric normalized Laplacians.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::rng::SeededRng;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// A shape sampled as points, with optional per-point part labels and
/// unit normals.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    labels: Option<Vec<u32>>,
    normals: Option<Vec<Point3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints {
                have: points.len(),
                need: 2,
            });
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidPointCloud(format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            labels: None,
            normals: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: self.points.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_normals(mut self, normals: Vec<Point3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                what: "normals",
                expected: self.points.len(),
                found: normals.len(),
            });
        }
        for (i, nrm) in normals.iter().enumerate() {
            let len = math::sqrt(nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]);
            if !len.is_finite() || (len - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidPointCloud(format!("normal {i} is not unit length")));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn normals(&self) -> Option<&[Point3]> {
        self.normals.as_deref()
    }

    /// Keeps the points at `indices` (in the given order) with their
    /// labels and normals.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let mut out = PointCloud::new(points)?;
        out.labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        out.normals = self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect());
        Ok(out)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for c in 0..3 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        (lo, hi)
    }
}

/// Symmetric nonnegative edge weights with an empty diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedGraph {
    weights: CsrMatrix,
}

impl WeightedGraph {
    /// Builds a graph from undirected edges `(i, j, w)`; each edge is
    /// stored in both directions.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut triplets = Vec::with_capacity(2 * edges.len());
        for &(i, j, w) in edges {
            if i == j || i >= n || j >= n || !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("bad edge ({i}, {j}, {w})")));
            }
            triplets.push((i, j, w));
            triplets.push((j, i, w));
        }
        Ok(Self {
            weights: CsrMatrix::from_triplets(n, n, &triplets),
        })
    }

    pub fn n(&self) -> usize {
        self.weights.n_rows()
    }

    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.weights.row_sum(i)
    }

    /// Undirected edges with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.weights
            .triplets()
            .into_iter()
            .filter(|&(i, j, _)| i < j)
            .collect()
    }

    /// Number of connected components (union-find over the edge list).
    pub fn component_count(&self) -> usize {
        let n = self.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (i, j, _) in self.edges() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }
}

/// `L = I − D^{-1/2} W D^{-1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    matrix: CsrMatrix,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
}

/// Connects every point to its `k` nearest neighbours, symmetrizes the
/// edge set by union and weights each edge by `1/d²`.
///
/// Neighbour ties are broken by the lower point index.
pub fn build_knn_graph(pc: &PointCloud, k: usize) -> Result<WeightedGraph> {
    let n = pc.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if n <= k {
        return Err(Error::TooFewPoints { have: n, need: k + 1 });
    }
    let pts = pc.points();
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        scratch.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2 = squared_distance(&pts[i], &pts[j]);
            if d2 == 0.0 {
                return Err(Error::DuplicatePoints {
                    first: i.min(j),
                    second: i.max(j),
                });
            }
            scratch.push((d2, j));
        }
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, by_dist);
        }
        for &(d2, j) in &scratch[..k] {
            edges.insert((i.min(j), i.max(j)), 1.0 / d2);
        }
    }
    let list: Vec<(usize, usize, f64)> = edges.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    WeightedGraph::from_edges(n, &list)
}

pub fn laplacian(g: &WeightedGraph) -> Result<Laplacian> {
    let n = g.n();
    let degrees: Vec<f64> = (0..n).map(|i| g.degree(i)).collect();
    if let Some(i) = degrees.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::IsolatedVertex(i));
    }
    let mut triplets = Vec::with_capacity(g.weights().nnz() + n);
    for i in 0..n {
        triplets.push((i, i, 1.0));
        for (j, w) in g.weights().row(i) {
            triplets.push((i, j, -w / math::sqrt(degrees[i] * degrees[j])));
        }
    }
    Ok(Laplacian {
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
    })
}

/// Uniform random subset of `⌈ratio·N⌉` points without replacement, kept
/// in original order. `min_points` is normally `k + 1` so the result can
/// still carry a kNN graph.
pub fn downsample(pc: &PointCloud, ratio: f64, min_points: usize, seed: u64) -> Result<PointCloud> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("downsample ratio {ratio} not in (0, 1]")));
    }
    let n = pc.len();
    let keep = (math::ceil(ratio * n as f64) as usize).min(n);
    if keep < min_points.max(2) {
        return Err(Error::TooFewPoints {
            have: keep,
            need: min_points.max(2),
        });
    }
    if keep == n {
        return Ok(pc.clone());
    }
    let mut rng = SeededRng::new(seed);
    let idx = rng.sample_indices(n, keep);
    pc.select(&idx)
}
