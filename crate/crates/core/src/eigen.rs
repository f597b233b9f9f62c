//! Truncated eigendecomposition of normalized Laplacians.
//!
//! Small problems go through the dense solver in [`crate::linalg`]. Larger
//! ones use Chebyshev-filtered subspace iteration: a block of vectors is
//! repeatedly multiplied by a Chebyshev polynomial of `L` that damps the
//! unwanted upper part of the spectrum, re-orthonormalized, and rotated by
//! a Rayleigh-Ritz step. The block form keeps repeated eigenvalues (for
//! instance `λ = 0` on a fragmented scan) from being missed.

use alloc::vec;
use alloc::vec::Vec;

use crate::graph::Laplacian;
use crate::linalg::{self, Mat};
use crate::rng::SeededRng;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Eigenpairs `(λ_i, b_i)` of a Laplacian, ascending in `λ`, with the
/// vectors stored as the columns of an `n × m` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    vectors: Mat,
}

impl SpectralBasis {
    pub fn new(eigenvalues: Vec<f64>, vectors: Mat) -> Result<Self> {
        if vectors.cols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                what: "basis eigenvalue count",
                expected: vectors.cols(),
                found: eigenvalues.len(),
            });
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("eigenvalues must be ascending".into()));
        }
        Ok(Self { eigenvalues, vectors })
    }

    /// Vertex count.
    pub fn n(&self) -> usize {
        self.vectors.rows()
    }

    /// Number of retained eigenpairs.
    pub fn m(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &Mat {
        &self.vectors
    }

    /// The first `m` eigenpairs.
    pub fn truncated(&self, m: usize) -> SpectralBasis {
        let m = m.min(self.m());
        SpectralBasis {
            eigenvalues: self.eigenvalues[..m].to_vec(),
            vectors: self.vectors.slice_cols(0, m),
        }
    }

    /// Rows reordered so that new row `i` is old row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> SpectralBasis {
        SpectralBasis {
            eigenvalues: self.eigenvalues.clone(),
            vectors: Mat::from_fn(self.n(), self.m(), |i, j| self.vectors[(perm[i], j)]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenOptions {
    /// Problems with `n` at or below this size use the dense solver.
    pub dense_threshold: usize,
    /// Required residual `‖L b − λ b‖₂` for every returned pair.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Chebyshev polynomial degree per filtering pass.
    pub filter_degree: usize,
    /// Extra block vectors beyond the requested count.
    pub guard_vectors: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            dense_threshold: 512,
            tolerance: 1e-10,
            max_iterations: 2000,
            filter_degree: 16,
            guard_vectors: 10,
            seed: 0x5EED_BA5E,
        }
    }
}

impl EigenOptions {
    pub fn iterative() -> Self {
        Self {
            dense_threshold: 0,
            ..Self::default()
        }
    }

    pub fn dense() -> Self {
        Self {
            dense_threshold: usize::MAX,
            ..Self::default()
        }
    }
}

/// The `m` smallest eigenpairs of `l`, sign-normalized so that the entry of
/// largest magnitude in each vector is positive (lowest index on ties).
pub fn eigendecompose(l: &Laplacian, m: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    smallest_eigenpairs(l.matrix(), m, opts)
}

/// [`eigendecompose`] for any symmetric sparse matrix.
pub fn smallest_eigenpairs(a: &CsrMatrix, m: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    let n = a.n_rows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(alloc::format!(
            "eigen count {m} must be in 1..={n}"
        )));
    }
    let block = (m + opts.guard_vectors.max(m / 4)).min(n);
    let (values, mut vectors) = if n <= opts.dense_threshold {
        dense_smallest(a, m)?
    } else {
        filtered_subspace_iteration(a, m, block, opts)?
    };
    for j in 0..m {
        let mut col = vectors.column(j);
        fix_sign(&mut col);
        vectors.set_column(j, &col);
    }
    SpectralBasis::new(values, vectors)
}

fn dense_smallest(a: &CsrMatrix, m: usize) -> Result<(Vec<f64>, Mat)> {
    let (values, vectors) = linalg::symmetric_eigen(&a.to_dense())?;
    Ok((values[..m].to_vec(), vectors.slice_cols(0, m)))
}

/// Flips `v` so its largest-magnitude entry is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn apply(a: &CsrMatrix, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|col| {
            let mut y = vec![0.0; col.len()];
            a.matvec(col, &mut y);
            y
        })
        .collect()
}

/// Rotates the orthonormal block `x` onto Ritz vectors of `a`, returning
/// Ritz values ascending together with `a·x` for the rotated block.
fn rayleigh_ritz(a: &CsrMatrix, x: &mut Vec<Vec<f64>>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = x.len();
    let ax = apply(a, x);
    let h = Mat::from_fn(p, p, |i, j| {
        let (i, j) = (i.min(j), i.max(j));
        linalg::dot(&x[i], &ax[j])
    });
    let (theta, v) = linalg::symmetric_eigen(&h)?;
    let rotate = |block: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let n = block[0].len();
        (0..p)
            .map(|j| {
                let mut out = vec![0.0; n];
                for (k, col) in block.iter().enumerate() {
                    let c = v[(k, j)];
                    if c != 0.0 {
                        for (o, xi) in out.iter_mut().zip(col) {
                            *o += c * xi;
                        }
                    }
                }
                out
            })
            .collect()
    };
    *x = rotate(x);
    Ok((theta, rotate(&ax)))
}

fn filtered_subspace_iteration(
    a: &CsrMatrix,
    m: usize,
    block: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Mat)> {
    let n = a.n_rows();
    let mut rng = SeededRng::new(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.normal()).collect())
        .collect();
    refill_collapsed(&mut x, &mut rng);
    let upper = a.gershgorin_bound();
    let (mut theta, mut ax) = rayleigh_ritz(a, &mut x)?;
    let mut residual = f64::INFINITY;

    for iteration in 0..opts.max_iterations {
        residual = (0..m)
            .map(|j| {
                let r: f64 = ax[j]
                    .iter()
                    .zip(&x[j])
                    .map(|(av, xv)| {
                        let d = av - theta[j] * xv;
                        d * d
                    })
                    .sum();
                crate::math::sqrt(r)
            })
            .fold(0.0, f64::max);
        if residual <= opts.tolerance {
            let values = theta[..m].to_vec();
            let vectors = Mat::from_columns(&x[..m]);
            return Ok((values, vectors));
        }
        let cut = theta[block - 1];
        if !(cut < upper) {
            // The block already spans the top of the spectrum; nothing left
            // to damp, so only the Rayleigh-Ritz refresh can help.
            return Err(Error::ConvergenceFailure {
                iterations: iteration,
                residual,
            });
        }
        x = chebyshev_filter(a, &x, opts.filter_degree, cut, upper);
        refill_collapsed(&mut x, &mut rng);
        let (t, axn) = rayleigh_ritz(a, &mut x)?;
        theta = t;
        ax = axn;
    }
    Err(Error::ConvergenceFailure {
        iterations: opts.max_iterations,
        residual,
    })
}

fn refill_collapsed(x: &mut [Vec<f64>], rng: &mut SeededRng) {
    for _attempt in 0..8 {
        let collapsed = linalg::orthonormalize(x);
        if collapsed.is_empty() {
            return;
        }
        for j in collapsed {
            for v in x[j].iter_mut() {
                *v = rng.normal();
            }
        }
    }
}

/// Degree-`deg` Chebyshev polynomial of `a` mapped so that `[cut, upper]`
/// lands on `[-1, 1]`, applied column by column.
fn chebyshev_filter(a: &CsrMatrix, x: &[Vec<f64>], deg: usize, cut: f64, upper: f64) -> Vec<Vec<f64>> {
    let e = (upper - cut) / 2.0;
    let c = (upper + cut) / 2.0;
    let n = a.n_rows();
    let mut tmp = vec![0.0; n];
    x.iter()
        .map(|x0| {
            a.matvec(x0, &mut tmp);
            let mut prev = x0.clone();
            let mut cur: Vec<f64> = tmp.iter().zip(x0).map(|(ax, xv)| (ax - c * xv) / e).collect();
            for _ in 1..deg {
                a.matvec(&cur, &mut tmp);
                let next: Vec<f64> = tmp
                    .iter()
                    .zip(&cur)
                    .zip(&prev)
                    .map(|((ay, y), yp)| 2.0 * (ay - c * y) / e - yp)
                    .collect();
                prev = core::mem::replace(&mut cur, next);
            }
            cur
        })
        .collect()
}
