//! Spectral transforms and kernel parameterizations.
//!
//! A vertex signal `f` (n × d) maps to spectral coefficients `α = Bᵀf`
//! (m × d) and back through `f = Bα`. Convolution is a pointwise product of
//! `α` with multipliers `m(λ)`. Every kernel family here is linear in its
//! coefficient vector `ω`, so multipliers are `Φ(λ)·ω` for a design matrix
//! `Φ` that depends only on the family, the dilation and the eigenvalues.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::eigen::SpectralBasis;
use crate::linalg::Mat;
use crate::math;
use crate::{Error, Result};

/// A function on graph vertices, one column per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexSignal(Mat);

impl VertexSignal {
    pub fn new(values: Mat) -> Result<Self> {
        if values.cols() == 0 {
            return Err(Error::InvalidArgument("signal needs at least one channel".into()));
        }
        if !values.is_finite() {
            return Err(Error::InvalidArgument("signal has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn channels(&self) -> usize {
        self.0.cols()
    }

    pub fn values(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

/// Spectral coordinates `α` (m × d) of a signal in some basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoeffs(Mat);

impl SpectralCoeffs {
    pub fn new(values: Mat) -> Self {
        Self(values)
    }

    pub fn m(&self) -> usize {
        self.0.rows()
    }

    pub fn values(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

pub fn forward_transform(f: &VertexSignal, basis: &SpectralBasis) -> Result<SpectralCoeffs> {
    if f.n() != basis.n() {
        return Err(Error::DimensionMismatch {
            what: "forward transform vertex count",
            expected: basis.n(),
            found: f.n(),
        });
    }
    Ok(SpectralCoeffs(basis.vectors().t_matmul(f.values())))
}

pub fn backward_transform(alpha: &SpectralCoeffs, basis: &SpectralBasis) -> Result<VertexSignal> {
    if alpha.m() != basis.m() {
        return Err(Error::DimensionMismatch {
            what: "backward transform coefficient count",
            expected: basis.m(),
            found: alpha.m(),
        });
    }
    Ok(VertexSignal(basis.vectors().matmul(alpha.values())))
}

/// Scales row `i` of `α` by `m_i`, identically for every channel.
pub fn spectral_multiply(alpha: &SpectralCoeffs, multipliers: &[f64]) -> Result<SpectralCoeffs> {
    if multipliers.len() != alpha.m() {
        return Err(Error::DimensionMismatch {
            what: "multiplier count",
            expected: alpha.m(),
            found: multipliers.len(),
        });
    }
    let a = alpha.values();
    Ok(SpectralCoeffs(Mat::from_fn(a.rows(), a.cols(), |i, j| {
        multipliers[i] * a[(i, j)]
    })))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// Clamped uniform cubic B-spline over `[0, 2]`; `ω` are control values.
    CubicSpline,
    /// `m(λ) = Σ_{j=0}^{n} ω_j e^{−jγλ}`.
    ExpWindow,
    /// Exponential windows modulated by `cos`/`sin` at the same rate; `ω`
    /// holds `2n+1` values.
    ModulatedExpWindow,
    /// One multiplier shared by the whole spectrum.
    Constant,
    /// One free multiplier per coefficient.
    Free,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::CubicSpline => "cubic-spline",
            KernelKind::ExpWindow => "exp-window",
            KernelKind::ModulatedExpWindow => "modulated-exp-window",
            KernelKind::Constant => "constant",
            KernelKind::Free => "free",
        }
    }

    pub fn parse(s: &str) -> Option<KernelKind> {
        [
            KernelKind::CubicSpline,
            KernelKind::ExpWindow,
            KernelKind::ModulatedExpWindow,
            KernelKind::Constant,
            KernelKind::Free,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    /// Checks that `len` coefficients form a valid kernel of this kind.
    pub fn validate_len(self, len: usize) -> Result<()> {
        let ok = match self {
            KernelKind::ModulatedExpWindow => len % 2 == 1,
            KernelKind::ExpWindow | KernelKind::Free => len >= 1,
            KernelKind::CubicSpline => len >= 4,
            KernelKind::Constant => len == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadSpec(format!("{} cannot take {len} coefficients", self.name())))
        }
    }

    /// Coefficients that make every multiplier equal to one.
    pub fn identity_coefficients(self, len: usize) -> Vec<f64> {
        match self {
            KernelKind::CubicSpline | KernelKind::Free | KernelKind::Constant => vec![1.0; len],
            KernelKind::ExpWindow | KernelKind::ModulatedExpWindow => {
                let mut w = vec![0.0; len];
                if let Some(first) = w.first_mut() {
                    *first = 1.0;
                }
                w
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub dilation: f64,
    pub omega: Vec<f64>,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, dilation: f64, omega: Vec<f64>) -> Result<Self> {
        if !(dilation > 0.0 && dilation.is_finite()) {
            return Err(Error::BadSpec(format!("dilation {dilation} must be positive")));
        }
        kind.validate_len(omega.len())?;
        Ok(Self { kind, dilation, omega })
    }

    /// Modulation order `n` for the window families.
    pub fn order(&self) -> Option<usize> {
        match self.kind {
            KernelKind::ModulatedExpWindow => Some((self.omega.len() - 1) / 2),
            KernelKind::ExpWindow => Some(self.omega.len() - 1),
            _ => None,
        }
    }
}

fn check_eigenvalues(lambda: &[f64]) -> Result<()> {
    const SLACK: f64 = 1e-8;
    if lambda.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::BadSpec("eigenvalues must be ascending".into()));
    }
    if lambda.iter().any(|&l| !(-SLACK..=2.0 + SLACK).contains(&l)) {
        return Err(Error::BadSpec("eigenvalues must lie in [0, 2]".into()));
    }
    Ok(())
}

/// The `len(λ) × P` matrix `Φ` with `m = Φ·ω` for a kernel of `kind` with
/// `n_params` coefficients.
pub fn kernel_design(kind: KernelKind, dilation: f64, n_params: usize, lambda: &[f64]) -> Result<Mat> {
    kind.validate_len(n_params)?;
    check_eigenvalues(lambda)?;
    let rows = lambda.len();
    let phi = match kind {
        KernelKind::ModulatedExpWindow => {
            let order = (n_params - 1) / 2;
            let mut phi = Mat::zeros(rows, n_params);
            for (i, &l) in lambda.iter().enumerate() {
                for j in 0..=order {
                    let t = j as f64 * dilation * l;
                    let env = math::exp(-t);
                    phi[(i, 2 * j)] = env * math::cos(t * PI);
                    if j > 0 {
                        phi[(i, 2 * j - 1)] = env * math::sin(t * PI);
                    }
                }
            }
            phi
        }
        KernelKind::ExpWindow => Mat::from_fn(rows, n_params, |i, j| {
            math::exp(-(j as f64) * dilation * lambda[i])
        }),
        KernelKind::CubicSpline => {
            let mut phi = Mat::zeros(rows, n_params);
            for (i, &l) in lambda.iter().enumerate() {
                let x = (dilation * l).clamp(0.0, 2.0);
                phi.row_mut(i).copy_from_slice(&clamped_cubic_basis(n_params, x));
            }
            phi
        }
        KernelKind::Constant => Mat::filled(rows, 1, 1.0),
        KernelKind::Free => {
            if n_params != rows {
                return Err(Error::BadSpec(format!(
                    "free kernel has {n_params} multipliers for {rows} coefficients"
                )));
            }
            Mat::identity(rows)
        }
    };
    Ok(phi)
}

pub fn kernel_multipliers(spec: &KernelSpec, lambda: &[f64]) -> Result<Vec<f64>> {
    let phi = kernel_design(spec.kind, spec.dilation, spec.omega.len(), lambda)?;
    Ok(phi.matmul(&Mat::column_vector(&spec.omega)).into_vec())
}

/// Values of the `count` clamped cubic B-spline basis functions at `x` in
/// `[0, 2]`, with interior knots evenly spaced.
fn clamped_cubic_basis(count: usize, x: f64) -> Vec<f64> {
    const DEGREE: usize = 3;
    let segments = count - DEGREE;
    let knot = |i: usize| -> f64 {
        if i <= DEGREE {
            0.0
        } else if i >= count {
            2.0
        } else {
            2.0 * (i - DEGREE) as f64 / segments as f64
        }
    };
    let span = if x >= 2.0 {
        count - 1
    } else {
        (DEGREE..count)
            .find(|&i| knot(i) <= x && x < knot(i + 1))
            .unwrap_or(count - 1)
    };
    let mut basis = vec![0.0; count + DEGREE];
    basis[span] = 1.0;
    for p in 1..=DEGREE {
        for i in 0..count + DEGREE - p {
            let mut v = 0.0;
            let d1 = knot(i + p) - knot(i);
            if d1 > 0.0 {
                v += (x - knot(i)) / d1 * basis[i];
            }
            let d2 = knot(i + p + 1) - knot(i + 1);
            if d2 > 0.0 {
                v += (knot(i + p + 1) - x) / d2 * basis[i + 1];
            }
            basis[i] = v;
        }
    }
    basis.truncate(count);
    basis
}

/// The kernel centered at vertex `center` seen as a vertex function,
/// `B·diag(m)·Bᵀ·e_center`.
pub fn spatial_kernel_profile(spec: &KernelSpec, basis: &SpectralBasis, center: usize) -> Result<VertexSignal> {
    if center >= basis.n() {
        return Err(Error::InvalidArgument(format!(
            "center {center} out of range for {} vertices",
            basis.n()
        )));
    }
    let m = kernel_multipliers(spec, basis.eigenvalues())?;
    let b = basis.vectors();
    let weighted: Vec<f64> = b.row(center).iter().zip(&m).map(|(v, mi)| v * mi).collect();
    let k = b.matmul(&Mat::column_vector(&weighted));
    VertexSignal::new(k)
}
