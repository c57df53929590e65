//! Quadratic Lyapunov candidate built from a Cholesky factor.
//!
//! The candidate is `V(xi) = xi' Q xi` with `Q = L L'`, where `L` is lower
//! triangular with strictly positive diagonal. Positive definiteness of `Q`
//! is then structural rather than something to verify after the fact. The
//! factor entries come from a raw, unconstrained vector (typically a network
//! output): diagonal entries pass through a softplus (plus an optional
//! floor), off-diagonal entries pass through unchanged.
//!
//! Raw vector layout, fixed so saved models stay portable: for dimension
//! `n`, the first `n` entries feed the diagonal, the remaining `n(n-1)/2`
//! fill the strict lower triangle row by row, i.e. `(1,0), (2,0), (2,1),
//! (3,0), ...`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LyapunovError {
    #[error("raw vector has length {found}, dimension {n} needs {expected}")]
    LengthMismatch { n: usize, expected: usize, found: usize },
    #[error("state has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Number of free entries in an `n` x `n` lower-triangular matrix.
pub const fn raw_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Overflow-safe `ln(1 + e^x)`. Strictly positive for every finite input.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        // ln(1 + e^x) = x + ln(1 + e^-x); the correction underflows to 0
        // for large x instead of e^x overflowing.
        x + (-x).exp().ln_1p()
    } else {
        // For x < -30 this is e^x to full precision via ln_1p.
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`]: the logistic sigmoid, in `(0, 1)`.
pub fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let ex = x.exp();
        ex / (1.0 + ex)
    }
}

/// Lower-triangular matrix with strictly positive diagonal.
///
/// Stored row-major as a dense `n` x `n` block; entries above the diagonal
/// are identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor {
    n: usize,
    entries: Vec<f64>,
}

impl CholeskyFactor {
    /// Builds a factor from a dense row-major `n` x `n` slice. The strict
    /// upper triangle must be zero and the diagonal strictly positive.
    pub fn from_dense(n: usize, entries: Vec<f64>) -> Option<Self> {
        if entries.len() != n * n {
            return None;
        }
        for i in 0..n {
            if !(entries[i * n + i] > 0.0) {
                return None;
            }
            for j in i + 1..n {
                if entries[i * n + j] != 0.0 {
                    return None;
                }
            }
        }
        Some(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    /// Dense row-major storage, upper triangle zero.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Symmetric positive-definite matrix `Q = L L'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticMatrix {
    n: usize,
    q: Vec<f64>,
}

impl QuadraticMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    /// Row-major dense storage.
    pub fn entries(&self) -> &[f64] {
        &self.q
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.q[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    /// Standard Cholesky decomposition. Returns `None` when a pivot is not
    /// strictly positive, so a successful return witnesses positive
    /// definiteness. This is the independent check paired with [`gram`]:
    /// it never reuses the factor the matrix was built from.
    pub fn cholesky(&self) -> Option<CholeskyFactor> {
        let n = self.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.q[i * n + j];
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        CholeskyFactor::from_dense(n, l)
    }
}

/// Assembles the factor from a raw vector of length `n(n+1)/2`.
///
/// Diagonal entries become `diag_floor + softplus(raw_i)`; strict
/// lower-triangle entries are taken as-is, row-major. With `diag_floor = 0`
/// the diagonal is the plain softplus head.
pub fn assemble_factor(
    raw: &[f64],
    n: usize,
    diag_floor: f64,
) -> Result<CholeskyFactor, LyapunovError> {
    let expected = raw_len(n);
    if raw.len() != expected {
        return Err(LyapunovError::LengthMismatch { n, expected, found: raw.len() });
    }
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = diag_floor + softplus(raw[i]);
    }
    let mut k = n;
    for i in 1..n {
        for j in 0..i {
            entries[i * n + j] = raw[k];
            k += 1;
        }
    }
    Ok(CholeskyFactor { n, entries })
}

/// `Q = L L'`, computed once per `(i, j)` pair and mirrored so the stored
/// matrix is symmetric bit-for-bit.
pub fn gram(l: &CholeskyFactor) -> QuadraticMatrix {
    let n = l.n;
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            // (L L')_ij = sum_k L_ik L_jk, nonzero only for k <= min(i, j).
            let mut sum = 0.0;
            for k in 0..=j.min(i) {
                sum += l.entries[i * n + k] * l.entries[j * n + k];
            }
            q[i * n + j] = sum;
            q[j * n + i] = sum;
        }
    }
    QuadraticMatrix { n, q }
}

/// `V(xi) = ||L' xi||^2`, algebraically `xi' Q xi` but nonnegative by
/// construction under rounding, and exactly zero at `xi = 0`.
pub fn lyapunov_value(l: &CholeskyFactor, xi: &[f64]) -> Result<f64, LyapunovError> {
    let n = l.n;
    if xi.len() != n {
        return Err(LyapunovError::DimensionMismatch { expected: n, found: xi.len() });
    }
    let mut value = 0.0;
    for i in 0..n {
        // (L' xi)_i = sum_{k >= i} L_ki xi_k
        let mut y = 0.0;
        for k in i..n {
            y += l.entries[k * n + i] * xi[k];
        }
        value += y * y;
    }
    Ok(value)
}

/// Exact gradient of [`lyapunov_value`] with respect to the factor entries:
/// `dV/dL = 2 xi (xi' L)`, restricted to the lower triangle. Returned as a
/// dense row-major `n` x `n` matrix whose strict upper triangle is zero.
pub fn value_grad_factor(l: &CholeskyFactor, xi: &[f64]) -> Result<Vec<f64>, LyapunovError> {
    let n = l.n;
    if xi.len() != n {
        return Err(LyapunovError::DimensionMismatch { expected: n, found: xi.len() });
    }
    // u = L' xi
    let mut u = vec![0.0; n];
    for i in 0..n {
        for k in i..n {
            u[i] += l.entries[k * n + i] * xi[k];
        }
    }
    let mut grad = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..=row {
            grad[row * n + col] = 2.0 * xi[row] * u[col];
        }
    }
    Ok(grad)
}

/// Pulls a gradient in the factor entries back to the raw vector that
/// produced the factor: softplus derivative on the diagonal slots, identity
/// on the strict lower-triangle slots. `grad_l` is dense row-major as
/// returned by [`value_grad_factor`]; `raw` is the same vector that was
/// passed to [`assemble_factor`].
pub fn factor_grad_to_raw(
    grad_l: &[f64],
    raw: &[f64],
    n: usize,
) -> Result<Vec<f64>, LyapunovError> {
    let expected = raw_len(n);
    if raw.len() != expected {
        return Err(LyapunovError::LengthMismatch { n, expected, found: raw.len() });
    }
    if grad_l.len() != n * n {
        return Err(LyapunovError::DimensionMismatch { expected: n * n, found: grad_l.len() });
    }
    let mut out = vec![0.0; expected];
    for i in 0..n {
        out[i] = grad_l[i * n + i] * softplus_grad(raw[i]);
    }
    let mut k = n;
    for i in 1..n {
        for j in 0..i {
            out[k] = grad_l[i * n + j];
            k += 1;
        }
    }
    Ok(out)
}
