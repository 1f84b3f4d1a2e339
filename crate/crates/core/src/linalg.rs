//! Small dense kernels. Reductions use fixed-width independent accumulators so
//! they vectorize while staying deterministic.

use nalgebra::{DMatrix, DVector};

use crate::dictionary::RegressorMatrix;
use crate::error::{Error, Result};

const LANES: usize = 8;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn norm2_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row-major square matrix times vector.
pub fn sym_mul_vec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    a.chunks_exact(n).map(|row| dot(row, x)).collect()
}

/// `S^T S / n` (row-major, full) for the rows of `s`.
pub fn gram(s: &RegressorMatrix) -> Vec<f64> {
    let d = s.cols();
    let mut a = vec![0.0; d * d];
    for i in 0..s.rows() {
        let row = s.row(i);
        for (j, &rj) in row.iter().enumerate() {
            if rj != 0.0 {
                // upper triangle only
                axpy(rj, &row[j..], &mut a[j * d + j..(j + 1) * d]);
            }
        }
    }
    let inv = 1.0 / s.rows() as f64;
    for j in 0..d {
        for k in j..d {
            let v = a[j * d + k] * inv;
            a[j * d + k] = v;
            a[k * d + j] = v;
        }
    }
    a
}

/// Minimum-norm least-squares solution of `S theta ~ y` through the SVD,
/// discarding singular values below `rcond * sigma_max`.
pub fn min_norm_least_squares(s: &RegressorMatrix, y: &[f64], rcond: Option<f64>) -> Result<Vec<f64>> {
    if y.len() != s.rows() {
        return Err(Error::DimensionMismatch {
            expected: s.rows(),
            found: y.len(),
        });
    }
    let m = DMatrix::from_row_slice(s.rows(), s.cols(), s.as_slice());
    let b = DVector::from_column_slice(y);
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let rcond = rcond.unwrap_or(f64::EPSILON * s.rows().max(s.cols()) as f64);
    let theta = svd
        .solve(&b, rcond * smax)
        .map_err(|e| Error::InvalidArgument(format!("least-squares solve failed: {e}")))?;
    Ok(theta.iter().copied().collect())
}
