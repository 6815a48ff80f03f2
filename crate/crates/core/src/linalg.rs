use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative pivot threshold for declaring a factorization singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// Inverse by LU with partial pivoting.
///
/// Fails when some pivot is below `PIVOT_TOL * max|m|`.
pub fn lu_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let scale = m.amax();
    let lu = m.clone().lu();
    let min_pivot = lu.u().diagonal().amin();
    if scale == 0.0 || min_pivot < PIVOT_TOL * scale {
        return Err(Error::Singular(format!(
            "{what}: pivot {min_pivot:e} below {PIVOT_TOL:e} x {scale:e}"
        )));
    }
    lu.try_inverse()
        .ok_or_else(|| Error::Singular(format!("{what}: LU inverse failed")))
}

/// Smallest singular value over `max(1, largest)`.
///
/// Scale-free for large matrices while still flagging a 1×1 matrix that is
/// numerically zero.
pub fn singular_value_ratio(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    sv.min() / sv.max().max(1.0)
}

/// Largest absolute entry-wise difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Relative disagreement `|a - b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}
