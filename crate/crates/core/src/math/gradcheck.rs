use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::scalar::Scalar;

/// Central-difference gradient of `loss` at `param`, one entry at a time.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN steps must be rejected too
pub fn finite_diff_grad<T, F>(mut loss: F, param: &Matrix<T>, h: T) -> Result<Matrix<T>>
where
    T: Scalar,
    F: FnMut(&Matrix<T>) -> Result<T>,
{
    if !(h > T::zero()) {
        return Err(Error::Usage("finite-difference step must be positive".into()));
    }
    let (rows, cols) = param.shape();
    let mut grad = Vec::with_capacity(rows * cols);
    let mut probe = param.clone();
    for index in 0..rows * cols {
        let (r, c) = (index / cols, index % cols);
        let x = param.get(r, c);
        probe.set(r, c, x + h)?;
        let up = loss(&probe)?;
        probe.set(r, c, x - h)?;
        let down = loss(&probe)?;
        probe.set(r, c, x)?;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite { what: "finite-difference probe".into(), index });
        }
        grad.push((up - down) / (h + h));
    }
    Matrix::new(rows, cols, grad)
}

/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

pub fn max_relative_error<T: Scalar>(analytic: &Matrix<T>, numeric: &Matrix<T>) -> Result<f64> {
    if analytic.shape() != numeric.shape() {
        return Err(Error::Dimension { op: "max_relative_error", left: analytic.shape(), right: numeric.shape() });
    }
    Ok(analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| relative_error(a.as_f64(), n.as_f64()))
        .fold(0.0, f64::max))
}
