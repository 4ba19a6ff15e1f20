use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Decoupled decay: `param -= lr * weight_decay * param` before the moment step.
    pub weight_decay: T,
}

impl<T: Scalar> AdamConfig<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr: T::cast(lr),
            beta1: T::cast(0.9),
            beta2: T::cast(0.999),
            eps: T::cast(1e-8),
            weight_decay: T::cast(weight_decay),
        }
    }
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self::new(1e-3, 1e-5)
    }
}

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    m: Matrix<T>,
    v: Matrix<T>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: (usize, usize), config: AdamConfig<T>) -> Self {
        Self { config, m: Matrix::zeros(shape.0, shape.1), v: Matrix::zeros(shape.0, shape.1), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &Matrix<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &Matrix<T> {
        &self.v
    }

    /// One bias-corrected AdamW update of `param` in place.
    pub fn update(&mut self, param: &mut Matrix<T>, grad: &Matrix<T>, name: &str) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m.shape() {
            return Err(Error::Dimension { op: "adam_step", left: param.shape(), right: grad.shape() });
        }
        if let Some(index) = grad.as_slice().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { what: format!("gradient of {name}"), index });
        }
        let AdamConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let bc1 = T::one() - beta1.powi(t);
        let bc2 = T::one() - beta2.powi(t);
        let decay = lr * weight_decay;
        let p = param.data_mut();
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for i in 0..p.len() {
            let g = grad.as_slice()[i];
            if weight_decay != T::zero() {
                p[i] -= decay * p[i];
            }
            m[i] = beta1 * m[i] + (T::one() - beta1) * g;
            v[i] = beta2 * v[i] + (T::one() - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        param.ensure_finite(name)
    }
}

/// Functional form: returns the updated parameter, leaving `param` untouched.
pub fn adam_step<T: Scalar>(
    param: &Matrix<T>,
    grad: &Matrix<T>,
    state: &mut AdamState<T>,
    name: &str,
) -> Result<Matrix<T>> {
    let mut out = param.clone();
    state.update(&mut out, grad, name)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity_without_decay() {
        let p = Matrix::from_rows(&[vec![0.3, -1.2], vec![5.0, 1e-9]]).unwrap();
        let mut st = AdamState::new(p.shape(), AdamConfig::new(1e-3, 0.0));
        let mut q = p.clone();
        for _ in 0..5 {
            q = adam_step(&q, &Matrix::zeros(2, 2), &mut st, "p").unwrap();
        }
        assert!(q.bits_eq(&p));
        assert_eq!(st.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m̂ = g, v̂ = g², so the delta is lr·g/(|g| + eps).
        let p = Matrix::new(1, 1, vec![0.0f64]).unwrap();
        let g = Matrix::new(1, 1, vec![1.0]).unwrap();
        let mut st = AdamState::new((1, 1), AdamConfig::new(1e-3, 0.0));
        let q = adam_step(&p, &g, &mut st, "p").unwrap();
        let delta = -q.get(0, 0);
        assert!((delta - 1e-3).abs() <= 1e-3 * 1e-6, "{delta}");
    }

    #[test]
    fn cloned_state_gives_bitwise_identical_update() {
        let p = Matrix::from_rows(&[vec![0.1, 0.2, -0.3]]).unwrap();
        let g = Matrix::from_rows(&[vec![0.5, -0.25, 2.0]]).unwrap();
        let mut st = AdamState::new(p.shape(), AdamConfig::default());
        st.update(&mut p.clone(), &g, "warm").unwrap();
        let mut a = st.clone();
        let mut b = st.clone();
        let pa = adam_step(&p, &g, &mut a, "p").unwrap();
        let pb = adam_step(&p, &g, &mut b, "p").unwrap();
        assert!(pa.bits_eq(&pb));
        assert_eq!(a, b);
    }

    #[test]
    fn decoupled_decay_applied_first() {
        let p = Matrix::new(1, 1, vec![2.0]).unwrap();
        let mut st = AdamState::new((1, 1), AdamConfig::new(0.1, 0.5));
        let q = adam_step(&p, &Matrix::zeros(1, 1), &mut st, "p").unwrap();
        assert_eq!(q.get(0, 0), 2.0 - 0.1 * 0.5 * 2.0);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Matrix::<f64>::zeros(1, 2);
        let g = Matrix::from_fn(1, 2, |_, c| if c == 1 { 1.0 } else { 0.0 }).unwrap();
        let mut st = AdamState::new((1, 2), AdamConfig::default());
        st.update(&mut p, &g, "ok").unwrap();
        // Bypass the constructor check to simulate a corrupted gradient.
        let bad = unchecked_matrix(1, 2, vec![0.0, f64::INFINITY]);
        let err = st.update(&mut p, &bad, "W1.A").unwrap_err();
        assert!(err.to_string().contains("W1.A"), "{err}");
        assert_eq!(st.step_count(), 1);
    }

    fn unchecked_matrix(rows: usize, cols: usize, data: Vec<f64>) -> Matrix<f64> {
        let mut m = Matrix::zeros(rows, cols);
        m.data_mut().copy_from_slice(&data);
        m
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Matrix::<f64>::zeros(2, 2);
        let mut st = AdamState::new((2, 2), AdamConfig::default());
        assert!(st.update(&mut p, &Matrix::zeros(1, 2), "p").is_err());
    }
}
