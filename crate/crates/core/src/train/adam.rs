use crate::error::{Result, ShtError};
use crate::tensor::{DenseMatrix, Real};

/// Adam moments and step counter for an ordered list of tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<DenseMatrix<T>>,
    pub v: Vec<DenseMatrix<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(beta1: f64, beta2: f64, eps: f64, params: &[DenseMatrix<T>]) -> Self {
        let zeros = || params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected update of every tensor.
    pub fn update(&mut self, params: &mut [DenseMatrix<T>], grads: &[DenseMatrix<T>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(ShtError::invalid("optimizer state does not match the parameter list"));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let step = T::of(lr / bias1);
        let inv_sqrt_bias2 = T::of(1.0 / bias2.sqrt());
        let eps = T::of(self.eps);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            p.same_shape(g, "adam")?;
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + c1 * gi;
                *vi = b2 * *vi + c2 * gi * gi;
                *x -= step * *mi / (vi.sqrt() * inv_sqrt_bias2 + eps);
            }
        }
        Ok(())
    }
}
