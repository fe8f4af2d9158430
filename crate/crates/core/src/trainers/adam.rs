use crate::error::{Error, Result};
use crate::model::ParamSet;

/// Bias-corrected Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    first: ParamSet,
    second: ParamSet,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(like: &ParamSet, lr: f64) -> Self {
        Self {
            first: like.zeros_like(),
            second: like.zeros_like(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update and returns the new parameters.
    pub fn step(&mut self, params: &ParamSet, grad: &ParamSet) -> Result<ParamSet> {
        if !params.same_layout(grad) || !params.same_layout(&self.first) {
            return Err(Error::arg("Adam state, parameters and gradient differ in layout"));
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        self.first = self.first.zip_map(grad, |m, g| b1 * m + (1.0 - b1) * g)?;
        self.second = self.second.zip_map(grad, |v, g| b2 * v + (1.0 - b2) * g * g)?;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (lr, eps) = (self.lr, self.eps);
        let update = self
            .first
            .zip_map(&self.second, |m, v| lr * (m / c1) / ((v / c2).sqrt() + eps))?;
        params.sub(&update)
    }
}
