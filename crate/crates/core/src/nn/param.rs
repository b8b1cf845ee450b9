use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{EaeError, Result};

/// A trainable tensor with its gradient accumulator and ADAM moments.
///
/// Only `name` and `value` are serialized; gradients and optimizer state are
/// rebuilt as zeros on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "ParameterRepr", into = "ParameterRepr")]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step_count: u64,
}

#[derive(Serialize, Deserialize)]
struct ParameterRepr {
    name: String,
    value: Tensor,
}

impl From<ParameterRepr> for Parameter {
    fn from(r: ParameterRepr) -> Self {
        Parameter::new(r.name, r.value)
    }
}

impl From<Parameter> for ParameterRepr {
    fn from(p: Parameter) -> Self {
        ParameterRepr {
            name: p.name,
            value: p.value,
        }
    }
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let z = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            grad: z.clone(),
            adam_m: z.clone(),
            adam_v: z,
            value,
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// ADAM with per-parameter bias correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// Applies one update to every parameter and zeroes the gradients.
    ///
    /// Gradients are validated before anything is touched, so a non-finite
    /// gradient leaves the whole parameter set unchanged. A parameter whose
    /// gradient is identically zero is skipped (its moments and step count
    /// do not advance).
    pub fn step<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) -> Result<()> {
        let mut params: Vec<&mut Parameter> = params.into_iter().collect();
        if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
            return Err(EaeError::NonFiniteGrad(p.name.clone()));
        }
        for p in params.iter_mut() {
            if p.grad.data().iter().all(|&g| g == 0.0) {
                continue;
            }
            p.step_count += 1;
            let t = p.step_count as i32;
            let bc1 = 1.0 - self.beta1.powi(t);
            let bc2 = 1.0 - self.beta2.powi(t);
            let Parameter {
                value,
                grad,
                adam_m,
                adam_v,
                ..
            } = &mut **p;
            let it = value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(adam_m.data_mut().iter_mut().zip(adam_v.data_mut()));
            for ((w, &g), (m, v)) in it {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
