use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::gemm;
use super::{Parameter, Tensor};
use crate::error::{EaeError, Result};

/// Fully connected layer, `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Dense {
    /// Kaiming-uniform weights (`bound = sqrt(6 / fan_in)`), zero bias.
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Dense {
            weight: Parameter::new(
                format!("{name}.weight"),
                Tensor::matrix(fan_in, fan_out, w).expect("sized above"),
            ),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(&[1, fan_out])),
        }
    }

    pub fn from_parts(name: &str, weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 || bias.len() != weight.shape()[1] {
            return Err(EaeError::dim(
                "Dense::from_parts",
                format!("bias of length {}", weight.cols()),
                bias.len(),
            ));
        }
        let out = bias.len();
        Ok(Dense {
            weight: Parameter::new(format!("{name}.weight"), weight),
            bias: Parameter::new(format!("{name}.bias"), bias.reshape(vec![1, out])?),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.in_dim() {
            return Err(EaeError::dim("dense", self.in_dim(), x.cols()));
        }
        let (b, i, o) = (x.rows(), self.in_dim(), self.out_dim());
        let mut out = Tensor::zeros(&[b, o]);
        for r in 0..b {
            out.row_mut(r).copy_from_slice(self.bias.value.data());
        }
        gemm(
            b,
            i,
            o,
            1.0,
            x.data(),
            false,
            self.weight.value.data(),
            false,
            1.0,
            out.data_mut(),
        );
        Ok(out)
    }

    /// Accumulates `dL/dW`, `dL/db` and returns `dL/dx`.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (b, i, o) = (x.rows(), self.in_dim(), self.out_dim());
        if grad_out.rows() != b || grad_out.cols() != o {
            return Err(EaeError::dim(
                "dense backward",
                format!("{b}x{o}"),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        gemm(
            i,
            b,
            o,
            1.0,
            x.data(),
            true,
            grad_out.data(),
            false,
            1.0,
            self.weight.grad.data_mut(),
        );
        let gb = self.bias.grad.data_mut();
        for r in grad_out.iter_rows() {
            for (g, v) in gb.iter_mut().zip(r) {
                *g += v;
            }
        }
        let mut gx = Tensor::zeros(&[b, i]);
        gemm(
            b,
            o,
            i,
            1.0,
            grad_out.data(),
            false,
            self.weight.value.data(),
            true,
            0.0,
            gx.data_mut(),
        );
        Ok(gx)
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Subgradient 0 at exactly 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gi, &xi) in g.data_mut().iter_mut().zip(x.data()) {
        if xi <= 0.0 {
            *gi = 0.0;
        }
    }
    g
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(|v| {
        if v >= 0.0 {
            1.0 / (1.0 + (-v).exp())
        } else {
            let e = v.exp();
            e / (1.0 + e)
        }
    })
}

/// Backward in terms of the forward *output* `y`.
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gi, &yi) in g.data_mut().iter_mut().zip(y.data()) {
        *gi *= yi * (1.0 - yi);
    }
    g
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Affine {
    pub gamma: Parameter,
    pub beta: Parameter,
}

/// Batch normalization over the rows of a `batch × d` matrix.
///
/// Training mode normalizes each column with the minibatch mean and biased
/// standard deviation `sqrt(var + epsilon)`; evaluation mode uses the running
/// averages. The first training batch seeds the running statistics, later
/// batches blend in with weight `momentum`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNorm {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
    pub affine: Option<Affine>,
    pub initialized: bool,
}

/// What the backward pass needs from a training forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

impl BatchNorm {
    pub fn new(name: &str, dim: usize, affine: bool, epsilon: f64) -> Self {
        let affine = affine.then(|| Affine {
            gamma: Parameter::new(format!("{name}.gamma"), Tensor::full(&[1, dim], 1.0)),
            beta: Parameter::new(format!("{name}.beta"), Tensor::zeros(&[1, dim])),
        });
        BatchNorm {
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: BN_MOMENTUM,
            epsilon,
            affine,
            initialized: false,
        }
    }

    /// A non-affine layer with preset running statistics.
    pub fn with_running_stats(mean: Vec<f64>, var: Vec<f64>, epsilon: f64) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(EaeError::dim("BatchNorm", mean.len(), var.len()));
        }
        if var.iter().any(|&v| !(v >= 0.0)) || !(epsilon > 0.0) {
            return Err(EaeError::Domain(
                "running variance must be >= 0 and epsilon > 0".into(),
            ));
        }
        Ok(BatchNorm {
            running_mean: mean,
            running_var: var,
            momentum: BN_MOMENTUM,
            epsilon,
            affine: None,
            initialized: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.running_mean.len()
    }

    pub fn train_forward(&mut self, x: &Tensor) -> Result<(Tensor, BnCache)> {
        let (b, d) = (x.rows(), x.cols());
        if d != self.dim() {
            return Err(EaeError::dim("batchnorm", self.dim(), d));
        }
        if b < 2 {
            return Err(EaeError::InvalidBatch(format!(
                "batch normalization needs at least 2 rows, got {b}"
            )));
        }
        let (mean, var) = x.column_moments();
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let mut x_hat = x.clone();
        for r in 0..b {
            for ((v, m), s) in x_hat.row_mut(r).iter_mut().zip(&mean).zip(&inv_std) {
                *v = (*v - m) * s;
            }
        }
        if self.initialized {
            let k = self.momentum;
            for j in 0..d {
                self.running_mean[j] = (1.0 - k) * self.running_mean[j] + k * mean[j];
                self.running_var[j] = (1.0 - k) * self.running_var[j] + k * var[j];
            }
        } else {
            self.running_mean = mean;
            self.running_var = var;
            self.initialized = true;
        }
        let out = self.apply_affine(&x_hat);
        Ok((out, BnCache { x_hat, inv_std }))
    }

    pub fn eval_forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.dim() {
            return Err(EaeError::dim("batchnorm", self.dim(), x.cols()));
        }
        if !self.initialized {
            return Err(EaeError::Uninitialized);
        }
        let inv_std: Vec<f64> = self
            .running_var
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        let mut out = x.clone();
        for r in 0..x.rows() {
            for ((v, m), s) in out
                .row_mut(r)
                .iter_mut()
                .zip(&self.running_mean)
                .zip(&inv_std)
            {
                *v = (*v - m) * s;
            }
        }
        Ok(self.apply_affine(&out))
    }

    fn apply_affine(&self, x_hat: &Tensor) -> Tensor {
        let Some(aff) = &self.affine else {
            return x_hat.clone();
        };
        let mut out = x_hat.clone();
        let (g, bt) = (aff.gamma.value.data(), aff.beta.value.data());
        for r in 0..out.rows() {
            for ((v, gj), bj) in out.row_mut(r).iter_mut().zip(g).zip(bt) {
                *v = *v * gj + bj;
            }
        }
        out
    }

    /// Full backward through the batch mean and variance.
    pub fn backward(&mut self, cache: &BnCache, grad_out: &Tensor) -> Result<Tensor> {
        let x_hat = &cache.x_hat;
        let (b, d) = (x_hat.rows(), x_hat.cols());
        if grad_out.rows() != b || grad_out.cols() != d {
            return Err(EaeError::dim(
                "batchnorm backward",
                format!("{b}x{d}"),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        let mut g_hat = grad_out.clone();
        if let Some(aff) = &mut self.affine {
            let gamma = aff.gamma.value.data().to_vec();
            let gg = aff.gamma.grad.data_mut();
            let gb = aff.beta.grad.data_mut();
            for r in 0..b {
                for j in 0..d {
                    let dy = grad_out.get(r, j);
                    gg[j] += dy * x_hat.get(r, j);
                    gb[j] += dy;
                }
            }
            for r in 0..b {
                for (v, gm) in g_hat.row_mut(r).iter_mut().zip(&gamma) {
                    *v *= gm;
                }
            }
        }
        let mut sum_g = vec![0.0; d];
        let mut sum_gx = vec![0.0; d];
        for r in 0..b {
            for j in 0..d {
                let g = g_hat.get(r, j);
                sum_g[j] += g;
                sum_gx[j] += g * x_hat.get(r, j);
            }
        }
        let n = b as f64;
        let mut gx = g_hat;
        for r in 0..b {
            let xr = x_hat.row(r).to_vec();
            for (j, v) in gx.row_mut(r).iter_mut().enumerate() {
                *v = cache.inv_std[j] * (*v - sum_g[j] / n - xr[j] * sum_gx[j] / n);
            }
        }
        Ok(gx)
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        match &mut self.affine {
            Some(a) => vec![&mut a.gamma, &mut a.beta],
            None => vec![],
        }
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        match &self.affine {
            Some(a) => vec![&a.gamma, &a.beta],
            None => vec![],
        }
    }
}
