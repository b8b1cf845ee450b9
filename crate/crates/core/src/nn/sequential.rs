use serde::{Deserialize, Serialize};

use super::layers::{relu, relu_backward, sigmoid, sigmoid_backward, BatchNorm, BnCache, Dense};
use super::{Parameter, Tensor};
use crate::error::{EaeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone)]
enum Cache {
    Input(Tensor),
    Output(Tensor),
    Bn(BnCache),
}

/// A stack of layers that remembers what it needs for one backward pass.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
    #[serde(skip)]
    cache: Vec<Cache>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential {
            layers,
            cache: Vec::new(),
        }
    }

    /// Training-mode forward; caches activations for [`Sequential::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.cache.clear();
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Dense(d) => {
                    let y = d.forward(&h)?;
                    self.cache.push(Cache::Input(h));
                    y
                }
                Layer::BatchNorm(bn) => {
                    let (y, c) = bn.train_forward(&h)?;
                    self.cache.push(Cache::Bn(c));
                    y
                }
                Layer::Relu => {
                    let y = relu(&h);
                    self.cache.push(Cache::Input(h));
                    y
                }
                Layer::Sigmoid => {
                    let y = sigmoid(&h);
                    self.cache.push(Cache::Output(y.clone()));
                    y
                }
            };
        }
        Ok(h)
    }

    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Dense(d) => d.forward(&h)?,
                Layer::BatchNorm(bn) => bn.eval_forward(&h)?,
                Layer::Relu => relu(&h),
                Layer::Sigmoid => sigmoid(&h),
            };
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Eval => self.forward_eval(x),
        }
    }

    /// Backpropagates through the last training forward pass, accumulating
    /// parameter gradients. Consumes the cache.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        if self.cache.len() != self.layers.len() {
            return Err(EaeError::InvalidBatch(
                "backward called without a matching training forward pass".into(),
            ));
        }
        let cache = std::mem::take(&mut self.cache);
        let mut g = grad_out.clone();
        for (layer, c) in self.layers.iter_mut().zip(cache.iter()).rev() {
            g = match (layer, c) {
                (Layer::Dense(d), Cache::Input(x)) => d.backward(x, &g)?,
                (Layer::BatchNorm(bn), Cache::Bn(c)) => bn.backward(c, &g)?,
                (Layer::Relu, Cache::Input(x)) => relu_backward(x, &g),
                (Layer::Sigmoid, Cache::Output(y)) => sigmoid_backward(y, &g),
                _ => unreachable!("cache built alongside layers"),
            };
        }
        Ok(g)
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(&mut d.weight);
                    out.push(&mut d.bias);
                }
                Layer::BatchNorm(bn) => out.extend(bn.parameters_mut()),
                Layer::Relu | Layer::Sigmoid => {}
            }
        }
        out
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(&d.weight);
                    out.push(&d.bias);
                }
                Layer::BatchNorm(bn) => out.extend(bn.parameters()),
                Layer::Relu | Layer::Sigmoid => {}
            }
        }
        out
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        self.layers.iter().filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }
}
