//! The entropic autoencoder: an MLP encoder ending in a batch norm without
//! learned scale or shift, and an MLP decoder. Training minimizes
//! reconstruction error minus `beta` times the nearest-neighbor entropy of
//! the minibatch codes.

mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use train::{train, train_with, EpochRecord, TrainConfig, TrainReport};

use crate::density::LatentDensity;
use crate::entropy::{gaussian_cross_entropy, kl_entropy_k, kl_entropy_with_grad};
use crate::error::{EaeError, Result};
use crate::nn::{mse_loss, BatchNorm, BnCache, Dense, Layer, Mode, Parameter, Sequential, Tensor, BN_EPSILON};

/// Epsilon of the bottleneck normalization. Kept tiny so train-mode codes
/// are standardized to within rounding.
pub const BOTTLENECK_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_widths: Vec<usize>,
    pub output_activation: OutputActivation,
}

impl ArchSpec {
    /// Default MLP stacks (`[512, 256]` / `[256, 512]`) with a sigmoid output.
    pub fn mlp(input_dim: usize, latent_dim: usize) -> Self {
        ArchSpec {
            input_dim,
            encoder_widths: vec![512, 256],
            latent_dim,
            decoder_widths: vec![256, 512],
            output_activation: OutputActivation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 {
            return Err(EaeError::Spec("input_dim and latent_dim must be >= 1".into()));
        }
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return Err(EaeError::Spec("encoder and decoder widths must be nonempty".into()));
        }
        if self.encoder_widths.iter().chain(&self.decoder_widths).any(|&w| w == 0) {
            return Err(EaeError::Spec("layer width 0".into()));
        }
        Ok(())
    }
}

/// Loss terms of one minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `recon − beta · entropy_nats`.
    pub total: f64,
    pub recon: f64,
    pub entropy_nats: f64,
    /// Moment-based cross-entropy of the codes against `N(0, I)`.
    pub cross_entropy_nats: f64,
}

impl LossBreakdown {
    pub fn kl_to_gaussian(&self) -> f64 {
        self.cross_entropy_nats - self.entropy_nats
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EaeModel {
    pub spec: ArchSpec,
    pub seed: u64,
    pub encoder: Sequential,
    pub bottleneck: BatchNorm,
    pub decoder: Sequential,
    #[serde(skip)]
    bottleneck_cache: Option<BnCache>,
}

fn mlp_stack(prefix: &str, dims: &[usize], rng: &mut crate::Rng) -> Vec<Layer> {
    let mut layers = Vec::new();
    for (i, w) in dims.windows(2).enumerate() {
        let name = format!("{prefix}.{i}");
        layers.push(Layer::Dense(Dense::new(&name, w[0], w[1], rng)));
        if i + 2 < dims.len() {
            layers.push(Layer::BatchNorm(BatchNorm::new(&format!("{name}.bn"), w[1], true, BN_EPSILON)));
            layers.push(Layer::Relu);
        }
    }
    layers
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: EaeModel,
}

const CHECKPOINT_FORMAT: &str = "eae-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

impl EaeModel {
    /// Deterministic initialization: the same `(spec, seed)` gives bit-identical
    /// parameters.
    pub fn build(spec: ArchSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = crate::seeded_rng(seed);
        let mut enc_dims = vec![spec.input_dim];
        enc_dims.extend(&spec.encoder_widths);
        enc_dims.push(spec.latent_dim);
        let mut dec_dims = vec![spec.latent_dim];
        dec_dims.extend(&spec.decoder_widths);
        dec_dims.push(spec.input_dim);
        let encoder = Sequential::new(mlp_stack("encoder", &enc_dims, &mut rng));
        let mut dec_layers = mlp_stack("decoder", &dec_dims, &mut rng);
        if spec.output_activation == OutputActivation::Sigmoid {
            dec_layers.push(Layer::Sigmoid);
        }
        Ok(EaeModel {
            bottleneck: BatchNorm::new("bottleneck", spec.latent_dim, false, BOTTLENECK_EPSILON),
            spec,
            seed,
            encoder,
            decoder: Sequential::new(dec_layers),
            bottleneck_cache: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim
    }

    /// Train mode normalizes with batch statistics (and caches for backward);
    /// eval mode uses running statistics.
    pub fn encode(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Eval => self.encode_eval(x),
            Mode::Train => {
                if x.rows() < 2 {
                    return Err(EaeError::InvalidBatch(format!(
                        "training-mode encode needs at least 2 rows, got {}",
                        x.rows()
                    )));
                }
                let h = self.encoder.forward_train(x)?;
                let (z, cache) = self.bottleneck.train_forward(&h)?;
                self.bottleneck_cache = Some(cache);
                Ok(z)
            }
        }
    }

    pub fn encode_eval(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_dim() {
            return Err(EaeError::dim("encode", self.input_dim(), x.cols()));
        }
        let h = self.encoder.forward_eval(x)?;
        self.bottleneck.eval_forward(&h)
    }

    pub fn decode(&mut self, z: &Tensor, mode: Mode) -> Result<Tensor> {
        if z.cols() != self.latent_dim() {
            return Err(EaeError::dim("decode", self.latent_dim(), z.cols()));
        }
        self.decoder.forward(z, mode)
    }

    pub fn decode_eval(&self, z: &Tensor) -> Result<Tensor> {
        if z.cols() != self.latent_dim() {
            return Err(EaeError::dim("decode", self.latent_dim(), z.cols()));
        }
        self.decoder.forward_eval(z)
    }

    pub fn reconstruct_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.decode_eval(&self.encode_eval(x)?)
    }

    /// Train-mode loss without touching gradients. Running statistics are
    /// updated as in any training-mode pass.
    pub fn loss(&mut self, batch: &Tensor, beta: f64) -> Result<LossBreakdown> {
        self.loss_k(batch, beta, 1)
    }

    pub fn loss_k(&mut self, batch: &Tensor, beta: f64, k: usize) -> Result<LossBreakdown> {
        let z = self.encode(batch, Mode::Train)?;
        let x_hat = self.decoder.forward_train(&z)?;
        let (recon, _) = mse_loss(&x_hat, batch)?;
        let est = kl_entropy_k(&z, k)?;
        self.bottleneck_cache = None;
        breakdown(recon, est.value_nats, gaussian_cross_entropy(&z), beta)
    }

    /// One forward/backward pass on `recon − beta · H(z)`; gradients are
    /// accumulated into every parameter.
    pub fn loss_and_grad(&mut self, batch: &Tensor, beta: f64) -> Result<LossBreakdown> {
        self.loss_and_grad_k(batch, beta, 1)
    }

    pub fn loss_and_grad_k(&mut self, batch: &Tensor, beta: f64, k: usize) -> Result<LossBreakdown> {
        let z = self.encode(batch, Mode::Train)?;
        let x_hat = self.decoder.forward_train(&z)?;
        let (recon, g_xhat) = mse_loss(&x_hat, batch)?;
        let (est, g_entropy) = kl_entropy_with_grad(&z, k)?;
        let out = breakdown(recon, est.value_nats, gaussian_cross_entropy(&z), beta)?;

        let mut g_z = self.decoder.backward(&g_xhat)?;
        if beta != 0.0 {
            g_z.axpy(-beta, &g_entropy)?;
        }
        let cache = self
            .bottleneck_cache
            .take()
            .expect("train-mode encode stores the bottleneck cache");
        let g_h = self.bottleneck.backward(&cache, &g_z)?;
        self.encoder.backward(&g_h)?;
        Ok(out)
    }

    /// Seeds every uninitialized batch norm's running statistics from one
    /// training-mode pass over `x`, without changing any parameter. Lets an
    /// untrained model be evaluated.
    pub fn calibrate_batch_norm(&mut self, x: &Tensor) -> Result<()> {
        let z = self.encode(x, Mode::Train)?;
        self.decoder.forward_train(&z)?;
        self.bottleneck_cache = None;
        Ok(())
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut p = self.encoder.parameters_mut();
        p.extend(self.decoder.parameters_mut());
        p
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut p = self.encoder.parameters();
        p.extend(self.decoder.parameters());
        p
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    /// Adds `2λW` to the gradient of every dense weight matrix.
    pub fn add_l2_grad(&mut self, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for seq in [&mut self.encoder, &mut self.decoder] {
            for layer in &mut seq.layers {
                if let Layer::Dense(d) = layer {
                    let w = d.weight.value.clone();
                    d.weight.grad.axpy(2.0 * lambda, &w).expect("same shape");
                }
            }
        }
    }

    /// SHA-256 over parameter values and batch-norm running statistics.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in self.parameters() {
            h.update(p.name.as_bytes());
            for v in p.value.data() {
                h.update(v.to_le_bytes());
            }
        }
        let bns = self
            .encoder
            .batch_norms()
            .chain(std::iter::once(&self.bottleneck))
            .chain(self.decoder.batch_norms());
        for bn in bns {
            for v in bn.running_mean.iter().chain(&bn.running_var) {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Decodes `n` draws from `density` in eval mode.
    pub fn generate(&self, density: &LatentDensity, n: usize, seed: u64) -> Result<Tensor> {
        if density.dim() != self.latent_dim() {
            return Err(EaeError::dim("generate", self.latent_dim(), density.dim()));
        }
        if n == 0 {
            return Ok(Tensor::zeros(&[0, self.input_dim()]));
        }
        let z = density.sample(n, seed)?;
        self.decode_eval(&z)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(s)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(EaeError::Config(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        file.model.spec.validate()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| EaeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| EaeError::io(path, e))?;
        Self::from_json(&s)
    }
}

fn breakdown(recon: f64, entropy: f64, cross: f64, beta: f64) -> Result<LossBreakdown> {
    let total = recon - beta * entropy;
    if !total.is_finite() || !recon.is_finite() {
        return Err(EaeError::Divergence {
            epoch: 0,
            reason: format!("non-finite loss (recon {recon}, entropy {entropy})"),
        });
    }
    Ok(LossBreakdown {
        total,
        recon,
        entropy_nats: entropy,
        cross_entropy_nats: cross,
    })
}
