use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::EaeModel;
use crate::data::BatchIterator;
use crate::error::{EaeError, Result};
use crate::nn::{Adam, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the entropy term.
    pub beta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub weight_decay_l2: f64,
    /// Seeds the minibatch shuffles.
    pub seed: u64,
    /// Neighbor order of the entropy estimate.
    pub entropy_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 1.0,
            batch_size: 100,
            epochs: 10,
            lr: 1e-3,
            lr_decay: 0.98,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            weight_decay_l2: 0.0,
            seed: 0,
            entropy_k: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EaeError::Config(m.to_string()));
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad("beta must be finite and >= 0");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be >= 2");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be > 0");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps > 0");
        }
        if !(self.weight_decay_l2 >= 0.0) {
            return bad("weight_decay_l2 must be >= 0");
        }
        if self.entropy_k == 0 || self.entropy_k >= self.batch_size {
            return bad("entropy_k must lie in [1, batch_size)");
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch.saturating_sub(1) as i32)
    }
}

/// Batch averages over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub steps: usize,
    pub recon: f64,
    pub entropy_nats: f64,
    pub total: f64,
    pub kl_to_gaussian: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub total_steps: usize,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

pub fn train(model: &mut EaeModel, data: &Tensor, config: &TrainConfig) -> Result<TrainReport> {
    train_with(model, data, config, |_, _| Ok(()))
}

/// Shuffled-minibatch ADAM with per-epoch learning-rate decay. `on_epoch`
/// runs after every completed epoch.
pub fn train_with(
    model: &mut EaeModel,
    data: &Tensor,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EaeModel, &EpochRecord) -> Result<()>,
) -> Result<TrainReport> {
    config.validate()?;
    if data.cols() != model.input_dim() {
        return Err(EaeError::dim("train", model.input_dim(), data.cols()));
    }
    let mut batches = BatchIterator::new(data.rows(), config.batch_size, config.seed)?;
    let mut report = TrainReport::default();
    model.zero_grad();
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let adam = Adam {
            lr: config.lr_at(epoch),
            beta1: config.adam_betas.0,
            beta2: config.adam_betas.1,
            eps: config.adam_eps,
        };
        let diverged = |reason: String| EaeError::Divergence { epoch, reason };
        let (mut recon, mut entropy, mut total, mut kl) = (0.0, 0.0, 0.0, 0.0);
        let mut steps = 0;
        for batch in batches.batches(data) {
            let l = model
                .loss_and_grad_k(&batch, config.beta, config.entropy_k)
                .map_err(|e| match e {
                    EaeError::Divergence { reason, .. } => diverged(reason),
                    other => other,
                })?;
            model.add_l2_grad(config.weight_decay_l2);
            adam.step(model.parameters_mut()).map_err(|e| match e {
                EaeError::NonFiniteGrad(p) => diverged(format!("non-finite gradient in `{p}`")),
                other => other,
            })?;
            recon += l.recon;
            entropy += l.entropy_nats;
            total += l.total;
            kl += l.kl_to_gaussian();
            steps += 1;
        }
        let s = steps as f64;
        let rec = EpochRecord {
            epoch,
            lr: adam.lr,
            steps,
            recon: recon / s,
            entropy_nats: entropy / s,
            total: total / s,
            kl_to_gaussian: kl / s,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: recon {:.5} entropy {:.4} kl {:.4} ({:.1}s)",
            rec.recon, rec.entropy_nats, rec.kl_to_gaussian, rec.wall_time_s
        );
        report.total_steps += steps;
        on_epoch(model, &rec)?;
        report.epochs.push(rec);
    }
    Ok(report)
}
