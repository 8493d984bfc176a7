use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::loss::{cross_entropy, supervised_rows};
use crate::model::{ForwardOptions, Model};
use crate::scalar::Scalar;
use crate::sequence::Sequence;
use crate::ModelError;

/// Loss and parameter gradient of one teacher-forced sequence; the targets
/// are the sequence's own mask tokens.
pub fn sample_loss_grad<T: Scalar>(model: &Model<T>, seq: &Sequence) -> Result<(f64, Vec<T>), ModelError> {
    let targets = seq.mask_tokens();
    if targets.is_empty() {
        return Err(ModelError::Input("training sequence has no mask tokens".into()));
    }
    let rows = supervised_rows(&seq.layout, targets.len());
    let fwd = model.forward_with(
        seq,
        &ForwardOptions {
            logit_rows: Some(rows),
            keep_cache: true,
            ..Default::default()
        },
    )?;
    let (loss, dlogits) = cross_entropy(&fwd.logits, model.config.vocab.size(), targets)?;
    let mut grads = vec![T::zero(); model.params.len()];
    model.backward(seq, &fwd, &dlogits, &mut grads)?;
    Ok((loss, grads))
}

/// Mean loss and gradient over a batch. Per-sample gradients may be computed
/// in parallel but are always summed in batch order.
pub fn batch_loss_grad<T: Scalar>(model: &Model<T>, batch: &[&Sequence]) -> Result<(f64, Vec<T>), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Input("empty batch".into()));
    }
    let per_sample: Vec<Result<(f64, Vec<T>), ModelError>> =
        batch.par_iter().map(|s| sample_loss_grad(model, s)).collect();
    let mut loss = 0.0;
    let mut grad = vec![T::zero(); model.params.len()];
    for r in per_sample {
        let (l, g) = r?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a = *a + b;
        }
    }
    let inv = T::of(1.0 / batch.len() as f64);
    grad.iter_mut().for_each(|g| *g = *g * inv);
    Ok((loss / batch.len() as f64, grad))
}

pub fn steps_per_epoch(n_samples: usize, batch_size: usize) -> usize {
    n_samples.div_ceil(batch_size)
}

pub fn warmup_steps(cfg: &TrainConfig, total_steps: usize) -> usize {
    (cfg.warmup_frac * total_steps as f64).ceil() as usize
}

/// Linear warmup to `cfg.lr`, then cosine decay towards 0. `step` is 0-based.
pub fn lr_at(cfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    let warm = warmup_steps(cfg, total_steps);
    if step < warm {
        return cfg.lr * (step + 1) as f64 / warm as f64;
    }
    let span = (total_steps - warm).max(1) as f64;
    let progress = ((step - warm) as f64 / span).min(1.0);
    cfg.lr * 0.5 * (1.0 + (PI * progress).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One AdamW update with decoupled weight decay on matrices only.
pub fn adamw_step(model: &mut Model<f32>, state: &mut AdamState, grad: &[f32], cfg: &TrainConfig, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    for e in model.layout.entries() {
        let decay = if e.is_matrix() { cfg.weight_decay } else { 0.0 };
        for i in e.range() {
            let g = grad[i];
            let m = b1 * state.m[i] + (1.0 - b1) * g;
            let v = b2 * state.v[i] + (1.0 - b2) * g * g;
            state.m[i] = m;
            state.v[i] = v;
            let mhat = m as f64 / bc1;
            let vhat = v as f64 / bc2;
            let p = model.params[i] as f64;
            let upd = mhat / (vhat.sqrt() + cfg.adam_eps) + decay * p;
            model.params[i] = (p - lr * upd) as f32;
        }
    }
}

/// Scales `grad` in place to global norm `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm(grad: &mut [f32], max_norm: Option<f64>) -> f64 {
    let norm = grad.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
    if let Some(c) = max_norm {
        if norm > c {
            let s = (c / norm) as f32;
            grad.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub step_losses: Vec<f64>,
    pub total_steps: usize,
}

/// Runs `cfg.epochs` epochs over `data`. The sample order of each epoch is a
/// seeded shuffle, so two runs with the same inputs produce identical curves.
///
/// On a non-finite loss or gradient this returns `Diverged` before applying
/// the offending update, leaving `model` and `state` at the last good step.
pub fn train(
    model: &mut Model<f32>,
    state: &mut AdamState,
    cfg: &TrainConfig,
    data: &[Sequence],
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport, ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::Input("training set is empty".into()));
    }
    if state.m.len() != model.params.len() || state.v.len() != model.params.len() {
        return Err(ModelError::Input("optimizer state does not match the model".into()));
    }
    let per_epoch = steps_per_epoch(data.len(), cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut report = TrainReport {
        total_steps: total,
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sequence> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, mut grad) = match batch_loss_grad(model, &batch) {
                Ok(x) => x,
                Err(ModelError::NonFinite { .. }) => return Err(ModelError::Diverged { epoch, step }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
                return Err(ModelError::Diverged { epoch, step });
            }
            clip_grad_norm(&mut grad, cfg.grad_clip);
            lr = lr_at(cfg, step, total);
            adamw_step(model, state, &grad, cfg, lr);
            report.step_losses.push(loss);
            sum += loss * batch.len() as f64;
            step += 1;
        }
        let mean_loss = sum / data.len() as f64;
        report.epoch_losses.push(mean_loss);
        on_epoch(&EpochStats { epoch, mean_loss, lr });
    }
    Ok(report)
}
