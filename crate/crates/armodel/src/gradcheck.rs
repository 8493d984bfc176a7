use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::sequence::Sequence;
use crate::train::batch_loss_grad;
use crate::ModelError;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor so that near-zero gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares `analytic` with central differences of `loss` on up to `count`
/// randomly chosen coordinates.
pub fn grad_check(
    params: &[f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
    count: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, params.len(), count.min(params.len())).into_vec();
    let mut p = params.to_vec();
    let mut worst = (0.0, 0);
    for &i in &idx {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss(&p);
        p[i] = orig - h;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let e = relative_error(analytic[i], numeric);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    GradCheckReport {
        checked: idx.len(),
        max_rel_error: worst.0,
        worst_index: worst.1,
    }
}

/// Double-precision check of the transformer's backward pass on a tiny batch.
pub fn model_grad_check(model: &Model<f64>, batch: &[Sequence], count: usize, seed: u64) -> Result<GradCheckReport, ModelError> {
    let refs: Vec<&Sequence> = batch.iter().collect();
    let (_, analytic) = batch_loss_grad(model, &refs)?;
    let mut probe = model.clone();
    let mut failure = None;
    let report = grad_check(
        &model.params,
        &analytic,
        |p| {
            probe.params.copy_from_slice(p);
            match batch_loss_grad(&probe, &refs) {
                Ok((l, _)) => l,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        count,
        DEFAULT_STEP,
        seed,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Least-squares linear map `y = W x`, loss `1/(2N) Σ ‖W xₙ − tₙ‖²`.
/// Its loss is exactly quadratic, so central differences are exact up to
/// rounding.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub inputs: usize,
    pub outputs: usize,
    pub xs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl LinearProbe {
    pub fn loss(&self, w: &[f64]) -> f64 {
        let mut total = 0.0;
        for (x, t) in self.xs.iter().zip(&self.targets) {
            for o in 0..self.outputs {
                let y: f64 = (0..self.inputs).map(|i| w[o * self.inputs + i] * x[i]).sum();
                total += 0.5 * (y - t[o]).powi(2);
            }
        }
        total / self.xs.len() as f64
    }

    pub fn grad(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        let n = self.xs.len() as f64;
        for (x, t) in self.xs.iter().zip(&self.targets) {
            for o in 0..self.outputs {
                let y: f64 = (0..self.inputs).map(|i| w[o * self.inputs + i] * x[i]).sum();
                for i in 0..self.inputs {
                    g[o * self.inputs + i] += (y - t[o]) * x[i] / n;
                }
            }
        }
        g
    }
}
