use std::ops::Range;

use crate::scalar::Scalar;
use crate::sequence::SequenceLayout;
use crate::ModelError;

/// Rows whose logits are supervised: `<BOM>` predicts the first mask token,
/// each mask token predicts the next.
pub fn supervised_rows(layout: &SequenceLayout, n_targets: usize) -> Range<usize> {
    layout.bom_pos..layout.bom_pos + n_targets
}

/// Mean cross-entropy of `targets` under consecutive logit rows, with the
/// gradient w.r.t. those rows.
pub fn cross_entropy<T: Scalar>(logits: &[T], vocab: usize, targets: &[u32]) -> Result<(f64, Vec<T>), ModelError> {
    let n = targets.len();
    if n == 0 || logits.len() != n * vocab {
        return Err(ModelError::Input(format!(
            "{} logits cannot hold {n} rows of {vocab}",
            logits.len()
        )));
    }
    let mut grad = vec![T::zero(); n * vocab];
    let mut total = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for (r, &t) in targets.iter().enumerate() {
        let t = t as usize;
        if t >= vocab {
            return Err(ModelError::Input(format!("target {t} outside vocabulary of {vocab}")));
        }
        let row = &logits[r * vocab..(r + 1) * vocab];
        let mx = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.f64()));
        let sum: f64 = row.iter().map(|v| (v.f64() - mx).exp()).sum();
        let lse = mx + sum.ln();
        total += lse - row[t].f64();
        for (j, g) in grad[r * vocab..(r + 1) * vocab].iter_mut().enumerate() {
            let p = (row[j].f64() - lse).exp();
            let y = if j == t { 1.0 } else { 0.0 };
            *g = T::of((p - y) * inv_n);
        }
    }
    Ok((total * inv_n, grad))
}

/// Loss over full-sequence logits (`len × vocab`); the gradient is exactly
/// zero on every row outside the supervised span.
pub fn mask_loss<T: Scalar>(
    logits: &[T],
    vocab: usize,
    layout: &SequenceLayout,
    targets: &[u32],
) -> Result<(f64, Vec<T>), ModelError> {
    if targets.len() != layout.mask.len() {
        return Err(ModelError::Input(format!(
            "{} targets for a mask span of {}",
            targets.len(),
            layout.mask.len()
        )));
    }
    if logits.len() != layout.total_len * vocab {
        return Err(ModelError::Input("logits do not cover the sequence".into()));
    }
    let rows = supervised_rows(layout, targets.len());
    let (loss, g) = cross_entropy(&logits[rows.start * vocab..rows.end * vocab], vocab, targets)?;
    let mut grad = vec![T::zero(); logits.len()];
    grad[rows.start * vocab..rows.end * vocab].copy_from_slice(&g);
    Ok((loss, grad))
}
