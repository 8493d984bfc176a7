use std::io::{self, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::scalar::Scalar;
use crate::sequence::Sequence;
use crate::ModelError;

pub const LOG_EPS: f64 = 1e-8;

/// Head-averaged attention of the mask-token queries over every key.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub layer: usize,
    /// Sequence positions of the query rows.
    pub queries: Range<usize>,
    pub keys: usize,
    /// `queries.len() × keys`, row-major.
    pub weights: Vec<f64>,
}

pub fn attention_map<T: Scalar>(model: &Model<T>, seq: &Sequence, layer: usize) -> Result<AttentionMap, ModelError> {
    let probs = model.attention_probs(seq, layer)?;
    let l = seq.len();
    let queries = seq.layout.mask.clone();
    let weights = probs[queries.start * l..queries.end * l].iter().map(|v| v.f64()).collect();
    Ok(AttentionMap {
        layer,
        queries,
        keys: l,
        weights,
    })
}

impl AttentionMap {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.keys..(i + 1) * self.keys]
    }

    /// `ln(w + ε)` min-max scaled to 0..=255.
    pub fn heatmap(&self) -> Vec<u8> {
        let logs: Vec<f64> = self.weights.iter().map(|w| (w + LOG_EPS).ln()).collect();
        let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        logs.iter()
            .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
            .collect()
    }

    /// 8-bit grayscale PGM of [`heatmap`](Self::heatmap): one row per query.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.keys, self.queries.len())?;
        w.write_all(&self.heatmap())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub trials: usize,
    pub hits: usize,
    pub hit_rate: f64,
    /// Expected hit rate if the aligned key were at a random causal position.
    pub baseline_rate: f64,
    pub permutations: usize,
    pub p_value: f64,
}

/// Checks whether mask query `(i, j)` attends to the key one grid row above,
/// `(i−1, j)`, which sits `grid_w` positions earlier.
///
/// A trial is a hit when that key ranks among the `top` largest weights of
/// the query row. The null replaces the aligned key with a key at a uniformly
/// random causal position in the same row; the p-value is a one-sided Monte
/// Carlo estimate over `permutations` resamplings.
pub fn column_alignment_probe<T: Scalar>(
    model: &Model<T>,
    seqs: &[Sequence],
    grid: (usize, usize),
    layer: usize,
    top: usize,
    permutations: usize,
    seed: u64,
) -> Result<ProbeResult, ModelError> {
    let (gh, gw) = grid;
    // per trial: (hit, indicator of each causal key being in the top set)
    let mut hits = 0usize;
    let mut rows_in_top: Vec<Vec<bool>> = Vec::new();
    for seq in seqs {
        if seq.layout.mask.len() != gh * gw {
            return Err(ModelError::Input(format!(
                "probe needs {} mask tokens, sequence has {}",
                gh * gw,
                seq.layout.mask.len()
            )));
        }
        let map = attention_map(model, seq, layer)?;
        for i in 1..gh {
            for j in 0..gw {
                let qi = i * gw + j;
                let qpos = map.queries.start + qi;
                let kpos = qpos - gw;
                let row = &map.row(qi)[..=qpos];
                let mut order: Vec<usize> = (0..row.len()).collect();
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                let mut in_top = vec![false; row.len()];
                for &k in order.iter().take(top) {
                    in_top[k] = true;
                }
                if in_top[kpos] {
                    hits += 1;
                }
                rows_in_top.push(in_top);
            }
        }
    }
    let trials = rows_in_top.len();
    if trials == 0 {
        return Err(ModelError::Input("probe has no eligible queries".into()));
    }
    let baseline_rate = rows_in_top
        .iter()
        .map(|r| top.min(r.len()) as f64 / r.len() as f64)
        .sum::<f64>()
        / trials as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at_least = 0usize;
    for _ in 0..permutations {
        let null_hits = rows_in_top.iter().filter(|r| r[rng.gen_range(0..r.len())]).count();
        if null_hits >= hits {
            at_least += 1;
        }
    }
    Ok(ProbeResult {
        trials,
        hits,
        hit_rate: hits as f64 / trials as f64,
        baseline_rate,
        permutations,
        p_value: (1 + at_least) as f64 / (1 + permutations) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_scaling() {
        let m = AttentionMap {
            layer: 0,
            queries: 0..2,
            keys: 2,
            weights: vec![1.0, 0.0, 0.5, 0.5],
        };
        let h = m.heatmap();
        assert_eq!(h[0], 255);
        assert_eq!(h[1], 0);
        let expect = (((0.5f64 + LOG_EPS).ln() - LOG_EPS.ln()) / ((1.0 + LOG_EPS).ln() - LOG_EPS.ln()) * 255.0).round() as u8;
        assert_eq!(h[2], expect);
        let mut buf = Vec::new();
        m.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(buf.len(), 11 + 4);
    }
}
