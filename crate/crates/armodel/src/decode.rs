use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{ForwardOptions, Model};
use crate::scalar::Scalar;
use crate::sequence::Sequence;
use crate::ModelError;

pub const DEFAULT_BEAM: usize = 3;
pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_TOP_P: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Greedy,
    Beam(usize),
    TopK(usize),
    TopP(f64),
    Random,
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Greedy
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let int = |a: Option<&str>, default: usize| -> Result<usize, String> {
            match a {
                None => Ok(default),
                Some(a) => match a.parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v),
                    _ => Err(format!("{name} needs a positive integer, got {a:?}")),
                },
            }
        };
        match name {
            "greedy" if arg.is_none() => Ok(Strategy::Greedy),
            "random" if arg.is_none() => Ok(Strategy::Random),
            "beam" => Ok(Strategy::Beam(int(arg, DEFAULT_BEAM)?)),
            "topk" => Ok(Strategy::TopK(int(arg, DEFAULT_TOP_K)?)),
            "topp" => {
                let p = match arg {
                    None => DEFAULT_TOP_P,
                    Some(a) => a.parse::<f64>().map_err(|_| format!("topp needs a number, got {a:?}"))?,
                };
                if p > 0.0 && p <= 1.0 {
                    Ok(Strategy::TopP(p))
                } else {
                    Err(format!("topp threshold must lie in (0, 1], got {p}"))
                }
            }
            _ => Err(format!(
                "unknown decoding strategy {s:?} (expected greedy, beam:B, topk:K, topp:P or random)"
            )),
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Greedy => write!(f, "greedy"),
            Strategy::Beam(b) => write!(f, "beam:{b}"),
            Strategy::TopK(k) => write!(f, "topk:{k}"),
            Strategy::TopP(p) => write!(f, "topp:{p}"),
            Strategy::Random => write!(f, "random"),
        }
    }
}

/// Log-probabilities over the mask-token range only.
fn next_log_probs<T: Scalar>(model: &Model<T>, seq: &Sequence) -> Result<Vec<f64>, ModelError> {
    let last = seq.len() - 1;
    let fwd = model.forward_with(
        seq,
        &ForwardOptions {
            logit_rows: Some(last..last + 1),
            ..Default::default()
        },
    )?;
    let k = model.config.vocab.mask_tokens;
    let row: Vec<f64> = fwd.logits[..k].iter().map(|v| v.f64()).collect();
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
    Ok(row.into_iter().map(|v| v - lse).collect())
}

/// Token ids sorted by descending log-prob, ties to the lower id.
fn ranked(lp: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..lp.len()).collect();
    idx.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
    idx
}

fn sample_from(ids: &[usize], lp: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let mx = ids.iter().map(|&i| lp[i]).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ids.iter().map(|&i| (lp[i] - mx).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (&i, &wi) in ids.iter().zip(&w) {
        if u < wi {
            return i as u32;
        }
        u -= wi;
    }
    // rounding left `u` just past the end
    *ids.iter().rev().find(|&&i| lp[i] > f64::NEG_INFINITY).unwrap_or(&ids[0]) as u32
}

fn check_prefix<T: Scalar>(model: &Model<T>, prefix: &Sequence) -> Result<(), ModelError> {
    let bom = model.config.vocab.bom_id();
    if prefix.tokens.last() != Some(&bom) || !prefix.layout.mask.is_empty() || prefix.layout.bom_pos + 1 != prefix.len() {
        return Err(ModelError::Input("decoding prefix must end with <BOM>".into()));
    }
    Ok(())
}

/// Emits exactly `n` mask tokens after a prefix ending at `<BOM>`. Logits
/// are restricted to `[0, K)`; sampling strategies draw from a ChaCha stream
/// seeded with `seed`.
pub fn generate<T: Scalar>(
    model: &Model<T>,
    prefix: &Sequence,
    n: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<u32>, ModelError> {
    check_prefix(model, prefix)?;
    if let Strategy::Beam(b) = strategy {
        return beam_search(model, prefix, n, b.max(1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = prefix.clone();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let lp = next_log_probs(model, &seq)?;
        let tok = match strategy {
            Strategy::Greedy => ranked(&lp)[0] as u32,
            Strategy::TopK(k) => {
                let r = ranked(&lp);
                sample_from(&r[..k.min(r.len())], &lp, &mut rng)
            }
            Strategy::TopP(p) => {
                let r = ranked(&lp);
                let mut mass = 0.0;
                let mut cut = r.len();
                for (i, &id) in r.iter().enumerate() {
                    mass += lp[id].exp();
                    if mass >= p {
                        cut = i + 1;
                        break;
                    }
                }
                sample_from(&r[..cut], &lp, &mut rng)
            }
            Strategy::Random => {
                let all: Vec<usize> = (0..lp.len()).collect();
                sample_from(&all, &lp, &mut rng)
            }
            Strategy::Beam(_) => unreachable!(),
        };
        out.push(tok);
        seq = seq.with_mask_tokens(&[tok]);
    }
    Ok(out)
}

fn beam_order(a: &(Vec<u32>, f64), b: &(Vec<u32>, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Keeps the `width` best partial sequences by summed log-prob; equal scores
/// are ordered lexicographically. No length normalization.
fn beam_search<T: Scalar>(model: &Model<T>, prefix: &Sequence, n: usize, width: usize) -> Result<Vec<u32>, ModelError> {
    let mut beams: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    for _ in 0..n {
        let mut cands = Vec::with_capacity(beams.len() * width);
        for (toks, score) in &beams {
            let lp = next_log_probs(model, &prefix.with_mask_tokens(toks))?;
            for &id in ranked(&lp).iter().take(width) {
                let mut t = toks.clone();
                t.push(id as u32);
                cands.push((t, score + lp[id]));
            }
        }
        cands.sort_by(beam_order);
        cands.truncate(width);
        beams = cands;
    }
    Ok(beams.swap_remove(0).0)
}

/// Decodes independent prefixes in parallel; item `i` uses seed `seed + i`.
pub fn generate_many<T: Scalar>(
    model: &Model<T>,
    prefixes: &[Sequence],
    n: usize,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<Vec<u32>>, ModelError> {
    prefixes
        .par_iter()
        .enumerate()
        .map(|(i, p)| generate(model, p, n, strategy, seed.wrapping_add(i as u64)))
        .collect()
}
