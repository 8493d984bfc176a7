use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Matrices get weight decay and random init; vectors (norm gains, biases) do not.
    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerOffsets {
    pub attn_norm: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ffn_norm: usize,
    pub w_gate: usize,
    pub w_up: usize,
    pub w_down: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Offsets {
    pub tok_emb: usize,
    pub adapt_w1: usize,
    pub adapt_b1: usize,
    pub adapt_w2: usize,
    pub adapt_b2: usize,
    pub layers: Vec<LayerOffsets>,
    pub final_norm: usize,
    pub head: usize,
}

/// All parameters live in one flat buffer; this maps names to slices of it.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    pub(crate) off: Offsets,
    total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.hidden;
        let v = cfg.vocab.size();
        let f = cfg.ffn_hidden;
        let mut entries = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let offset = total;
            total += shape.iter().product::<usize>();
            entries.push(ParamEntry { name, shape, offset });
            offset
        };
        let tok_emb = push("tok_emb".into(), vec![v, d]);
        let adapt_w1 = push("adaptor.w1".into(), vec![cfg.patch_dim, d]);
        let adapt_b1 = push("adaptor.b1".into(), vec![d]);
        let adapt_w2 = push("adaptor.w2".into(), vec![d, d]);
        let adapt_b2 = push("adaptor.b2".into(), vec![d]);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let p = |s: &str| format!("layers.{l}.{s}");
            layers.push(LayerOffsets {
                attn_norm: push(p("attn_norm"), vec![d]),
                wq: push(p("wq"), vec![d, d]),
                wk: push(p("wk"), vec![d, d]),
                wv: push(p("wv"), vec![d, d]),
                wo: push(p("wo"), vec![d, d]),
                ffn_norm: push(p("ffn_norm"), vec![d]),
                w_gate: push(p("w_gate"), vec![d, f]),
                w_up: push(p("w_up"), vec![d, f]),
                w_down: push(p("w_down"), vec![f, d]),
            });
        }
        let final_norm = push("final_norm".into(), vec![d]);
        let head = push("head".into(), vec![d, v]);
        Self {
            entries,
            off: Offsets {
                tok_emb,
                adapt_w1,
                adapt_b1,
                adapt_w2,
                adapt_b2,
                layers,
                final_norm,
                head,
            },
            total,
        }
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}
