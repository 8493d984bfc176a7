use serde::{Deserialize, Serialize};

/// Joint id space of the autoregressive model.
///
/// `[0, K)` are mask tokens, `K` is `<BOI>`, `K+1` is `<BOM>`, and text ids
/// start at `K+2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub mask_tokens: usize,
    pub text_vocab_size: usize,
}

impl Vocabulary {
    pub fn new(mask_tokens: usize, text_vocab_size: usize) -> Self {
        Self {
            mask_tokens,
            text_vocab_size,
        }
    }

    pub fn boi_id(&self) -> u32 {
        self.mask_tokens as u32
    }

    pub fn bom_id(&self) -> u32 {
        self.mask_tokens as u32 + 1
    }

    pub fn text_base(&self) -> u32 {
        self.mask_tokens as u32 + 2
    }

    pub fn size(&self) -> usize {
        self.mask_tokens + 2 + self.text_vocab_size
    }

    pub fn is_mask(&self, id: u32) -> bool {
        (id as usize) < self.mask_tokens
    }

    pub fn is_text(&self, id: u32) -> bool {
        id >= self.text_base() && (id as usize) < self.size()
    }
}
