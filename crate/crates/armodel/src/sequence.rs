use std::ops::Range;

use maskgen_core::vocab::Vocabulary;
use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Positions of the five segments of `[text] <BOI> [image] <BOM> [mask]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceLayout {
    pub text: Range<usize>,
    pub boi_pos: usize,
    pub image: Range<usize>,
    pub bom_pos: usize,
    pub mask: Range<usize>,
    pub total_len: usize,
}

impl SequenceLayout {
    pub fn new(text_len: usize, image_len: usize, mask_len: usize) -> Self {
        let boi_pos = text_len;
        let image = boi_pos + 1..boi_pos + 1 + image_len;
        let bom_pos = image.end;
        let mask = bom_pos + 1..bom_pos + 1 + mask_len;
        Self {
            text: 0..text_len,
            boi_pos,
            image,
            bom_pos,
            total_len: mask.end,
            mask,
        }
    }

    pub fn segment_lengths(&self) -> [usize; 5] {
        [self.text.len(), 1, self.image.len(), 1, self.mask.len()]
    }
}

/// Model input. Token ids are stored for every non-image position; image
/// positions carry a flattened patch instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub layout: SequenceLayout,
    /// `u32::MAX` at image positions.
    pub tokens: Vec<u32>,
    pub patches: Vec<f32>,
    pub patch_dim: usize,
}

pub const IMAGE_SLOT: u32 = u32::MAX;

impl Sequence {
    pub fn len(&self) -> usize {
        self.layout.total_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mask_tokens(&self) -> &[u32] {
        &self.tokens[self.layout.mask.clone()]
    }

    /// Copy with extra mask tokens appended after the current end.
    pub fn with_mask_tokens(&self, extra: &[u32]) -> Sequence {
        let mut s = self.clone();
        s.tokens.extend_from_slice(extra);
        s.layout.mask.end += extra.len();
        s.layout.total_len += extra.len();
        s
    }

    /// The prefix that ends at `<BOM>`.
    pub fn prefix(&self) -> Sequence {
        let mut s = self.clone();
        s.tokens.truncate(self.layout.bom_pos + 1);
        s.layout.mask = s.layout.bom_pos + 1..s.layout.bom_pos + 1;
        s.layout.total_len = self.layout.bom_pos + 1;
        s
    }
}

/// Assembles `[text] <BOI> [image] <BOM> [mask]`. `patches` holds
/// `patches.len() / patch_dim` flattened patches; `mask_tokens` may be empty
/// for an inference prefix.
pub fn build_sequence(
    vocab: &Vocabulary,
    text: &[u32],
    patches: &[f32],
    patch_dim: usize,
    mask_tokens: &[u32],
) -> Result<Sequence, ModelError> {
    if patch_dim == 0 || patches.len() % patch_dim != 0 {
        return Err(ModelError::Input(format!(
            "patch buffer of {} values is not a multiple of patch_dim {patch_dim}",
            patches.len()
        )));
    }
    if let Some((i, &t)) = text.iter().enumerate().find(|(_, &t)| !vocab.is_text(t)) {
        return Err(ModelError::Input(format!("text token {t} at {i} is outside the text range")));
    }
    if let Some((i, &t)) = mask_tokens.iter().enumerate().find(|(_, &t)| !vocab.is_mask(t)) {
        return Err(ModelError::Input(format!(
            "mask token {t} at {i} is outside [0, {})",
            vocab.mask_tokens
        )));
    }
    let n_img = patches.len() / patch_dim;
    let layout = SequenceLayout::new(text.len(), n_img, mask_tokens.len());
    let mut tokens = Vec::with_capacity(layout.total_len);
    tokens.extend_from_slice(text);
    tokens.push(vocab.boi_id());
    tokens.extend(std::iter::repeat(IMAGE_SLOT).take(n_img));
    tokens.push(vocab.bom_id());
    tokens.extend_from_slice(mask_tokens);
    Ok(Sequence {
        layout,
        tokens,
        patches: patches.to_vec(),
        patch_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_arithmetic() {
        let v = Vocabulary::new(8, 5);
        let text = [v.text_base(), v.text_base() + 1];
        let patches = vec![0.0f32; 4 * 3];
        let s = build_sequence(&v, &text, &patches, 3, &[1, 2, 3, 4]).unwrap();
        assert_eq!(s.layout.segment_lengths(), [2, 1, 4, 1, 4]);
        assert_eq!(s.len(), 12);
        assert_eq!(s.tokens[2], v.boi_id());
        assert_eq!(s.tokens[7], v.bom_id());
        assert_eq!(s.mask_tokens(), &[1, 2, 3, 4]);

        let p = build_sequence(&v, &text, &patches, 3, &[]).unwrap();
        assert_eq!(p.len(), p.layout.bom_pos + 1);
        assert_eq!(s.prefix(), p);
        assert_eq!(p.with_mask_tokens(&[1, 2, 3, 4]), s);
    }

    #[test]
    fn rejects_out_of_range_tokens() {
        let v = Vocabulary::new(8, 5);
        assert!(build_sequence(&v, &[], &[0.0; 3], 3, &[8]).is_err());
        assert!(build_sequence(&v, &[3], &[0.0; 3], 3, &[]).is_err());
        assert!(build_sequence(&v, &[], &[0.0; 4], 3, &[]).is_err());
    }
}
