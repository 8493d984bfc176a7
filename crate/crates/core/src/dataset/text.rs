//! Instruction templates and the closed word vocabulary of the synthetic data.

use super::DatasetError;

pub const OBJECT_SLOT: &str = "{object name}";

/// Template 0 is the canonical phrasing; 1–9 are in-repo paraphrases.
pub const TEMPLATES: [&str; 10] = [
    "Produce a segmentation mask for the {object name}.",
    "Segment the {object name}.",
    "Please segment the {object name} in this image.",
    "Generate a mask for the {object name}.",
    "Show the {object name} as a mask.",
    "Create a segmentation mask of the {object name}.",
    "Which pixels belong to the {object name}?",
    "Output the mask for the {object name} in the image.",
    "Find the {object name} and produce its mask.",
    "Highlight the {object name} with a mask.",
];

/// Every word that can appear in a generated instruction. Ids are positions
/// in this list (before the text-base offset).
pub const WORDS: [&str; 39] = [
    // template words
    "produce", "a", "segmentation", "mask", "for", "the", "segment", "please", "in", "this", "image",
    "generate", "show", "as", "create", "of", "which", "pixels", "belong", "to", "output", "find",
    "and", "its", "highlight", "with",
    // attributes
    "leftmost", "rightmost", "largest", "smallest", "topmost", "bottommost",
    // colours
    "red", "green", "blue", "yellow",
    // kinds
    "circle", "rectangle", "triangle",
];

pub fn fill_template(id: usize, object: &str) -> String {
    TEMPLATES[id % TEMPLATES.len()].replacen(OBJECT_SLOT, object, 1)
}

/// Lowercases, turns punctuation into spaces and collapses whitespace.
pub fn normalize(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn word_id(word: &str) -> Option<u32> {
    WORDS.iter().position(|w| *w == word).map(|i| i as u32)
}

/// Word ids offset by `text_base`.
pub fn tokenize_text(s: &str, text_base: u32) -> Result<Vec<u32>, DatasetError> {
    normalize(s)
        .split_whitespace()
        .map(|w| {
            word_id(w)
                .map(|id| id + text_base)
                .ok_or_else(|| DatasetError::OutOfVocabulary(w.to_string()))
        })
        .collect()
}

pub fn detokenize(ids: &[u32], text_base: u32) -> Result<String, DatasetError> {
    let words = ids
        .iter()
        .map(|&id| {
            id.checked_sub(text_base)
                .and_then(|i| WORDS.get(i as usize))
                .copied()
                .ok_or(DatasetError::UnknownTextId(id))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn templates_have_one_slot_and_known_words() {
        assert_eq!(TEMPLATES.len(), 10);
        for t in TEMPLATES {
            assert_eq!(t.matches(OBJECT_SLOT).count(), 1, "{t}");
            let filled = fill_template(0, "red circle");
            assert!(tokenize_text(&filled, 0).is_ok());
            assert!(tokenize_text(&t.replace(OBJECT_SLOT, "leftmost yellow triangle"), 0).is_ok());
        }
        assert!(WORDS.len() <= 64);
        let mut sorted = WORDS.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), WORDS.len());
    }

    #[test]
    fn tokenize_examples() {
        let base = 1026;
        assert_eq!(
            tokenize_text("red circle", base).unwrap(),
            vec![word_id("red").unwrap() + base, word_id("circle").unwrap() + base]
        );
        assert!(tokenize_text("", base).unwrap().is_empty());
        match tokenize_text("red hexagon", base) {
            Err(DatasetError::OutOfVocabulary(w)) => assert_eq!(w, "hexagon"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(detokenize(&[3], base).is_err());
    }

    #[test]
    fn template_zero_is_canonical() {
        assert_eq!(fill_template(0, "red circle"), "Produce a segmentation mask for the red circle.");
        assert_eq!(fill_template(13, "x"), fill_template(3, "x"));
    }

    proptest! {
        #[test]
        fn detokenize_inverts_tokenize(idx in proptest::collection::vec(0usize..WORDS.len(), 0..12), upper in any::<bool>()) {
            let mut s = idx.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join("  ");
            if upper {
                s = s.to_uppercase() + "?";
            }
            let ids = tokenize_text(&s, 1026).unwrap();
            prop_assert_eq!(detokenize(&ids, 1026).unwrap(), normalize(&s));
        }
    }
}
