use sha2::{Digest, Sha256};

/// Derives a stage seed from the root seed and a stable stage label, so
/// adding or reordering stages never shifts another stage's randomness.
pub fn split_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}
