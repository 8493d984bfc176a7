//! Patch-based vector-quantized mask codec.
//!
//! A mask is cut into non-overlapping `p×p` patches, each mapped to a
//! `p²`-vector with background at `-1.0` and foreground at `+1.0`. Patches are
//! quantized to the index of the nearest codebook vector (Euclidean, lowest
//! index on ties); decoding looks the vectors back up and thresholds the
//! reassembled real-valued mask at zero.

mod io;
mod kmeans;

pub use io::{read_codebook, write_codebook_binary, write_codebook_text, CodebookFormat, TokenFile};
pub use kmeans::train_codebook;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, ImageError};
use crate::metrics::{self, EvalOptions, EvalPair, MetricError};

pub const DEFAULT_PATCH_SIZE: usize = 16;
pub const DEFAULT_CODEBOOK_SIZE: usize = 1024;
pub const DEFAULT_KMEANS_ITERS: usize = 100;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(
        "mask {height}x{width} is not divisible by patch size {patch}: remainder {rem_h} rows, {rem_w} cols"
    )]
    NotDivisible {
        height: usize,
        width: usize,
        patch: usize,
        rem_h: usize,
        rem_w: usize,
    },
    #[error("patch size must be positive")]
    ZeroPatch,
    #[error("vector dimension mismatch: grid has {grid}, codebook has {codebook}")]
    DimMismatch { grid: usize, codebook: usize },
    #[error("token {token} at ({row}, {col}) is out of range for codebook of size {k}")]
    TokenOutOfRange {
        row: usize,
        col: usize,
        token: u32,
        k: usize,
    },
    #[error("token sequence of length {got} cannot be reshaped to {rows}x{cols}")]
    LengthMismatch { got: usize, rows: usize, cols: usize },
    #[error("need at least {k} distinct training vectors, found {distinct}")]
    TooFewDistinct { k: usize, distinct: usize },
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("reconstruction report needs at least one mask")]
    EmptyInput,
    #[error("codebook parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `rows × cols` patch vectors of dimension `patch_size²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    rows: usize,
    cols: usize,
    patch_size: usize,
    data: Vec<f32>,
}

impl PatchGrid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn dim(&self) -> usize {
        self.patch_size * self.patch_size
    }

    pub fn patch(&self, row: usize, col: usize) -> &[f32] {
        let d = self.dim();
        let start = (row * self.cols + col) * d;
        &self.data[start..start + d]
    }

    /// All patch vectors, row-major, flattened.
    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f32> {
        self.data
    }
}

/// Codebook training provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub iterations: usize,
    pub sample_count: usize,
}

/// `K` lookup vectors of dimension `d_vq`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    vectors: Vec<f32>,
    pub meta: TrainingMeta,
}

impl Codebook {
    pub fn new(k: usize, dim: usize, vectors: Vec<f32>, meta: TrainingMeta) -> Result<Self, CodecError> {
        if k < 2 {
            return Err(CodecError::InvalidCodebook(format!("K must be >= 2, got {k}")));
        }
        if dim == 0 || vectors.len() != k * dim {
            return Err(CodecError::InvalidCodebook(format!(
                "expected {k}x{dim} values, got {}",
                vectors.len()
            )));
        }
        if let Some(i) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(CodecError::InvalidCodebook(format!(
                "non-finite value in vector {}",
                i / dim
            )));
        }
        let cb = Self {
            k,
            dim,
            vectors,
            meta,
        };
        if let Some((a, b)) = cb.first_duplicate() {
            return Err(CodecError::InvalidCodebook(format!(
                "vectors {a} and {b} are identical"
            )));
        }
        Ok(cb)
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, k: usize) -> &[f32] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.vectors
    }

    fn first_duplicate(&self) -> Option<(usize, usize)> {
        let mut seen = std::collections::HashMap::with_capacity(self.k);
        for k in 0..self.k {
            let key: Vec<u32> = self.vector(k).iter().map(|v| v.to_bits()).collect();
            if let Some(&prev) = seen.get(&key) {
                return Some((prev, k));
            }
            seen.insert(key, k);
        }
        None
    }

    /// Index of the nearest vector; lowest index wins ties.
    pub fn nearest(&self, v: &[f32]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..self.k {
            let d = squared_distance(self.vector(k), v);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }
}

/// Exact squared Euclidean distance, accumulated in `f64`.
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// `h × w` codebook indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrid {
    rows: usize,
    cols: usize,
    indices: Vec<u32>,
}

impl TokenGrid {
    pub fn new(rows: usize, cols: usize, indices: Vec<u32>) -> Result<Self, CodecError> {
        unflatten(&indices, rows, cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.indices[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.indices
    }
}

/// Row-major flattening of a token grid.
pub fn flatten(tokens: &TokenGrid) -> Vec<u32> {
    tokens.indices.clone()
}

pub fn unflatten(seq: &[u32], rows: usize, cols: usize) -> Result<TokenGrid, CodecError> {
    if seq.len() != rows * cols {
        return Err(CodecError::LengthMismatch {
            got: seq.len(),
            rows,
            cols,
        });
    }
    Ok(TokenGrid {
        rows,
        cols,
        indices: seq.to_vec(),
    })
}

pub fn patchify(mask: &BinaryMask, patch_size: usize) -> Result<PatchGrid, CodecError> {
    if patch_size == 0 {
        return Err(CodecError::ZeroPatch);
    }
    let (height, width) = mask.dims();
    let (rem_h, rem_w) = (height % patch_size, width % patch_size);
    if rem_h != 0 || rem_w != 0 {
        return Err(CodecError::NotDivisible {
            height,
            width,
            patch: patch_size,
            rem_h,
            rem_w,
        });
    }
    let rows = height / patch_size;
    let cols = width / patch_size;
    let mut data = Vec::with_capacity(height * width);
    for i in 0..rows {
        for j in 0..cols {
            for r in 0..patch_size {
                for c in 0..patch_size {
                    let on = mask.get(i * patch_size + r, j * patch_size + c);
                    data.push(if on { 1.0 } else { -1.0 });
                }
            }
        }
    }
    Ok(PatchGrid {
        rows,
        cols,
        patch_size,
        data,
    })
}

/// Reassembles the patch grid and thresholds at zero (`>= 0` is foreground).
pub fn binarize(grid: &PatchGrid) -> BinaryMask {
    let p = grid.patch_size;
    let height = grid.rows * p;
    let width = grid.cols * p;
    BinaryMask::from_fn(height, width, |r, c| {
        let patch = grid.patch(r / p, c / p);
        patch[(r % p) * p + (c % p)] >= 0.0
    })
    .expect("patch grid has positive dimensions")
}

pub fn quantize(grid: &PatchGrid, codebook: &Codebook) -> Result<TokenGrid, CodecError> {
    if grid.dim() != codebook.dim() {
        return Err(CodecError::DimMismatch {
            grid: grid.dim(),
            codebook: codebook.dim(),
        });
    }
    let indices = grid
        .data
        .chunks_exact(grid.dim())
        .map(|v| codebook.nearest(v) as u32)
        .collect();
    Ok(TokenGrid {
        rows: grid.rows,
        cols: grid.cols,
        indices,
    })
}

pub fn dequantize(tokens: &TokenGrid, codebook: &Codebook, patch_size: usize) -> Result<PatchGrid, CodecError> {
    if patch_size * patch_size != codebook.dim() {
        return Err(CodecError::DimMismatch {
            grid: patch_size * patch_size,
            codebook: codebook.dim(),
        });
    }
    let mut data = Vec::with_capacity(tokens.indices.len() * codebook.dim());
    for (pos, &t) in tokens.indices.iter().enumerate() {
        if t as usize >= codebook.len() {
            return Err(CodecError::TokenOutOfRange {
                row: pos / tokens.cols,
                col: pos % tokens.cols,
                token: t,
                k: codebook.len(),
            });
        }
        data.extend_from_slice(codebook.vector(t as usize));
    }
    Ok(PatchGrid {
        rows: tokens.rows,
        cols: tokens.cols,
        patch_size,
        data,
    })
}

/// Mask → token grid.
pub fn encode(mask: &BinaryMask, codebook: &Codebook, patch_size: usize) -> Result<TokenGrid, CodecError> {
    quantize(&patchify(mask, patch_size)?, codebook)
}

/// Token grid → binary mask.
pub fn decode(tokens: &TokenGrid, codebook: &Codebook, patch_size: usize) -> Result<BinaryMask, CodecError> {
    Ok(binarize(&dequantize(tokens, codebook, patch_size)?))
}

/// Round-trip quality of a codebook over a mask set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// Cumulative IoU of (reconstruction, original) pairs.
    pub total_iou: f64,
    /// Mean AHD in 256-normalized pixels over pairs where it is defined.
    pub mahd: f64,
    pub pairs: usize,
    /// Pairs skipped in `mahd` because exactly one side was empty.
    pub undefined_ahd: usize,
}

pub fn reconstruction_report(
    masks: &[BinaryMask],
    codebook: &Codebook,
    patch_size: usize,
) -> Result<ReconstructionReport, CodecError> {
    if masks.is_empty() {
        return Err(CodecError::EmptyInput);
    }
    let opts = EvalOptions::default();
    let mut pairs = Vec::with_capacity(masks.len());
    for m in masks {
        let recon = decode(&encode(m, codebook, patch_size)?, codebook, patch_size)?;
        pairs.push(EvalPair::new(recon, m.clone(), &opts)?);
    }
    let total_iou = metrics::c_iou(&pairs)?;
    let defined: Vec<f64> = pairs.iter().filter_map(|p| p.ahd).collect();
    let mahd = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(ReconstructionReport {
        total_iou,
        mahd,
        pairs: pairs.len(),
        undefined_ahd: pairs.len() - defined.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_vector_codebook(dim: usize) -> Codebook {
        let mut v = vec![-1.0; dim];
        v.extend(std::iter::repeat(1.0).take(dim));
        Codebook::new(2, dim, v, TrainingMeta::default()).unwrap()
    }

    #[test]
    fn patchify_full_and_empty() {
        let full = BinaryMask::full(16, 16).unwrap();
        let g = patchify(&full, 16).unwrap();
        assert_eq!((g.rows(), g.cols(), g.dim()), (1, 1, 256));
        assert!(g.as_flat().iter().all(|&v| v == 1.0));

        let empty = BinaryMask::new(32, 32).unwrap();
        let g = patchify(&empty, 16).unwrap();
        assert_eq!((g.rows(), g.cols()), (2, 2));
        assert!(g.as_flat().iter().all(|&v| v == -1.0));
    }

    #[test]
    fn patchify_index_arithmetic() {
        // flatten(r, c) = r * 16 + c
        for &(r, c) in &[(0usize, 0usize), (3, 7), (15, 15), (9, 0)] {
            let mut m = BinaryMask::new(32, 32).unwrap();
            m.set(16 + r, c, true);
            let g = patchify(&m, 16).unwrap();
            let patch = g.patch(1, 0);
            for (i, &v) in patch.iter().enumerate() {
                assert_eq!(v, if i == r * 16 + c { 1.0 } else { -1.0 });
            }
            assert!(g.patch(0, 0).iter().all(|&v| v == -1.0));
        }
    }

    #[test]
    fn patchify_reports_remainder() {
        let m = BinaryMask::new(20, 33).unwrap();
        match patchify(&m, 16) {
            Err(CodecError::NotDivisible { rem_h, rem_w, .. }) => assert_eq!((rem_h, rem_w), (4, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quantize_tie_breaks_low() {
        let cb = two_vector_codebook(256);
        let full = patchify(&BinaryMask::full(16, 16).unwrap(), 16).unwrap();
        assert_eq!(quantize(&full, &cb).unwrap().as_slice(), &[1]);

        let half = BinaryMask::from_fn(16, 16, |r, _| r < 8).unwrap();
        let g = patchify(&half, 16).unwrap();
        assert_eq!(quantize(&g, &cb).unwrap().as_slice(), &[0]);
    }

    #[test]
    fn quantize_rejects_dim_mismatch() {
        let cb = two_vector_codebook(64);
        let g = patchify(&BinaryMask::new(16, 16).unwrap(), 16).unwrap();
        assert!(matches!(quantize(&g, &cb), Err(CodecError::DimMismatch { .. })));
    }

    #[test]
    fn dequantize_lookup_and_range_check() {
        let cb = two_vector_codebook(256);
        let zeros = TokenGrid::new(2, 3, vec![0; 6]).unwrap();
        let g = dequantize(&zeros, &cb, 16).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(g.patch(i, j), cb.vector(0));
            }
        }
        let bad = TokenGrid::new(2, 2, vec![0, 1, 1, 7]).unwrap();
        match dequantize(&bad, &cb, 16) {
            Err(CodecError::TokenOutOfRange { row, col, token, .. }) => {
                assert_eq!((row, col, token), (1, 1, 7))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn codebook_member_is_fixed_point() {
        let cb = two_vector_codebook(256);
        for k in 0..2 {
            let grid = PatchGrid {
                rows: 1,
                cols: 1,
                patch_size: 16,
                data: cb.vector(k).to_vec(),
            };
            let t = quantize(&grid, &cb).unwrap();
            assert_eq!(dequantize(&t, &cb, 16).unwrap(), grid);
        }
    }

    #[test]
    fn binarize_threshold_is_inclusive_at_zero() {
        let grid = PatchGrid {
            rows: 1,
            cols: 1,
            patch_size: 2,
            data: vec![0.0, -0.3, 0.2, -0.0],
        };
        let m = binarize(&grid);
        assert_eq!(m.pixels(), &[1, 0, 1, 1]);
    }

    #[test]
    fn flatten_examples() {
        let g = TokenGrid::new(2, 2, vec![10, 11, 12, 13]).unwrap();
        assert_eq!(g.get(0, 1), 11);
        assert_eq!(g.get(1, 0), 12);
        assert_eq!(flatten(&g), vec![10, 11, 12, 13]);
        assert!(matches!(unflatten(&[1, 2, 3], 2, 2), Err(CodecError::LengthMismatch { .. })));
    }

    #[test]
    fn codebook_rejects_duplicates_and_small_k() {
        assert!(Codebook::new(1, 2, vec![0.0, 1.0], TrainingMeta::default()).is_err());
        assert!(Codebook::new(2, 2, vec![0.5, 1.0, 0.5, 1.0], TrainingMeta::default()).is_err());
        assert!(Codebook::new(2, 1, vec![0.5, f32::NAN], TrainingMeta::default()).is_err());
    }

    #[test]
    fn report_exact_reconstruction() {
        let cb = two_vector_codebook(256);
        let m = BinaryMask::from_fn(32, 32, |r, c| r < 16 && c >= 16).unwrap();
        let rep = reconstruction_report(&[m.clone(), m], &cb, 16).unwrap();
        assert_eq!(rep.total_iou, 1.0);
        assert_eq!(rep.mahd, 0.0);
        assert!(reconstruction_report(&[], &cb, 16).is_err());
    }

    #[test]
    fn report_single_pair_matches_metrics() {
        let cb = two_vector_codebook(256);
        // an L-shaped corner that the two-vector codebook cannot represent
        let m = BinaryMask::from_fn(32, 32, |r, c| r < 20 && c < 20).unwrap();
        let recon = decode(&encode(&m, &cb, 16).unwrap(), &cb, 16).unwrap();
        let pair = EvalPair::new(recon, m.clone(), &EvalOptions::default()).unwrap();
        let rep = reconstruction_report(&[m], &cb, 16).unwrap();
        assert_eq!(rep.total_iou, pair.iou);
        assert_eq!(rep.mahd, pair.ahd.unwrap());
    }

    proptest! {
        #[test]
        fn binarize_inverts_patchify(bits in proptest::collection::vec(any::<bool>(), 32 * 48)) {
            let m = BinaryMask::from_fn(32, 48, |r, c| bits[r * 48 + c]).unwrap();
            prop_assert_eq!(binarize(&patchify(&m, 16).unwrap()), m);
        }

        #[test]
        fn flatten_round_trips(cells in proptest::collection::vec(0u32..1024, 16)) {
            let g = unflatten(&cells, 4, 4).unwrap();
            prop_assert_eq!(unflatten(&flatten(&g), 4, 4).unwrap(), g.clone());
            prop_assert_eq!(flatten(&g), cells);
        }
    }
}
