//! Segmentation metrics: IoU, cumulative IoU, class-mean IoU and the
//! contour-fidelity score built from average Hausdorff distance under IoU
//! thresholds.

mod ahd;
mod boundary;
mod mahd;

pub use ahd::{ahd, ahd_with_grid_threshold, directed_mean_distance, GRID_THRESHOLD};
pub use boundary::{boundary, normalize_points, BoundaryPointSet, Connectivity, Point2, NORMALIZED_RESOLUTION};
pub use mahd::{m_ahd, MahdGroup, MahdReport, DEFAULT_THRESHOLDS};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, ImageError};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("cannot aggregate an empty pair list")]
    EmptyInput,
    #[error("average Hausdorff distance is undefined: {0} point set is empty")]
    UndefinedDistance(&'static str),
    #[error("no class has a nonzero union")]
    NoScoredClass,
    #[error("thresholds must be strictly increasing: {0:?}")]
    Thresholds(Vec<f64>),
}

/// Knobs shared by the evaluation entry points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub connectivity: Connectivity,
    /// Keep pairs with `iou > t` instead of `iou >= t`.
    pub strict_above: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            connectivity: Connectivity::Four,
            strict_above: false,
        }
    }
}

/// `|pred ∩ gt| / |pred ∪ gt|`, with two empty masks scoring 1.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    let (i, u) = pred.overlap_counts(gt)?;
    Ok(ratio(i, u))
}

fn ratio(i: u64, u: u64) -> f64 {
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

/// A prediction/ground-truth pair with cached overlap counts and AHD.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub pred: BinaryMask,
    pub gt: BinaryMask,
    pub intersection: u64,
    pub union: u64,
    pub iou: f64,
    /// AHD between boundaries normalized to 256-pixel resolution; `None` when
    /// exactly one mask is empty.
    pub ahd: Option<f64>,
}

impl EvalPair {
    pub fn new(pred: BinaryMask, gt: BinaryMask, opts: &EvalOptions) -> Result<Self, MetricError> {
        let (intersection, union) = pred.overlap_counts(&gt)?;
        let xs = normalize_points(&boundary(&pred, opts.connectivity));
        let ys = normalize_points(&boundary(&gt, opts.connectivity));
        let ahd = match ahd(&xs, &ys) {
            Ok(d) => Some(d),
            Err(MetricError::UndefinedDistance(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            pred,
            gt,
            intersection,
            union,
            iou: ratio(intersection, union),
            ahd,
        })
    }
}

/// Cumulative intersection over cumulative union.
pub fn c_iou(pairs: &[EvalPair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let i: u64 = pairs.iter().map(|p| p.intersection).sum();
    let u: u64 = pairs.iter().map(|p| p.union).sum();
    Ok(ratio(i, u))
}

/// Per-image class → mask map; a missing class is an empty mask.
pub type LabeledMasks = BTreeMap<u32, BinaryMask>;

/// Class-mean IoU with intersections and unions accumulated over the dataset.
pub fn m_iou(pairs: &[(LabeledMasks, LabeledMasks)], classes: &[u32]) -> Result<f64, MetricError> {
    let per_class = class_iou(pairs, classes)?;
    let scored: Vec<f64> = per_class.values().filter_map(|v| *v).collect();
    if scored.is_empty() {
        return Err(MetricError::NoScoredClass);
    }
    Ok(scored.iter().sum::<f64>() / scored.len() as f64)
}

/// Per-class IoU, `None` for classes whose accumulated union is zero.
pub fn class_iou(
    pairs: &[(LabeledMasks, LabeledMasks)],
    classes: &[u32],
) -> Result<BTreeMap<u32, Option<f64>>, MetricError> {
    let mut acc: BTreeMap<u32, (u64, u64)> = classes.iter().map(|&c| (c, (0, 0))).collect();
    for (pred, gt) in pairs {
        for (&class, (inter, union)) in acc.iter_mut() {
            let (i, u) = match (pred.get(&class), gt.get(&class)) {
                (Some(p), Some(g)) => p.overlap_counts(g)?,
                (Some(p), None) => (0, p.count() as u64),
                (None, Some(g)) => (0, g.count() as u64),
                (None, None) => (0, 0),
            };
            *inter += i;
            *union += u;
        }
    }
    Ok(acc
        .into_iter()
        .map(|(c, (i, u))| (c, (u > 0).then(|| i as f64 / u as f64)))
        .collect())
}
