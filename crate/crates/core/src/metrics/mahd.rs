use serde::{Deserialize, Serialize};

use super::{EvalPair, MetricError};

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahdGroup {
    pub threshold: f64,
    pub count: usize,
    /// Mean AHD of the retained pairs; `None` for an empty group.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahdReport {
    pub groups: Vec<MahdGroup>,
}

impl MahdReport {
    pub fn thresholds(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.threshold).collect()
    }
}

/// Mean AHD of the pairs whose IoU clears each threshold.
///
/// Retention is `iou >= t` by default and `iou > t` with `strict_above`.
/// Pairs without a defined AHD (one side empty) can only clear a threshold
/// `<= 0`; they count toward the group but not toward its mean.
pub fn m_ahd(pairs: &[EvalPair], thresholds: &[f64], strict_above: bool) -> Result<MahdReport, MetricError> {
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) || thresholds.iter().any(|t| !t.is_finite()) {
        return Err(MetricError::Thresholds(thresholds.to_vec()));
    }
    let groups = thresholds
        .iter()
        .map(|&t| {
            let kept = pairs
                .iter()
                .filter(|p| if strict_above { p.iou > t } else { p.iou >= t });
            let mut count = 0;
            let mut sum = 0.0;
            let mut defined = 0;
            for p in kept {
                count += 1;
                if let Some(d) = p.ahd {
                    sum += d;
                    defined += 1;
                }
            }
            MahdGroup {
                threshold: t,
                count,
                mean: (defined > 0).then(|| sum / defined as f64),
            }
        })
        .collect();
    Ok(MahdReport { groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;
    use crate::metrics::EvalOptions;

    fn fake_pair(iou: f64, ahd: f64) -> EvalPair {
        let m = BinaryMask::new(1, 1).unwrap();
        EvalPair {
            pred: m.clone(),
            gt: m,
            intersection: 0,
            union: 0,
            iou,
            ahd: Some(ahd),
        }
    }

    #[test]
    fn grouping_by_threshold() {
        let pairs = [fake_pair(0.55, 1.0), fake_pair(0.65, 2.0), fake_pair(0.95, 4.0)];
        let rep = m_ahd(&pairs, &DEFAULT_THRESHOLDS, false).unwrap();
        let counts: Vec<usize> = rep.groups.iter().map(|g| g.count).collect();
        assert_eq!(counts, vec![3, 2, 1, 1, 1]);
        // direct filtering oracle
        for g in &rep.groups {
            let kept: Vec<f64> = pairs.iter().filter(|p| p.iou >= g.threshold).map(|p| p.ahd.unwrap()).collect();
            assert_eq!(g.mean, Some(kept.iter().sum::<f64>() / kept.len() as f64));
        }
        assert_eq!(rep.groups[0].mean, Some(7.0 / 3.0));
    }

    #[test]
    fn inclusive_vs_strict() {
        let pairs = [fake_pair(0.5, 1.0), fake_pair(0.9, 3.0)];
        let inc = m_ahd(&pairs, &[0.5, 0.9], false).unwrap();
        assert_eq!(inc.groups[0].count, 2);
        assert_eq!(inc.groups[1].count, 1);
        let strict = m_ahd(&pairs, &[0.5, 0.9], true).unwrap();
        assert_eq!(strict.groups[0].count, 1);
        assert_eq!(strict.groups[1].count, 0);
        assert_eq!(strict.groups[1].mean, None);
    }

    #[test]
    fn perfect_pairs_have_zero_mean() {
        let m = BinaryMask::from_fn(8, 8, |r, c| r > 2 && c < 5).unwrap();
        let p = EvalPair::new(m.clone(), m, &EvalOptions::default()).unwrap();
        let rep = m_ahd(&[p.clone(), p], &DEFAULT_THRESHOLDS, false).unwrap();
        assert!(rep.groups.iter().all(|g| g.mean == Some(0.0) && g.count == 2));
    }

    #[test]
    fn thresholds_must_increase() {
        assert!(m_ahd(&[], &[0.5, 0.5], false).is_err());
        assert!(m_ahd(&[], &[0.6, 0.5], false).is_err());
        let rep = m_ahd(&[], &[0.5], false).unwrap();
        assert_eq!(rep.groups[0].mean, None);
    }
}
