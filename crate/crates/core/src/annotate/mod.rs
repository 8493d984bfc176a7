//! Label/mask matching with the fixed three-step filter chain, semantic
//! merging, and the referring-expression protocol driven through a
//! replayable caption client.

mod client;
mod referring;
mod render;

pub use client::{
    CaptionClient, CaptionRequest, ClientError, PromptStyle, RecordingClient, ReplayClient, RequestKind,
    StubClient, TranscriptEntry, VerifyPolicy,
};
pub use referring::{run_referring_pipeline, TextConfig, TextOutcome};
pub use render::{dilate_disc, render_contour, DEFAULT_DILATION, GENERATE_COLOR, VERIFY_COLOR};

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{BinaryMask, ImageError};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("instance {0} has no mask")]
    MissingMask(String),
}

/// Axis-aligned box `(x_min, y_min, x_max, y_max)` in continuous pixel
/// coordinates; pixel `(r, c)` spans `[c, c+1) × [r, r+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(v: [f64; 4]) -> Self {
        Self {
            x0: v[0],
            y0: v[1],
            x1: v[2],
            y1: v[3],
        }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BoundingBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn within(&self, height: usize, width: usize) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= width as f64 && self.y1 <= height as f64
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn intersection(&self, o: &Self) -> f64 {
        let w = self.x1.min(o.x1) - self.x0.max(o.x0);
        let h = self.y1.min(o.y1) - self.y0.max(o.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, o: &Self) -> f64 {
        let i = self.intersection(o);
        let u = self.area() + o.area() - i;
        if u <= 0.0 {
            0.0
        } else {
            i / u
        }
    }

    /// True if `self` lies entirely inside `o`.
    pub fn enclosed_by(&self, o: &Self) -> bool {
        self.x0 >= o.x0 && self.y0 >= o.y0 && self.x1 <= o.x1 && self.y1 <= o.y1
    }

    /// Tight box of a mask's foreground.
    pub fn of_mask(mask: &BinaryMask) -> Option<Self> {
        mask.bbox()
            .map(|(r0, c0, r1, c1)| Self::new(c0 as f64, r0 as f64, (c1 + 1) as f64, (r1 + 1) as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDetection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// One line of the detections JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image: String,
    #[serde(flatten)]
    pub detection: LabeledDetection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskCandidate {
    pub mask_id: String,
    pub mask: BinaryMask,
    pub bbox: Option<BoundingBox>,
}

impl MaskCandidate {
    pub fn new(mask_id: impl Into<String>, mask: BinaryMask) -> Self {
        let bbox = BoundingBox::of_mask(&mask);
        Self {
            mask_id: mask_id.into(),
            mask,
            bbox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Instance,
    Semantic,
    Referring,
    Reasoning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedInstance {
    pub image: String,
    pub mask_id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    pub kind: InstanceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    InvalidBox,
    Overpopulated,
    Nested,
    NoCandidates,
    Unmatched,
    LowConfidence,
    LowIou,
    ClientFailure,
    AppliesToSibling,
}

/// Side-channel record of something the pipeline dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub image: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_id: Option<String>,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NestedRule {
    /// Full enclosure, box IoU above the threshold, strictly smaller area.
    #[default]
    Literal,
    /// Intersection over the smaller box's area above the threshold.
    IntersectionOverSmaller,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub max_boxes: usize,
    pub nested_iou: f64,
    pub nested_rule: NestedRule,
    pub min_confidence: f64,
    pub multi_min_iou: f64,
    pub single_min_iou: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_boxes: 4,
            nested_iou: 0.97,
            nested_rule: NestedRule::Literal,
            min_confidence: 0.3,
            multi_min_iou: 0.9,
            single_min_iou: 0.85,
        }
    }
}

pub type LabelGroups = BTreeMap<String, Vec<LabeledDetection>>;

/// Partitions detections by label, keeping input order within each label.
pub fn group_by_label(dets: &[LabeledDetection]) -> LabelGroups {
    let mut groups = LabelGroups::new();
    for d in dets {
        groups.entry(d.label.clone()).or_default().push(d.clone());
    }
    groups
}

/// Drops labels with more than `max_boxes` detections; returns the dropped labels.
pub fn filter_overpopulated(groups: LabelGroups, max_boxes: usize) -> (LabelGroups, Vec<(String, usize)>) {
    let mut kept = LabelGroups::new();
    let mut dropped = Vec::new();
    for (label, dets) in groups {
        if dets.len() > max_boxes {
            dropped.push((label, dets.len()));
        } else {
            kept.insert(label, dets);
        }
    }
    (kept, dropped)
}

/// Removes boxes nested in a larger same-label box. Removals are decided
/// against the original group and applied together.
pub fn filter_nested(group: &[LabeledDetection], cfg: &FilterConfig) -> (Vec<LabeledDetection>, Vec<LabeledDetection>) {
    let nested = |a: &BoundingBox, b: &BoundingBox| match cfg.nested_rule {
        NestedRule::Literal => a.enclosed_by(b) && a.iou(b) > cfg.nested_iou && a.area() < b.area(),
        NestedRule::IntersectionOverSmaller => {
            a.area() < b.area() && a.area() > 0.0 && a.intersection(b) / a.area() > cfg.nested_iou
        }
    };
    let remove: Vec<bool> = group
        .iter()
        .enumerate()
        .map(|(i, a)| {
            group
                .iter()
                .enumerate()
                .any(|(j, b)| i != j && nested(&a.bbox, &b.bbox))
        })
        .collect();
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for (d, r) in group.iter().zip(remove) {
        if r {
            removed.push(d.clone());
        } else {
            kept.push(d.clone());
        }
    }
    (kept, removed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMatch {
    pub detection: LabeledDetection,
    pub mask_id: String,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRejection {
    pub reason: RejectReason,
    pub detail: String,
}

/// One-to-one greedy matching by descending box IoU, then the confidence and
/// IoU gates. Any failing box rejects the whole label.
pub fn match_masks(
    group: &[LabeledDetection],
    candidates: &[MaskCandidate],
    cfg: &FilterConfig,
) -> Result<Vec<BoxMatch>, MatchRejection> {
    let usable: Vec<(usize, BoundingBox)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.bbox.map(|b| (i, b)))
        .collect();
    if usable.is_empty() {
        return Err(MatchRejection {
            reason: RejectReason::NoCandidates,
            detail: "no nonempty mask candidates".into(),
        });
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(group.len() * usable.len());
    for (bi, d) in group.iter().enumerate() {
        for &(ci, cb) in &usable {
            pairs.push((d.bbox.iou(&cb), bi, ci));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut box_match: Vec<Option<(usize, f64)>> = vec![None; group.len()];
    let mut taken = HashSet::new();
    for (iou, bi, ci) in pairs {
        if box_match[bi].is_none() && !taken.contains(&ci) {
            box_match[bi] = Some((ci, iou));
            taken.insert(ci);
        }
    }
    let mut matches = Vec::with_capacity(group.len());
    for (d, m) in group.iter().zip(box_match) {
        let Some((ci, iou)) = m else {
            return Err(MatchRejection {
                reason: RejectReason::Unmatched,
                detail: format!("{} boxes but only {} candidates", group.len(), usable.len()),
            });
        };
        matches.push(BoxMatch {
            detection: d.clone(),
            mask_id: candidates[ci].mask_id.clone(),
            iou,
        });
    }

    let min_conf = matches.iter().map(|m| m.detection.confidence).fold(f64::INFINITY, f64::min);
    let min_iou = matches.iter().map(|m| m.iou).fold(f64::INFINITY, f64::min);
    let iou_gate = if matches.len() > 1 {
        cfg.multi_min_iou
    } else {
        cfg.single_min_iou
    };
    if !(min_conf > cfg.min_confidence) {
        return Err(MatchRejection {
            reason: RejectReason::LowConfidence,
            detail: format!("min confidence {min_conf} <= {}", cfg.min_confidence),
        });
    }
    if !(min_iou > iou_gate) {
        return Err(MatchRejection {
            reason: RejectReason::LowIou,
            detail: format!("min IoU {min_iou:.4} <= {iou_gate}"),
        });
    }
    Ok(matches)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelOutcome {
    pub instances: Vec<AnnotatedInstance>,
    /// Detections that produced an instance; feeding them back reproduces the outcome.
    pub accepted: Vec<LabeledDetection>,
    pub rejections: Vec<Rejection>,
}

/// Steps 1 → 2 → 3 for one image.
pub fn run_label_pipeline(
    image: &str,
    image_dims: (usize, usize),
    dets: &[LabeledDetection],
    candidates: &[MaskCandidate],
    cfg: &FilterConfig,
) -> LabelOutcome {
    let mut out = LabelOutcome::default();
    let reject = |label: &str, mask_id: Option<String>, reason, detail: String| Rejection {
        image: image.to_string(),
        label: label.to_string(),
        mask_id,
        reason,
        detail,
    };
    let mut valid = Vec::with_capacity(dets.len());
    for d in dets {
        if d.bbox.is_valid() && d.bbox.within(image_dims.0, image_dims.1) {
            valid.push(d.clone());
        } else {
            out.rejections.push(reject(
                &d.label,
                None,
                RejectReason::InvalidBox,
                format!("box {:?} outside {}x{}", <[f64; 4]>::from(d.bbox), image_dims.0, image_dims.1),
            ));
        }
    }

    let (groups, dropped) = filter_overpopulated(group_by_label(&valid), cfg.max_boxes);
    for (label, n) in dropped {
        out.rejections.push(reject(
            &label,
            None,
            RejectReason::Overpopulated,
            format!("{n} boxes > {}", cfg.max_boxes),
        ));
    }
    for (label, group) in groups {
        let (kept, removed) = filter_nested(&group, cfg);
        for d in removed {
            out.rejections.push(reject(
                &label,
                None,
                RejectReason::Nested,
                format!("box {:?} nested in a larger box", <[f64; 4]>::from(d.bbox)),
            ));
        }
        match match_masks(&kept, candidates, cfg) {
            Ok(matches) => {
                for m in matches {
                    out.instances.push(AnnotatedInstance {
                        image: image.to_string(),
                        mask_id: m.mask_id,
                        label: label.clone(),
                        expression: None,
                        kind: InstanceKind::Instance,
                    });
                    out.accepted.push(m.detection);
                }
            }
            Err(r) => out.rejections.push(reject(&label, None, r.reason, r.detail)),
        }
    }
    out
}

/// Output of [`merge_semantic`]: all input records plus one semantic record
/// per label, and the union masks keyed by the semantic record's `mask_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutput {
    pub records: Vec<AnnotatedInstance>,
    pub semantic_masks: BTreeMap<String, BinaryMask>,
}

pub fn semantic_mask_id(label: &str) -> String {
    format!("semantic:{label}")
}

/// Pixelwise union of same-label instance masks within one image.
pub fn merge_semantic(instances: &[(AnnotatedInstance, &BinaryMask)]) -> Result<MergeOutput, AnnotateError> {
    let mut unions: BTreeMap<(String, String), BinaryMask> = BTreeMap::new();
    let mut dims: Option<&BinaryMask> = None;
    for (inst, mask) in instances {
        if let Some(first) = dims {
            first.check_same_dims(mask)?;
        }
        dims = Some(mask);
        match unions.get_mut(&(inst.image.clone(), inst.label.clone())) {
            Some(u) => u.union_with(mask)?,
            None => {
                unions.insert((inst.image.clone(), inst.label.clone()), (*mask).clone());
            }
        }
    }
    let mut records: Vec<AnnotatedInstance> = instances.iter().map(|(i, _)| i.clone()).collect();
    let mut semantic_masks = BTreeMap::new();
    for ((image, label), mask) in unions {
        let id = semantic_mask_id(&label);
        records.push(AnnotatedInstance {
            image,
            mask_id: id.clone(),
            label,
            expression: None,
            kind: InstanceKind::Semantic,
        });
        semantic_masks.insert(id, mask);
    }
    Ok(MergeOutput {
        records,
        semantic_masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(label: &str, b: [f64; 4], conf: f64) -> LabeledDetection {
        LabeledDetection {
            label: label.into(),
            bbox: b.into(),
            confidence: conf,
        }
    }

    fn rect_mask(b: [usize; 4]) -> BinaryMask {
        BinaryMask::from_fn(100, 100, |r, c| c >= b[0] && c < b[2] && r >= b[1] && r < b[3]).unwrap()
    }

    #[test]
    fn grouping_preserves_order_and_duplicates() {
        let d = [det("a", [0., 0., 1., 1.], 0.5), det("b", [1., 1., 2., 2.], 0.5), det("a", [0., 0., 1., 1.], 0.5)];
        let g = group_by_label(&d);
        assert_eq!(g["a"].len(), 2);
        assert_eq!(g["b"].len(), 1);
        assert_eq!(g["a"][0], g["a"][1]);
        assert!(group_by_label(&[]).is_empty());
    }

    #[test]
    fn overpopulated_boundary() {
        let mut g = LabelGroups::new();
        g.insert("five".into(), vec![det("five", [0., 0., 1., 1.], 0.9); 5]);
        g.insert("four".into(), vec![det("four", [0., 0., 1., 1.], 0.9); 4]);
        g.insert("one".into(), vec![det("one", [0., 0., 1., 1.], 0.9)]);
        let before = g.clone();
        let (kept, dropped) = filter_overpopulated(g, 4);
        assert_eq!(dropped, vec![("five".to_string(), 5)]);
        assert_eq!(kept["four"], before["four"]);
        assert_eq!(kept["one"], before["one"]);
    }

    #[test]
    fn nested_rule_as_written() {
        let cfg = FilterConfig::default();
        // shifted copies, IoU = 50/150
        let g = [det("x", [0., 0., 10., 10.], 0.9), det("x", [5., 0., 15., 10.], 0.9)];
        assert_eq!(filter_nested(&g, &cfg).0.len(), 2);
        // A inside B, IoU = 98/100
        let g = [det("x", [0., 0., 10., 9.8], 0.9), det("x", [0., 0., 10., 10.], 0.9)];
        let (kept, removed) = filter_nested(&g, &cfg);
        assert_eq!(kept, vec![g[1].clone()]);
        assert_eq!(removed, vec![g[0].clone()]);
        // A inside B, IoU = 0.5: kept under the conjunctive rule, removed under the alternative
        let g = [det("x", [0., 0., 10., 5.], 0.9), det("x", [0., 0., 10., 10.], 0.9)];
        assert_eq!(filter_nested(&g, &cfg).0.len(), 2);
        let alt = FilterConfig {
            nested_rule: NestedRule::IntersectionOverSmaller,
            ..cfg
        };
        assert_eq!(filter_nested(&g, &alt).0, vec![g[1].clone()]);
    }

    #[test]
    fn match_gates() {
        let cfg = FilterConfig::default();
        // candidate box [0,0,10,10]; detection [0,0,10,9] has IoU 0.9
        let cands = vec![MaskCandidate::new("m0", rect_mask([0, 0, 10, 10]))];
        let ok = match_masks(&[det("x", [0., 0., 10., 9.], 0.35)], &cands, &cfg).unwrap();
        assert_eq!(ok[0].mask_id, "m0");
        assert!((ok[0].iou - 0.9).abs() < 1e-12);

        let low_conf = match_masks(&[det("x", [0., 0., 10., 10.], 0.25)], &cands, &cfg).unwrap_err();
        assert_eq!(low_conf.reason, RejectReason::LowConfidence);

        // two boxes, IoUs 0.95 and 0.88 against their masks
        let cands = vec![
            MaskCandidate::new("m0", rect_mask([0, 0, 20, 10])),
            MaskCandidate::new("m1", rect_mask([50, 50, 75, 90])),
        ];
        let g = [det("x", [0., 0., 19., 10.], 0.9), det("x", [50., 50., 72., 90.], 0.9)];
        let r = match_masks(&g, &cands, &cfg).unwrap_err();
        assert_eq!(r.reason, RejectReason::LowIou);

        assert_eq!(match_masks(&g, &[], &cfg).unwrap_err().reason, RejectReason::NoCandidates);
    }

    #[test]
    fn candidates_used_once() {
        let cfg = FilterConfig::default();
        let cands = vec![MaskCandidate::new("m0", rect_mask([0, 0, 10, 10]))];
        let g = [det("x", [0., 0., 10., 10.], 0.9), det("x", [0., 0., 10., 10.], 0.9)];
        assert_eq!(match_masks(&g, &cands, &cfg).unwrap_err().reason, RejectReason::Unmatched);
    }

    #[test]
    fn merge_counts() {
        let a = rect_mask([0, 0, 10, 10]);
        let b = rect_mask([20, 20, 30, 25]);
        let c = rect_mask([5, 5, 15, 15]);
        let inst = |id: &str, label: &str| AnnotatedInstance {
            image: "img".into(),
            mask_id: id.into(),
            label: label.into(),
            expression: None,
            kind: InstanceKind::Instance,
        };
        let out = merge_semantic(&[(inst("a", "cat"), &a), (inst("b", "cat"), &b)]).unwrap();
        assert_eq!(out.semantic_masks["semantic:cat"].count(), a.count() + b.count());
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.records[2].kind, InstanceKind::Semantic);

        let out = merge_semantic(&[(inst("a", "cat"), &a), (inst("c", "cat"), &c)]).unwrap();
        let (i, _) = a.overlap_counts(&c).unwrap();
        assert_eq!(out.semantic_masks["semantic:cat"].count(), a.count() + c.count() - i as usize);

        let out = merge_semantic(&[(inst("a", "cat"), &a), (inst("b", "dog"), &b)]).unwrap();
        assert_eq!(out.semantic_masks["semantic:cat"], a);
        assert_eq!(out.semantic_masks["semantic:dog"], b);

        let small = BinaryMask::new(5, 5).unwrap();
        assert!(merge_semantic(&[(inst("a", "cat"), &a), (inst("s", "cat"), &small)]).is_err());
    }

    #[test]
    fn merge_is_order_independent() {
        let a = rect_mask([0, 0, 10, 10]);
        let c = rect_mask([5, 5, 15, 15]);
        let inst = |id: &str| AnnotatedInstance {
            image: "img".into(),
            mask_id: id.into(),
            label: "cat".into(),
            expression: None,
            kind: InstanceKind::Instance,
        };
        let x = merge_semantic(&[(inst("a"), &a), (inst("c"), &c)]).unwrap();
        let y = merge_semantic(&[(inst("c"), &c), (inst("a"), &a)]).unwrap();
        assert_eq!(x.semantic_masks, y.semantic_masks);
    }

    #[test]
    fn detection_record_json_shape() {
        let line = r#"{"image":"a.ppm","label":"cat","box":[1.0,2.0,3.0,4.0],"confidence":0.5}"#;
        let rec: DetectionRecord = serde_json::from_str(line).unwrap();
        assert_eq!(rec.detection.bbox, BoundingBox::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!(serde_json::to_string(&rec).unwrap(), line);
    }
}
