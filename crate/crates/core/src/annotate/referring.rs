use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::client::{CaptionClient, CaptionRequest, PromptStyle};
use super::render::{render_contour, DEFAULT_DILATION, GENERATE_COLOR, VERIFY_COLOR};
use super::{AnnotatedInstance, InstanceKind, RejectReason, Rejection};
use crate::mask::{BinaryMask, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextConfig {
    /// Cross-check expressions against same-label siblings.
    pub verify: bool,
    /// Also request reasoning expressions for single-instance labels.
    pub reasoning: bool,
    pub dilation: u32,
}

impl Default for TextConfig {
    fn default() -> Self {
        Self {
            verify: true,
            reasoning: true,
            dilation: DEFAULT_DILATION,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextOutcome {
    pub records: Vec<AnnotatedInstance>,
    pub rejections: Vec<Rejection>,
}

/// Generates (and, for multi-instance labels, cross-verifies) referring
/// expressions for the instances of one image. Client failures skip the
/// instance and are reported; they never abort the image.
pub fn run_referring_pipeline(
    image: &RgbImage,
    instances: &[(AnnotatedInstance, &BinaryMask)],
    client: &mut dyn CaptionClient,
    cfg: &TextConfig,
) -> TextOutcome {
    let mut out = TextOutcome::default();
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (inst, _)) in instances.iter().enumerate() {
        by_label.entry(inst.label.as_str()).or_default().push(i);
    }

    let reject = |inst: &AnnotatedInstance, reason, detail: String| Rejection {
        image: inst.image.clone(),
        label: inst.label.clone(),
        mask_id: Some(inst.mask_id.clone()),
        reason,
        detail,
    };
    let record = |inst: &AnnotatedInstance, kind, expr: String| AnnotatedInstance {
        image: inst.image.clone(),
        mask_id: inst.mask_id.clone(),
        label: inst.label.clone(),
        expression: Some(expr),
        kind,
    };

    for (label, members) in by_label {
        for &i in &members {
            let (inst, mask) = &instances[i];
            let green = match render_contour(image, mask, GENERATE_COLOR, cfg.dilation) {
                Ok(img) => img,
                Err(e) => {
                    out.rejections.push(reject(inst, RejectReason::ClientFailure, e.to_string()));
                    continue;
                }
            };
            let expr = match client.generate(&CaptionRequest::generate(PromptStyle::Referring, &green, label)) {
                Ok(e) => e,
                Err(e) => {
                    out.rejections.push(reject(inst, RejectReason::ClientFailure, e.to_string()));
                    continue;
                }
            };

            if members.len() == 1 {
                out.records.push(record(inst, InstanceKind::Referring, expr));
                if cfg.reasoning {
                    match client.generate(&CaptionRequest::generate(PromptStyle::Reasoning, &green, label)) {
                        Ok(r) => out.records.push(record(inst, InstanceKind::Reasoning, r)),
                        Err(e) => out.rejections.push(reject(inst, RejectReason::ClientFailure, e.to_string())),
                    }
                }
                continue;
            }
            if !cfg.verify {
                out.records.push(record(inst, InstanceKind::Referring, expr));
                continue;
            }

            let mut verdict: Result<Option<String>, String> = Ok(None);
            for &j in members.iter().filter(|&&j| j != i) {
                let (sib, sib_mask) = &instances[j];
                let orange = match render_contour(image, sib_mask, VERIFY_COLOR, cfg.dilation) {
                    Ok(img) => img,
                    Err(e) => {
                        verdict = Err(e.to_string());
                        break;
                    }
                };
                match client.verify(&CaptionRequest::verify(&orange, &expr)) {
                    Ok(false) => {}
                    Ok(true) => {
                        verdict = Ok(Some(sib.mask_id.clone()));
                        break;
                    }
                    Err(e) => {
                        verdict = Err(e.to_string());
                        break;
                    }
                }
            }
            match verdict {
                Ok(None) => out.records.push(record(inst, InstanceKind::Referring, expr)),
                Ok(Some(sib)) => out.rejections.push(reject(
                    inst,
                    RejectReason::AppliesToSibling,
                    format!("{expr:?} also applies to {sib}"),
                )),
                Err(e) => out.rejections.push(reject(inst, RejectReason::ClientFailure, e)),
            }
        }
    }
    out
}
