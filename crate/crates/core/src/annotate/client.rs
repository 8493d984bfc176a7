use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::render::{GENERATE_COLOR, VERIFY_COLOR};
use crate::mask::RgbImage;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("no transcript entry for {kind:?} request {key}")]
    MissingEntry { kind: RequestKind, key: String },
    #[error("unparseable verify response {0:?}")]
    BadVerdict(String),
    #[error("empty expression")]
    EmptyExpression,
    #[error("client failure: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Generate,
    Verify,
}

/// What a generate request asks for; verify requests always use `Verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Referring,
    Reasoning,
    Verify,
}

impl PromptStyle {
    fn tag(self) -> &'static str {
        match self {
            PromptStyle::Referring => "referring",
            PromptStyle::Reasoning => "reasoning",
            PromptStyle::Verify => "verify",
        }
    }
}

/// A request is the rendered image plus a text argument: the label for
/// generate requests, the candidate expression for verify requests.
#[derive(Debug, Clone, Copy)]
pub struct CaptionRequest<'a> {
    pub kind: RequestKind,
    pub style: PromptStyle,
    pub image: &'a RgbImage,
    pub text: &'a str,
}

impl<'a> CaptionRequest<'a> {
    pub fn generate(style: PromptStyle, image: &'a RgbImage, label: &'a str) -> Self {
        Self {
            kind: RequestKind::Generate,
            style,
            image,
            text: label,
        }
    }

    pub fn verify(image: &'a RgbImage, expression: &'a str) -> Self {
        Self {
            kind: RequestKind::Verify,
            style: PromptStyle::Verify,
            image,
            text: expression,
        }
    }

    /// Content hash identifying the request in a transcript.
    pub fn key(&self) -> String {
        let (h, w) = self.image.dims();
        let mut hasher = Sha256::new();
        hasher.update(self.style.tag().as_bytes());
        hasher.update([0]);
        hasher.update((self.text.len() as u64).to_le_bytes());
        hasher.update(self.text.as_bytes());
        hasher.update((h as u64).to_le_bytes());
        hasher.update((w as u64).to_le_bytes());
        hasher.update(self.image.as_raw());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub trait CaptionClient {
    fn respond(&mut self, req: &CaptionRequest<'_>) -> Result<String, ClientError>;

    fn generate(&mut self, req: &CaptionRequest<'_>) -> Result<String, ClientError> {
        let s = self.respond(req)?;
        let s = s.trim();
        if s.is_empty() {
            return Err(ClientError::EmptyExpression);
        }
        Ok(s.to_string())
    }

    /// `true` when the verifier says the expression applies to the outlined object.
    fn verify(&mut self, req: &CaptionRequest<'_>) -> Result<bool, ClientError> {
        let s = self.respond(req)?;
        let t = s.trim().to_ascii_lowercase();
        if t.starts_with("yes") {
            Ok(true)
        } else if t.starts_with("no") {
            Ok(false)
        } else {
            Err(ClientError::BadVerdict(s))
        }
    }
}

impl<C: CaptionClient + ?Sized> CaptionClient for &mut C {
    fn respond(&mut self, req: &CaptionRequest<'_>) -> Result<String, ClientError> {
        (**self).respond(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub kind: RequestKind,
    pub key: String,
    pub response: String,
}

/// Answers from a recorded transcript; unknown requests are failures.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    entries: HashMap<(RequestKind, String), String>,
}

impl ReplayClient {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|e| ((e.kind, e.key), e.response))
                .collect(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let entries: Vec<TranscriptEntry> = serde_json::from_str(s)?;
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CaptionClient for ReplayClient {
    fn respond(&mut self, req: &CaptionRequest<'_>) -> Result<String, ClientError> {
        let key = req.key();
        self.entries
            .get(&(req.kind, key.clone()))
            .cloned()
            .ok_or(ClientError::MissingEntry { kind: req.kind, key })
    }
}

/// Wraps another client and keeps every successful exchange.
#[derive(Debug)]
pub struct RecordingClient<C> {
    inner: C,
    transcript: Vec<TranscriptEntry>,
}

impl<C: CaptionClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            transcript: Vec::new(),
        }
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    pub fn into_transcript(self) -> Vec<TranscriptEntry> {
        self.transcript
    }
}

impl<C: CaptionClient> CaptionClient for RecordingClient<C> {
    fn respond(&mut self, req: &CaptionRequest<'_>) -> Result<String, ClientError> {
        let response = self.inner.respond(req)?;
        let key = req.key();
        if !self.transcript.iter().any(|e| e.kind == req.kind && e.key == key) {
            self.transcript.push(TranscriptEntry {
                kind: req.kind,
                key,
                response: response.clone(),
            });
        }
        Ok(response)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyPolicy {
    /// Compares the location named in the expression with the outlined object.
    #[default]
    Spatial,
    AlwaysYes,
    AlwaysNo,
}

/// Rule-based stand-in for a captioning model.
///
/// Generate requests describe the outlined object by the centroid of the
/// contour pixels, e.g. `"cat at (12, 40)"`. Spatial verification answers
/// "yes" when the outlined object's centroid is within `tolerance` pixels of
/// the position named in the expression.
#[derive(Debug, Clone)]
pub struct StubClient {
    pub policy: VerifyPolicy,
    pub tolerance: f64,
    /// Generate requests for this label fail, to exercise error handling.
    pub fail_label: Option<String>,
    pub calls: HashMap<RequestKind, usize>,
}

impl Default for StubClient {
    fn default() -> Self {
        Self::new(VerifyPolicy::Spatial)
    }
}

impl StubClient {
    pub fn new(policy: VerifyPolicy) -> Self {
        Self {
            policy,
            tolerance: 2.0,
            fail_label: None,
            calls: HashMap::new(),
        }
    }

    pub fn calls(&self, kind: RequestKind) -> usize {
        self.calls.get(&kind).copied().unwrap_or(0)
    }

    fn contour_centroid(image: &RgbImage, color: [u8; 3]) -> Option<(f64, f64)> {
        let (h, w) = image.dims();
        let (mut sy, mut sx, mut n) = (0.0, 0.0, 0usize);
        for r in 0..h {
            for c in 0..w {
                if image.get(r, c) == color {
                    sy += r as f64;
                    sx += c as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sy / n as f64, sx / n as f64))
    }

    fn parse_position(expr: &str) -> Option<(f64, f64)> {
        let open = expr.rfind('(')?;
        let close = open + expr[open..].find(')')?;
        let (a, b) = expr[open + 1..close].split_once(',')?;
        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
    }
}

impl CaptionClient for StubClient {
    fn respond(&mut self, req: &CaptionRequest<'_>) -> Result<String, ClientError> {
        *self.calls.entry(req.kind).or_default() += 1;
        match req.kind {
            RequestKind::Generate => {
                if self.fail_label.as_deref() == Some(req.text) {
                    return Err(ClientError::Failed(format!("refused label {}", req.text)));
                }
                let (y, x) = Self::contour_centroid(req.image, GENERATE_COLOR)
                    .ok_or_else(|| ClientError::Failed("no green contour in image".into()))?;
                let (y, x) = (y.round() as i64, x.round() as i64);
                Ok(match req.style {
                    PromptStyle::Reasoning => format!("the {} you would point at near ({y}, {x})", req.text),
                    _ => format!("{} at ({y}, {x})", req.text),
                })
            }
            RequestKind::Verify => match self.policy {
                VerifyPolicy::AlwaysYes => Ok("yes".into()),
                VerifyPolicy::AlwaysNo => Ok("no".into()),
                VerifyPolicy::Spatial => {
                    let (y, x) = Self::contour_centroid(req.image, VERIFY_COLOR)
                        .ok_or_else(|| ClientError::Failed("no orange contour in image".into()))?;
                    let Some((ey, ex)) = Self::parse_position(req.text) else {
                        return Ok("yes".into());
                    };
                    let d = ((y - ey).powi(2) + (x - ex).powi(2)).sqrt();
                    Ok(if d <= self.tolerance { "yes" } else { "no" }.into())
                }
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_every_field() {
        let a = RgbImage::new(4, 4, [0, 0, 0]).unwrap();
        let mut b = a.clone();
        b.put(1, 1, [1, 0, 0]);
        let base = CaptionRequest::generate(PromptStyle::Referring, &a, "cat").key();
        assert_eq!(base.len(), 64);
        assert_eq!(base, CaptionRequest::generate(PromptStyle::Referring, &a, "cat").key());
        assert_ne!(base, CaptionRequest::generate(PromptStyle::Reasoning, &a, "cat").key());
        assert_ne!(base, CaptionRequest::generate(PromptStyle::Referring, &b, "cat").key());
        assert_ne!(base, CaptionRequest::generate(PromptStyle::Referring, &a, "dog").key());
    }

    #[test]
    fn replay_round_trip() {
        let img = RgbImage::new(3, 3, [0, 0, 0]).unwrap();
        let req = CaptionRequest::verify(&img, "cat on the left");
        let t = vec![TranscriptEntry {
            kind: RequestKind::Verify,
            key: req.key(),
            response: "No.".into(),
        }];
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains(r#""kind":"verify""#));
        let mut c = ReplayClient::from_json(&json).unwrap();
        assert!(!c.verify(&req).unwrap());
        let other = CaptionRequest::verify(&img, "cat on the right");
        assert!(matches!(c.verify(&other), Err(ClientError::MissingEntry { .. })));
    }

    #[test]
    fn verdict_parsing() {
        struct Fixed(&'static str);
        impl CaptionClient for Fixed {
            fn respond(&mut self, _: &CaptionRequest<'_>) -> Result<String, ClientError> {
                Ok(self.0.into())
            }
        }
        let img = RgbImage::new(1, 1, [0, 0, 0]).unwrap();
        let req = CaptionRequest::verify(&img, "x");
        assert!(Fixed(" Yes, it does").verify(&req).unwrap());
        assert!(!Fixed("no").verify(&req).unwrap());
        assert!(Fixed("maybe").verify(&req).is_err());
        assert_eq!(Fixed("   ").generate(&req), Err(ClientError::EmptyExpression));
    }

    #[test]
    fn stub_position_parse() {
        assert_eq!(StubClient::parse_position("cat at (12, 40)"), Some((12.0, 40.0)));
        assert_eq!(StubClient::parse_position("cat"), None);
    }
}
