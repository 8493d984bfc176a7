//! File front end for the annotation filters.
//!
//! Inputs: a detections JSONL (`{"image","label","box","confidence"}` per
//! line, `image` a PPM path relative to the image root), and a masks root
//! where `<root>/<image stem>/index.json` maps mask ids to PGM files in the
//! same directory. Without an index every `*.pgm` there is a candidate,
//! keyed by file stem.
//! Outputs: `instances.jsonl`, `rejections.jsonl`, semantic union masks under
//! `semantic/<image>/`, and the client transcript when recording.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use maskgen_core::annotate::{
    merge_semantic, run_label_pipeline, run_referring_pipeline, AnnotatedInstance, CaptionClient, DetectionRecord,
    FilterConfig, InstanceKind, LabeledDetection, MaskCandidate, RecordingClient, Rejection, ReplayClient, StubClient,
    TextConfig, TranscriptEntry,
};
use maskgen_core::mask::{BinaryMask, RgbImage};
use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Which caption client answers generate/verify requests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientSpec {
    /// Rule-based local stand-in.
    Stub,
    /// Answers from a recorded transcript; unknown requests fail.
    Replay(PathBuf),
    /// Stub answers, written to a transcript for later replay.
    Record(PathBuf),
}

impl FromStr for ClientSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None if s == "stub" => Ok(ClientSpec::Stub),
            Some(("replay", p)) if !p.is_empty() => Ok(ClientSpec::Replay(p.into())),
            Some(("record", p)) if !p.is_empty() => Ok(ClientSpec::Record(p.into())),
            _ => Err(format!("client must be stub, replay:PATH or record:PATH, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnnotateJob {
    pub detections: PathBuf,
    pub images: PathBuf,
    pub masks_root: PathBuf,
    pub out: PathBuf,
    pub client: ClientSpec,
    pub filter: FilterConfig,
    pub text: TextConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnnotateSummary {
    pub images: usize,
    pub instances: usize,
    pub semantic: usize,
    pub expressions: usize,
    pub rejections: usize,
}

pub fn read_detections(path: &Path) -> Result<BTreeMap<String, Vec<LabeledDetection>>> {
    let f = fs::File::open(path).map_err(|e| HarnessError::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut by_image: BTreeMap<String, Vec<LabeledDetection>> = BTreeMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        by_image.entry(rec.image).or_default().push(rec.detection);
    }
    Ok(by_image)
}

/// Candidate masks for one image, sorted by id.
pub fn read_candidates(dir: &Path) -> Result<Vec<MaskCandidate>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let index_path = dir.join("index.json");
    let index: BTreeMap<String, PathBuf> = if index_path.is_file() {
        let text = fs::read_to_string(&index_path)?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Input(format!("{}: {e}", index_path.display())))?
    } else {
        let mut index = BTreeMap::new();
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            if p.extension().is_some_and(|e| e == "pgm") {
                let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                index.insert(id, p);
            }
        }
        index
    };
    index
        .into_iter()
        .map(|(id, file)| {
            let mask = BinaryMask::load_pgm(dir.join(&file))
                .map_err(|e| HarnessError::Input(format!("mask {id} ({}): {e}", file.display())))?;
            Ok(MaskCandidate::new(id, mask))
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it)?;
        buf.push(b'\n');
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn run(job: &AnnotateJob) -> Result<AnnotateSummary> {
    let dets = read_detections(&job.detections)?;
    match &job.client {
        ClientSpec::Stub => run_with(job, &dets, &mut StubClient::default()),
        ClientSpec::Replay(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| HarnessError::Input(format!("cannot read transcript {}: {e}", p.display())))?;
            let mut client = ReplayClient::from_json(&text)?;
            run_with(job, &dets, &mut client)
        }
        ClientSpec::Record(p) => {
            let mut client = RecordingClient::new(StubClient::default());
            let summary = run_with(job, &dets, &mut client)?;
            let transcript: Vec<TranscriptEntry> = client.into_transcript();
            fs::write(p, serde_json::to_string_pretty(&transcript)? + "\n")?;
            Ok(summary)
        }
    }
}

fn run_with(
    job: &AnnotateJob,
    dets: &BTreeMap<String, Vec<LabeledDetection>>,
    client: &mut dyn CaptionClient,
) -> Result<AnnotateSummary> {
    fs::create_dir_all(&job.out)?;
    let mut records: Vec<AnnotatedInstance> = Vec::new();
    let mut rejections: Vec<Rejection> = Vec::new();
    let mut summary = AnnotateSummary::default();
    for (image_id, image_dets) in dets {
        let image_path = job.images.join(image_id);
        let image = RgbImage::load(&image_path)
            .map_err(|e| HarnessError::Input(format!("image {}: {e}", image_path.display())))?;
        let stem = Path::new(image_id).file_stem().and_then(|s| s.to_str()).unwrap_or(image_id);
        let candidates = read_candidates(&job.masks_root.join(stem))?;
        let labels = run_label_pipeline(image_id, image.dims(), image_dets, &candidates, &job.filter);
        let masks: BTreeMap<&str, &BinaryMask> = candidates.iter().map(|c| (c.mask_id.as_str(), &c.mask)).collect();
        let with_masks: Vec<(AnnotatedInstance, &BinaryMask)> =
            labels.instances.iter().map(|i| (i.clone(), masks[i.mask_id.as_str()])).collect();

        let merged = merge_semantic(&with_masks)?;
        if !merged.semantic_masks.is_empty() {
            let dir = job.out.join("semantic").join(stem);
            fs::create_dir_all(&dir)?;
            for (id, m) in &merged.semantic_masks {
                let stem = id.replace([':', '/', ' '], "_");
                m.save_pgm(dir.join(format!("{stem}.pgm")))?;
            }
        }
        let text = run_referring_pipeline(&image, &with_masks, client, &job.text);

        summary.images += 1;
        summary.instances += labels.instances.len();
        summary.semantic += merged.records.iter().filter(|r| r.kind == InstanceKind::Semantic).count();
        summary.expressions += text.records.len();
        summary.rejections += labels.rejections.len() + text.rejections.len();
        records.extend(merged.records);
        records.extend(text.records);
        rejections.extend(labels.rejections);
        rejections.extend(text.rejections);
    }
    write_jsonl(&job.out.join("instances.jsonl"), &records)?;
    write_jsonl(&job.out.join("rejections.jsonl"), &rejections)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_spec_parsing() {
        assert_eq!("stub".parse::<ClientSpec>().unwrap(), ClientSpec::Stub);
        assert_eq!(
            "replay:t.json".parse::<ClientSpec>().unwrap(),
            ClientSpec::Replay("t.json".into())
        );
        assert!("replay:".parse::<ClientSpec>().is_err());
        assert!("openai".parse::<ClientSpec>().is_err());
    }
}
