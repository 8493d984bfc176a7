//! Dataset directories: `images/*.ppm`, `masks/*.pgm` and a `manifest.jsonl`
//! with one `{"image","mask","instruction","task","seed"}` object per line.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use maskgen_armodel::{build_sequence, Sequence};
use maskgen_core::codec::{encode, Codebook};
use maskgen_core::dataset::{generate_sample, generate_scene, image_patches, tokenize_text, Task};
use maskgen_core::mask::{BinaryMask, RgbImage};
use maskgen_core::vocab::Vocabulary;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLine {
    pub image: String,
    pub mask: String,
    pub instruction: String,
    pub task: Task,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub seed: u64,
    pub task: Task,
    pub instruction: String,
    pub image: RgbImage,
    pub mask: BinaryMask,
}

/// Generates the scenes for `seeds` in seed order.
pub fn generate(task: Task, seeds: Range<u64>, canvas: usize) -> Result<Vec<Record>> {
    seeds
        .into_par_iter()
        .map(|seed| {
            let s = generate_sample(&generate_scene(seed, task, (canvas, canvas))?)?;
            Ok(Record {
                seed,
                task,
                instruction: s.instruction,
                image: s.image,
                mask: s.mask,
            })
        })
        .collect()
}

pub fn write_dataset(dir: &Path, records: &[Record]) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut manifest = Vec::new();
    for r in records {
        let line = ManifestLine {
            image: format!("images/{:08}.ppm", r.seed),
            mask: format!("masks/{:08}.pgm", r.seed),
            instruction: r.instruction.clone(),
            task: r.task,
            seed: r.seed,
        };
        r.image.save_ppm(dir.join(&line.image))?;
        r.mask.save_pgm(dir.join(&line.mask))?;
        serde_json::to_writer(&mut manifest, &line)?;
        manifest.push(b'\n');
    }
    let mut f = fs::File::create(dir.join(MANIFEST))?;
    f.write_all(&manifest)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestLine>> {
    let path = dir.join(MANIFEST);
    let f = fs::File::open(&path)
        .map_err(|e| HarnessError::Input(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestLine = serde_json::from_str(&line)
            .map_err(|e| HarnessError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Record>> {
    read_manifest(dir)?
        .into_iter()
        .map(|l| {
            let image = RgbImage::load(dir.join(&l.image))?;
            let mask = BinaryMask::load_pgm(dir.join(&l.mask))?;
            if image.dims() != mask.dims() {
                return Err(HarnessError::Input(format!("{} and {} differ in size", l.image, l.mask)));
            }
            Ok(Record {
                seed: l.seed,
                task: l.task,
                instruction: l.instruction,
                image,
                mask,
            })
        })
        .collect()
}

/// SHA-256 over the manifest and every file it references.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    h.update(fs::read(dir.join(MANIFEST))?);
    for l in read_manifest(dir)? {
        h.update(fs::read(dir.join(&l.image))?);
        h.update(fs::read(dir.join(&l.mask))?);
    }
    Ok(hex::encode(h.finalize()))
}

/// Decoding prefix `[text] <BOI> [image] <BOM>` for an image and instruction.
pub fn prefix_sequence(vocab: &Vocabulary, image: &RgbImage, instruction: &str, patch: usize) -> Result<Sequence> {
    let text = tokenize_text(instruction, vocab.text_base())?;
    let patches = image_patches(image, patch);
    Ok(build_sequence(vocab, &text, &patches, patch * patch * 3, &[])?)
}

/// Teacher-forcing sequence with the record's encoded mask as targets.
pub fn training_sequence(vocab: &Vocabulary, record: &Record, codebook: &Codebook, patch: usize) -> Result<Sequence> {
    let prefix = prefix_sequence(vocab, &record.image, &record.instruction, patch)?;
    let tokens = encode(&record.mask, codebook, patch)?;
    Ok(prefix.with_mask_tokens(tokens.as_slice()))
}
