//! One function per CLI command. Each writes a `manifest.json` next to its
//! outputs (or `<file>.manifest.json` for single-file outputs) and returns
//! the manifest hash.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use maskgen_armodel::{attention_map, column_alignment_probe, ProbeResult, Strategy};
use maskgen_core::codec::{encode as encode_mask, read_codebook, write_codebook_binary, Codebook, TokenGrid};
use maskgen_core::dataset::Task;
use maskgen_core::mask::{BinaryMask, RgbImage};
use rayon::prelude::*;

use crate::config::Config;
use crate::data::{self, Record};
use crate::error::{HarnessError, Result};
use crate::manifest::{content_hash, RunManifest};
use crate::pipeline::{dataset_task, evaluate, fit_codebook, fit_model, predict, training_sequences, write_report, write_tokens, Bundle};
use crate::report::EvalReport;
use crate::seeds::split_seed;

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| HarnessError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(content_hash(&bytes))
}

fn finish(mut m: RunManifest, path: &Path) -> Result<String> {
    m.finish();
    m.save(path)?;
    Ok(m.hash())
}

pub fn load_codebook(path: &Path) -> Result<Codebook> {
    let f = fs::File::open(path).map_err(|e| HarnessError::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_codebook(f)?.0)
}

pub fn gen_data(cfg: &Config, task: Task, n: usize, seed0: u64, out: &Path) -> Result<String> {
    if n == 0 {
        return Err(HarnessError::Input("--n must be positive".into()));
    }
    let recs = data::generate(task, seed0..seed0 + n as u64, cfg.data.canvas)?;
    data::write_dataset(out, &recs)?;
    let m = RunManifest::new("gen-data", cfg.hash(), seed0).input("dataset", data::dataset_hash(out)?);
    finish(m, &out.join("manifest.json"))
}

/// Trains on the first `cfg.codebook.samples` masks across `datasets`.
pub fn codebook(cfg: &Config, datasets: &[PathBuf], out: &Path) -> Result<String> {
    let c = &cfg.codebook;
    let mut records = Vec::new();
    let mut m = RunManifest::new("codebook", cfg.hash(), split_seed(cfg.seed, "codebook"));
    for d in datasets {
        m = m.input(d.display().to_string(), data::dataset_hash(d)?);
        records.extend(data::read_dataset(d)?);
    }
    let cb = fit_codebook(records.iter().take(c.samples).map(|r| &r.mask), c.patch, c.k, c.max_iters, m.seed)?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(fs::File::create(out)?);
    write_codebook_binary(&cb, &mut f)?;
    f.flush()?;
    finish(m, &sidecar(out))
}

pub fn encode(cfg: &Config, dataset: &Path, codebook: &Path, out: &Path) -> Result<String> {
    let cb = load_codebook(codebook)?;
    let recs = data::read_dataset(dataset)?;
    let grids: Vec<TokenGrid> = recs
        .par_iter()
        .map(|r| Ok(encode_mask(&r.mask, &cb, cfg.codebook.patch)?))
        .collect::<Result<_>>()?;
    write_tokens(out, &grids)?;
    let m = RunManifest::new("encode", cfg.hash(), 0)
        .input("dataset", data::dataset_hash(dataset)?)
        .input("codebook", file_hash(codebook)?);
    finish(m, &sidecar(out))
}

pub fn train(cfg: &Config, dataset: &Path, codebook: &Path, out: &Path, mut log: impl FnMut(&str)) -> Result<String> {
    let cb = load_codebook(codebook)?;
    let recs = data::read_dataset(dataset)?;
    let model_cfg = cfg.model_config();
    let train_cfg = cfg.train_config();
    if cb.len() != model_cfg.vocab.mask_tokens {
        return Err(HarnessError::Config(format!(
            "codebook has {} entries but codebook.k is {}",
            cb.len(),
            cfg.codebook.k
        )));
    }
    let mut m = RunManifest::new("train", cfg.hash(), train_cfg.seed)
        .input("dataset", data::dataset_hash(dataset)?)
        .input("codebook", file_hash(codebook)?);
    let seqs = training_sequences(&model_cfg.vocab, &recs, &cb, cfg.codebook.patch)?;
    let (model, opt, report) = fit_model(model_cfg, &train_cfg, &seqs, &mut log)?;
    m.finish();
    let hash = m.hash();
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Bundle {
        model,
        codebook: cb,
        patch: cfg.codebook.patch,
        canvas: cfg.data.canvas,
        manifest: hash.clone(),
    }
    .save(out, Some(opt), Some(report))?;
    m.save(sidecar(out))?;
    Ok(hash)
}

pub enum InferInput {
    Dataset(PathBuf),
    Single { image: PathBuf, text: String },
}

/// Decodes masks into `out/masks/` (or `out` itself as a PGM for a single
/// image) and writes the token grids alongside.
pub fn infer(cfg: &Config, ckpt: &Path, input: &InferInput, strategy: Strategy, out: &Path) -> Result<String> {
    let bundle = Bundle::load(ckpt)?;
    let seed = split_seed(cfg.seed, "decode");
    let mut m = RunManifest::new("infer", cfg.hash(), seed).input("checkpoint", file_hash(ckpt)?);
    match input {
        InferInput::Dataset(dir) => {
            m = m.input("dataset", data::dataset_hash(dir)?);
            let recs = data::read_dataset(dir)?;
            let preds = predict(&bundle.model, &bundle.codebook, bundle.patch, &recs, strategy, seed)?;
            fs::create_dir_all(out.join("masks"))?;
            for (r, (_, mask)) in recs.iter().zip(&preds) {
                mask.save_pgm(out.join("masks").join(format!("{:08}.pgm", r.seed)))?;
            }
            let grids: Vec<TokenGrid> = preds.into_iter().map(|(g, _)| g).collect();
            write_tokens(&out.join("tokens.jsonl"), &grids)?;
            finish(m, &out.join("manifest.json"))
        }
        InferInput::Single { image, text } => {
            m = m.input("image", file_hash(image)?);
            let img = RgbImage::load(image)?;
            let rec = Record {
                seed: 0,
                task: Task::Referring,
                instruction: text.clone(),
                mask: BinaryMask::new(img.dims().0, img.dims().1)?,
                image: img,
            };
            let (grid, mask) = predict(&bundle.model, &bundle.codebook, bundle.patch, &[rec], strategy, seed)?
                .pop()
                .expect("one prediction per record");
            mask.save_pgm(out)?;
            write_tokens(&out.with_extension("tokens.jsonl"), &[grid])?;
            finish(m, &sidecar(out))
        }
    }
}

/// Scores `pred/masks/<seed>.pgm` against the dataset's ground truth.
pub fn eval(cfg: &Config, dataset: &Path, pred: &Path, decode: &str, out: &Path) -> Result<EvalReport> {
    let recs = data::read_dataset(dataset)?;
    let task = dataset_task(&recs)?;
    let preds: Vec<BinaryMask> = recs
        .iter()
        .map(|r| {
            let p = pred.join("masks").join(format!("{:08}.pgm", r.seed));
            BinaryMask::load_pgm(&p).map_err(|e| HarnessError::Input(format!("prediction {}: {e}", p.display())))
        })
        .collect::<Result<_>>()?;
    let gts: Vec<BinaryMask> = recs.into_iter().map(|r| r.mask).collect();
    let pairs = evaluate(&preds, &gts, &cfg.eval_options())?;
    let mut m = RunManifest::new("eval", cfg.hash(), 0).input("dataset", data::dataset_hash(dataset)?);
    if pred.join("manifest.json").is_file() {
        m = m.input("predictions", file_hash(&pred.join("manifest.json"))?);
    }
    m.finish();
    let report = EvalReport::from_pairs(&pairs, &cfg.eval.thresholds, cfg.eval.strict_above, m.hash(), task, decode)?;
    fs::create_dir_all(out)?;
    write_report(out, &report)?;
    m.save(out.join("manifest.json"))?;
    Ok(report)
}

/// Attention of the mask queries at `layer` for one teacher-forced sample,
/// written as a heat-map PGM (rows are queries, columns keys).
pub fn attn(ckpt: &Path, dataset: &Path, index: usize, layer: Option<usize>, out: &Path) -> Result<String> {
    let bundle = Bundle::load(ckpt)?;
    let recs = data::read_dataset(dataset)?;
    let rec = recs
        .get(index)
        .ok_or_else(|| HarnessError::Input(format!("dataset has {} samples, no index {index}", recs.len())))?;
    let layer = resolve_layer(&bundle, layer)?;
    let seq = data::training_sequence(&bundle.model.config.vocab, rec, &bundle.codebook, bundle.patch)?;
    let map = attention_map(&bundle.model, &seq, layer)?;
    let mut f = BufWriter::new(fs::File::create(out)?);
    map.write_pgm(&mut f)?;
    f.flush()?;
    let m = RunManifest::new("attn", content_hash(format!("layer={layer} index={index}").as_bytes()), 0)
        .input("checkpoint", file_hash(ckpt)?)
        .input("dataset", data::dataset_hash(dataset)?);
    finish(m, &sidecar(out))
}

fn resolve_layer(bundle: &Bundle, layer: Option<usize>) -> Result<usize> {
    let n = bundle.model.config.layers;
    match layer {
        None => Ok(n - 1),
        Some(l) if l < n => Ok(l),
        Some(l) => Err(HarnessError::Input(format!("layer {l} out of range, model has {n}"))),
    }
}

/// Column-alignment probe over teacher-forced sequences of `records`.
pub fn probe(bundle: &Bundle, records: &[Record], layer: Option<usize>, top: usize, permutations: usize, seed: u64) -> Result<ProbeResult> {
    let layer = resolve_layer(bundle, layer)?;
    let seqs = training_sequences(&bundle.model.config.vocab, records, &bundle.codebook, bundle.patch)?;
    let side = bundle.canvas / bundle.patch;
    Ok(column_alignment_probe(&bundle.model, &seqs, (side, side), layer, top, permutations, seed)?)
}
