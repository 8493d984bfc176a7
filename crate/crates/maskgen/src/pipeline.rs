//! Stage functions shared by the individual commands, and the cached
//! end-to-end driver built from them.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use maskgen_armodel::{generate_many, AdamState, Checkpoint, Model, Sequence, Strategy, TrainConfig, TrainReport};
use maskgen_core::codec::{decode, read_codebook, train_codebook, write_codebook_binary, Codebook, TokenFile, TokenGrid};
use maskgen_core::codec::patchify;
use maskgen_core::dataset::Task;
use maskgen_core::mask::BinaryMask;
use maskgen_core::metrics::{EvalOptions, EvalPair};
use maskgen_core::vocab::Vocabulary;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::Cache;
use crate::config::Config;
use crate::data::{self, Record};
use crate::error::{HarnessError, Result};
use crate::manifest::{combine_hashes, RunManifest, TOOL_VERSION};
use crate::report::EvalReport;
use crate::seeds::split_seed;

/// Trains a codebook on the patches of `masks`.
pub fn fit_codebook<'a>(
    masks: impl IntoIterator<Item = &'a BinaryMask>,
    patch: usize,
    k: usize,
    max_iters: usize,
    seed: u64,
) -> Result<Codebook> {
    let mut vectors = Vec::new();
    for m in masks {
        vectors.extend_from_slice(patchify(m, patch)?.as_flat());
    }
    Ok(train_codebook(&vectors, patch * patch, k, max_iters, seed)?)
}

pub fn training_sequences(vocab: &Vocabulary, records: &[Record], codebook: &Codebook, patch: usize) -> Result<Vec<Sequence>> {
    records
        .par_iter()
        .map(|r| data::training_sequence(vocab, r, codebook, patch))
        .collect()
}

pub fn fit_model(
    model_cfg: maskgen_armodel::ModelConfig,
    train_cfg: &TrainConfig,
    seqs: &[Sequence],
    mut log: impl FnMut(&str),
) -> Result<(Model<f32>, AdamState, TrainReport)> {
    let mut model = Model::<f32>::init(model_cfg)?;
    let mut opt = AdamState::new(model.params.len());
    let report = maskgen_armodel::train(&mut model, &mut opt, train_cfg, seqs, |s| {
        log(&format!("epoch {:>3}  loss {:.4}  lr {:.2e}", s.epoch + 1, s.mean_loss, s.lr))
    })?;
    Ok((model, opt, report))
}

/// Greedy or sampled decoding of one mask per record; item `i` samples
/// with seed `seed + i`.
pub fn predict(
    model: &Model<f32>,
    codebook: &Codebook,
    patch: usize,
    records: &[Record],
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<(TokenGrid, BinaryMask)>> {
    let vocab = &model.config.vocab;
    let prefixes: Vec<Sequence> = records
        .iter()
        .map(|r| data::prefix_sequence(vocab, &r.image, &r.instruction, patch))
        .collect::<Result<_>>()?;
    let (h, w) = records.first().map(|r| r.mask.dims()).unwrap_or((0, 0));
    let (gh, gw) = (h / patch, w / patch);
    let tokens = generate_many(model, &prefixes, gh * gw, strategy, seed)?;
    tokens
        .into_iter()
        .map(|t| {
            let grid = TokenGrid::new(gh, gw, t)?;
            let mask = decode(&grid, codebook, patch)?;
            Ok((grid, mask))
        })
        .collect()
}

pub fn evaluate(preds: &[BinaryMask], gts: &[BinaryMask], opts: &EvalOptions) -> Result<Vec<EvalPair>> {
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(HarnessError::Input(format!(
            "{} predictions for {} ground-truth masks",
            preds.len(),
            gts.len()
        )));
    }
    preds
        .par_iter()
        .zip(gts)
        .map(|(p, g)| Ok(EvalPair::new(p.clone(), g.clone(), opts)?))
        .collect()
}

/// Model, codebook and geometry in one checkpoint file; the codebook rides in
/// the header metadata so inference needs nothing else.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub model: Model<f32>,
    pub codebook: Codebook,
    pub patch: usize,
    pub canvas: usize,
    pub manifest: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BundleMeta {
    manifest: String,
    patch: usize,
    canvas: usize,
    tool_version: String,
    /// Binary codebook, base64.
    codebook: String,
    #[serde(default)]
    train: Option<TrainReport>,
}

impl Bundle {
    pub fn save(&self, path: &Path, optimizer: Option<AdamState>, train: Option<TrainReport>) -> Result<()> {
        let mut cb = Vec::new();
        write_codebook_binary(&self.codebook, &mut cb)?;
        let meta = BundleMeta {
            manifest: self.manifest.clone(),
            patch: self.patch,
            canvas: self.canvas,
            tool_version: TOOL_VERSION.to_string(),
            codebook: B64.encode(cb),
            train,
        };
        Checkpoint {
            model: self.model.clone(),
            optimizer,
            meta: serde_json::to_value(meta)?,
        }
        .save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let meta: BundleMeta = serde_json::from_value(ck.meta)
            .map_err(|e| HarnessError::Input(format!("{} is not a maskgen checkpoint: {e}", path.display())))?;
        let bytes = B64
            .decode(meta.codebook)
            .map_err(|e| HarnessError::Input(format!("checkpoint codebook: {e}")))?;
        let (codebook, _) = read_codebook(&bytes[..])?;
        if codebook.len() != ck.model.config.vocab.mask_tokens {
            return Err(HarnessError::Input(format!(
                "codebook has {} entries, model expects {}",
                codebook.len(),
                ck.model.config.vocab.mask_tokens
            )));
        }
        Ok(Self {
            model: ck.model,
            codebook,
            patch: meta.patch,
            canvas: meta.canvas,
            manifest: meta.manifest,
        })
    }
}

pub fn write_tokens(path: &Path, grids: &[TokenGrid]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for g in grids {
        serde_json::to_writer(&mut w, &TokenFile::from(g))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::write(dir.join("report.json"), report.to_json())?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    fs::write(dir.join("report.txt"), report.to_table())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRun {
    pub stage: &'static str,
    pub key: String,
    pub dir: PathBuf,
    pub hit: bool,
}

#[derive(Debug, Clone)]
pub struct E2eOutcome {
    pub report: EvalReport,
    pub report_dir: PathBuf,
    pub stages: Vec<StageRun>,
}

/// The six cached stages: data, codebook, encode, train, infer, eval.
/// Each stage key hashes its upstream keys with the configuration it reads,
/// so editing the decode settings reuses the trained model.
pub struct Pipeline<'a> {
    cfg: &'a Config,
    cache: &'a Cache,
    log: Box<dyn FnMut(&str) + 'a>,
    runs: Vec<StageRun>,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("stage inputs serialize")
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a Config, cache: &'a Cache) -> Self {
        Self {
            cfg,
            cache,
            log: Box::new(|_| {}),
            runs: Vec::new(),
        }
    }

    pub fn with_log(mut self, log: impl FnMut(&str) + 'a) -> Self {
        self.log = Box::new(log);
        self
    }

    fn stage(
        &mut self,
        stage: &'static str,
        key_parts: &[&str],
        manifest: RunManifest,
        build: impl FnOnce(&Path, &str, &mut dyn FnMut(&str)) -> Result<()>,
    ) -> Result<StageRun> {
        let mut parts = vec![stage, TOOL_VERSION];
        parts.extend_from_slice(key_parts);
        let key = combine_hashes(parts);
        let manifest_hash = manifest.hash();
        let log = &mut self.log;
        let entry = self
            .cache
            .get_or_build(stage, &key, |dir| {
                log(&format!("[{stage}] building {}", &key[..12]));
                build(dir, &manifest_hash, log)?;
                let mut m = manifest.clone();
                m.finish();
                m.save(&dir.join("manifest.json"))
            })
            .map_err(|e| HarnessError::Stage {
                stage: stage.to_string(),
                manifest: manifest_hash.clone(),
                source: Box::new(e),
            })?;
        if entry.hit {
            (self.log)(&format!("[{stage}] cache hit {}", &key[..12]));
        }
        let run = StageRun {
            stage,
            key,
            dir: entry.dir,
            hit: entry.hit,
        };
        self.runs.push(run.clone());
        Ok(run)
    }

    fn manifest(&self, stage: &str, seed: u64) -> RunManifest {
        RunManifest::new(format!("e2e:{stage}"), self.cfg.hash(), seed)
    }

    pub fn run(mut self) -> Result<E2eOutcome> {
        let cfg = self.cfg;
        cfg.validate()?;
        let (d, c) = (&cfg.data, &cfg.codebook);
        let patch = c.patch;

        // data: train split, extra codebook-only scenes, held-out split
        let data_inputs = json(&(d, c.samples));
        let data = self.stage("data", &[&data_inputs], self.manifest("data", d.seed0), |dir, _, _| {
            let train_end = d.seed0 + d.train as u64;
            let corpus_end = d.seed0 + c.samples as u64;
            data::write_dataset(&dir.join("train"), &data::generate(d.task, d.seed0..train_end, d.canvas)?)?;
            data::write_dataset(&dir.join("extra"), &data::generate(d.task, train_end..corpus_end.max(train_end), d.canvas)?)?;
            let e0 = cfg.eval_seed0();
            data::write_dataset(&dir.join("eval"), &data::generate(d.task, e0..e0 + d.eval as u64, d.canvas)?)?;
            Ok(())
        })?;

        let cb_seed = split_seed(cfg.seed, "codebook");
        let cb_inputs = json(&(c, cb_seed));
        let codebook = self.stage(
            "codebook",
            &[&data.key, &cb_inputs],
            self.manifest("codebook", cb_seed).input("data", &data.key),
            |dir, _, _| {
                let train = data::read_dataset(&data.dir.join("train"))?;
                let extra = data::read_dataset(&data.dir.join("extra"))?;
                let corpus = train.iter().chain(&extra).take(c.samples).map(|r| &r.mask);
                let cb = fit_codebook(corpus, patch, c.k, c.max_iters, cb_seed)?;
                let mut f = BufWriter::new(fs::File::create(dir.join("codebook.bin"))?);
                write_codebook_binary(&cb, &mut f)?;
                f.flush()?;
                Ok(())
            },
        )?;
        let load_cb = || -> Result<Codebook> { Ok(read_codebook(fs::File::open(codebook.dir.join("codebook.bin"))?)?.0) };

        let encode = self.stage(
            "encode",
            &[&data.key, &codebook.key],
            self.manifest("encode", 0).input("data", &data.key).input("codebook", &codebook.key),
            |dir, _, _| {
                let cb = load_cb()?;
                for split in ["train", "eval"] {
                    let recs = data::read_dataset(&data.dir.join(split))?;
                    let grids: Vec<TokenGrid> = recs
                        .par_iter()
                        .map(|r| Ok(maskgen_core::codec::encode(&r.mask, &cb, patch)?))
                        .collect::<Result<_>>()?;
                    write_tokens(&dir.join(format!("{split}.jsonl")), &grids)?;
                }
                Ok(())
            },
        )?;

        let model_cfg = cfg.model_config();
        let train_cfg = cfg.train_config();
        let train = self.stage(
            "train",
            &[&encode.key, &json(&model_cfg), &json(&train_cfg)],
            self.manifest("train", train_cfg.seed).input("encode", &encode.key),
            |dir, manifest, log| {
                let cb = load_cb()?;
                let recs = data::read_dataset(&data.dir.join("train"))?;
                let seqs = training_sequences(&model_cfg.vocab, &recs, &cb, patch)?;
                let (model, opt, report) = fit_model(model_cfg.clone(), &train_cfg, &seqs, |m| log(m))?;
                fs::write(dir.join("train_log.json"), serde_json::to_string_pretty(&report)? + "\n")?;
                Bundle {
                    model,
                    codebook: cb,
                    patch,
                    canvas: d.canvas,
                    manifest: manifest.to_string(),
                }
                .save(&dir.join("model.ckpt"), Some(opt), Some(report))
            },
        )?;

        let strategy = cfg.decode.strategy;
        let decode_seed = split_seed(cfg.seed, "decode");
        let infer = self.stage(
            "infer",
            &[&train.key, &data.key, &strategy.to_string(), &decode_seed.to_string()],
            self.manifest("infer", decode_seed).input("train", &train.key).input("data", &data.key),
            |dir, _, _| {
                let bundle = Bundle::load(&train.dir.join("model.ckpt"))?;
                let recs = data::read_dataset(&data.dir.join("eval"))?;
                let preds = predict(&bundle.model, &bundle.codebook, patch, &recs, strategy, decode_seed)?;
                fs::create_dir_all(dir.join("masks"))?;
                for (r, (_, m)) in recs.iter().zip(&preds) {
                    m.save_pgm(dir.join("masks").join(format!("{:08}.pgm", r.seed)))?;
                }
                let grids: Vec<TokenGrid> = preds.into_iter().map(|(g, _)| g).collect();
                write_tokens(&dir.join("tokens.jsonl"), &grids)
            },
        )?;

        let eval_inputs = json(&cfg.eval);
        let eval = self.stage(
            "eval",
            &[&infer.key, &eval_inputs],
            self.manifest("eval", 0).input("infer", &infer.key),
            |dir, manifest, _| {
                let recs = data::read_dataset(&data.dir.join("eval"))?;
                let preds: Vec<BinaryMask> = recs
                    .iter()
                    .map(|r| BinaryMask::load_pgm(infer.dir.join("masks").join(format!("{:08}.pgm", r.seed))))
                    .collect::<Result<_, _>>()?;
                let gts: Vec<BinaryMask> = recs.into_iter().map(|r| r.mask).collect();
                let pairs = evaluate(&preds, &gts, &cfg.eval_options())?;
                let report = EvalReport::from_pairs(
                    &pairs,
                    &cfg.eval.thresholds,
                    cfg.eval.strict_above,
                    manifest,
                    d.task,
                    strategy.to_string(),
                )?;
                write_report(dir, &report)
            },
        )?;
        let text = fs::read_to_string(eval.dir.join("report.json"))?;
        Ok(E2eOutcome {
            report: EvalReport::from_json(&text)?,
            report_dir: eval.dir,
            stages: self.runs,
        })
    }
}

/// Task recorded in a dataset directory, if all lines agree.
pub fn dataset_task(records: &[Record]) -> Result<Task> {
    let first = records
        .first()
        .ok_or_else(|| HarnessError::Input("dataset is empty".into()))?
        .task;
    if records.iter().any(|r| r.task != first) {
        return Err(HarnessError::Input("dataset mixes tasks".into()));
    }
    Ok(first)
}
