use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use maskgen::annotate_io::{self, AnnotateJob, ClientSpec};
use maskgen::cache::Cache;
use maskgen::commands::{self, InferInput};
use maskgen::error::EXIT_RUNTIME;
use maskgen::{Bundle, Config, HarnessError, Pipeline};
use maskgen_armodel::{Preset, Strategy};
use maskgen_core::annotate::{FilterConfig, NestedRule, TextConfig};
use maskgen_core::dataset::Task;

#[derive(Parser)]
#[command(name = "maskgen", version, about = "Mask tokenizer, autoregressive mask generator and evaluation toolkit")]
struct Cli {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, env = "MASKGEN_CACHE", default_value = ".maskgen-cache")]
    cache_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        #[arg(long, default_value = "referring")]
        task: Task,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed0: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a mask codebook from one or more dataset directories.
    Codebook {
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a dataset's masks to token grids (JSONL).
    Encode {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the generator; the checkpoint embeds the codebook.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        preset: Option<Preset>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode masks for a dataset, or for one image and instruction.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, conflicts_with_all = ["image", "text"], required_unless_present = "image")]
        data: Option<PathBuf>,
        #[arg(long, requires = "text")]
        image: Option<PathBuf>,
        #[arg(long)]
        text: Option<String>,
        /// greedy, beam:B, topk:K, topp:P or random.
        #[arg(long)]
        decode: Option<Strategy>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted masks against a dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Directory written by `infer --data`.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "greedy")]
        decode: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter detections against candidate masks and write referring records.
    Annotate(AnnotateArgs),
    /// Export an attention heat map, or run the column-alignment probe.
    Attn {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// `last` or a layer index.
        #[arg(long, default_value = "last")]
        layer: String,
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Run the probe over the whole dataset and print JSON instead.
        #[arg(long)]
        probe: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage with caching and print the report.
    E2e {
        #[arg(long)]
        smoke: bool,
        /// Copy report.json/csv/txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    /// Root that detection image paths are relative to.
    #[arg(long, default_value = ".")]
    images: PathBuf,
    /// stub, replay:PATH or record:PATH.
    #[arg(long, default_value = "stub")]
    client: ClientSpec,
    #[arg(long, value_parser = parse_nested, default_value = "literal")]
    nested_rule: NestedRule,
    #[arg(long)]
    no_verify: bool,
    #[arg(long)]
    no_reasoning: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_nested(s: &str) -> Result<NestedRule, String> {
    match s {
        "literal" => Ok(NestedRule::Literal),
        "intersection-over-smaller" => Ok(NestedRule::IntersectionOverSmaller),
        _ => Err("expected literal or intersection-over-smaller".into()),
    }
}

fn load_config(cli: &Cli, smoke: bool) -> maskgen::Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None if smoke => Config::smoke(),
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn log(msg: &str) {
    eprintln!("{msg}");
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let smoke = matches!(cli.command, Command::E2e { smoke: true, .. });
    let mut cfg = load_config(&cli, smoke)?;
    match cli.command {
        Command::GenData { task, n, seed0, out } => {
            let h = commands::gen_data(&cfg, task, n, seed0, &out)?;
            println!("wrote {n} samples to {} (manifest {h})", out.display());
        }
        Command::Codebook { data, k, samples, out } => {
            cfg.codebook.k = k.unwrap_or(cfg.codebook.k);
            cfg.codebook.samples = samples.unwrap_or(cfg.codebook.samples);
            cfg.validate()?;
            let h = commands::codebook(&cfg, &data, &out)?;
            println!("wrote {} (manifest {h})", out.display());
        }
        Command::Encode { data, codebook, out } => {
            let h = commands::encode(&cfg, &data, &codebook, &out)?;
            println!("wrote {} (manifest {h})", out.display());
        }
        Command::Train { data, codebook, preset, epochs, out } => {
            if let Some(p) = preset {
                cfg.train.preset = p;
            }
            if epochs.is_some() {
                cfg.train.epochs = epochs;
            }
            cfg.validate()?;
            let h = commands::train(&cfg, &data, &codebook, &out, log)?;
            println!("wrote {} (manifest {h})", out.display());
        }
        Command::Infer { ckpt, data, image, text, decode, out } => {
            let input = match (data, image, text) {
                (Some(d), _, _) => InferInput::Dataset(d),
                (None, Some(image), Some(text)) => InferInput::Single { image, text },
                _ => return Err(HarnessError::Input("give --data, or --image with --text".into()).into()),
            };
            let strategy = decode.unwrap_or(cfg.decode.strategy);
            let h = commands::infer(&cfg, &ckpt, &input, strategy, &out)?;
            println!("wrote {} (manifest {h})", out.display());
        }
        Command::Eval { data, pred, decode, out } => {
            let report = commands::eval(&cfg, &data, &pred, &decode, &out)?;
            print!("{}", report.to_table());
        }
        Command::Annotate(a) => {
            let job = AnnotateJob {
                detections: a.detections,
                images: a.images,
                masks_root: a.masks,
                out: a.out,
                client: a.client,
                filter: FilterConfig {
                    nested_rule: a.nested_rule,
                    ..FilterConfig::default()
                },
                text: TextConfig {
                    verify: !a.no_verify,
                    reasoning: !a.no_reasoning,
                    ..TextConfig::default()
                },
            };
            let summary = annotate_io::run(&job)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Attn { ckpt, data, layer, index, probe, out } => {
            let layer = match layer.as_str() {
                "last" => None,
                s => Some(s.parse().map_err(|_| HarnessError::Input(format!("bad layer {s:?}")))?),
            };
            if probe {
                let bundle = Bundle::load(&ckpt)?;
                let recs = maskgen::data::read_dataset(&data)?;
                let r = commands::probe(&bundle, &recs, layer, 4, 10_000, cfg.seed)?;
                let text = serde_json::to_string_pretty(&r)? + "\n";
                match out {
                    Some(p) => fs::write(p, text)?,
                    None => print!("{text}"),
                }
            } else {
                let out = out.ok_or_else(|| HarnessError::Input("--out is required for a heat map".into()))?;
                let h = commands::attn(&ckpt, &data, index, layer, &out)?;
                println!("wrote {} (manifest {h})", out.display());
            }
        }
        Command::E2e { out, .. } => {
            let cache = Cache::open(&cli.cache_dir)?;
            let outcome = Pipeline::new(&cfg, &cache).with_log(log).run()?;
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                for f in ["report.json", "report.csv", "report.txt"] {
                    fs::copy(outcome.report_dir.join(f), dir.join(f))?;
                }
            }
            print!("{}", outcome.report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(EXIT_RUNTIME, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
