//! Command-line front end. Each subcommand reads its inputs, runs one
//! pipeline stage, writes its declared output file and prints a JSON summary
//! on stdout. Failures print `{"error": {"kind", "message"}}` and exit 1;
//! usage errors exit 2.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::c2s::C2SNetwork;
use crate::embedding::{Embedding, Modality, SeededRng};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::persist::{self, parse_config, RunConfig};
use crate::prompt::{compute_set_prompt, manipulate, PromptPair, PromptProvenance};
use crate::training::{evaluate, split_holdout, train, translate, TranslateInput};
use crate::world::{PairRecord, ToyWorld};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Image samples averaged into the image prompt when no pair file is given.
const DEFAULT_PROMPT_SAMPLES: usize = 10_000;

#[derive(Debug, Parser)]
#[command(
    name = "pcmframe",
    version,
    about = "Cross-modal embedding projection toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct Common {
    /// `key = value` run configuration; absent keys use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a toy world (--seed overrides world_seed).
    GenWorld {
        #[command(flatten)]
        common: Common,
    },
    /// Sample (SE, CIE) pairs from a world (--seed overrides pair_seed).
    GenPairs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Image prompt from pair CIEs (or --n fresh samples) and text prompt from --attrs (default neutral).
    ComputePrompts {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        attrs: Option<String>,
    },
    /// Train a projection network (--seed overrides data_seed).
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Held-out metrics of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Text attributes to image through prompts and a trained network.
    Translate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        attrs: Option<String>,
    },
    /// Edit the image of a seeded latent toward target attributes.
    Manipulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        attrs: String,
    },
    /// Verify a dataset against its world and summarize artifacts.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
}

/// Parses `argv` (including the program name), runs the command and writes
/// the JSON summary to `out`. Returns the process exit code.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { 0 } else { EXIT_USAGE };
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            let _ = writeln!(out, "{summary}");
            0
        }
        Err(e) => {
            let obj = json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            let _ = writeln!(out, "{obj}");
            EXIT_RUNTIME
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => parse_config(&std::fs::read_to_string(p)?),
        None => Ok(RunConfig::default()),
    }
}

/// A path from the flag, else from the config, else an error.
fn path_for(flag: &Option<PathBuf>, config: &Option<String>, what: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| config.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::InvalidConfig(format!("no {what} path given")))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn parse_attrs(text: &str, d_sem: usize) -> Result<Vec<f64>> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad attribute value `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != d_sem {
        return Err(Error::DimensionMismatch {
            expected: d_sem,
            actual: values.len(),
        });
    }
    Ok(values)
}

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

struct Ctx {
    config: RunConfig,
}

impl Ctx {
    fn world(&self, common: &Common) -> Result<ToyWorld> {
        persist::load_world(&path_for(&common.world, &self.config.world_path, "world")?)
    }

    fn pairs(&self, common: &Common, world: &ToyWorld) -> Result<crate::world::PairDataset> {
        let ds = persist::load_pairs(&path_for(&common.pairs, &self.config.pairs_path, "pairs")?)?;
        ds.check_world(world)?;
        Ok(ds)
    }

    fn prompts(&self, common: &Common) -> Result<PromptPair> {
        persist::load_prompts(&path_for(
            &common.prompts,
            &self.config.prompts_path,
            "prompts",
        )?)
    }
}

fn checkpoint_net(path: &Path, world: &ToyWorld) -> Result<C2SNetwork> {
    let net = persist::load_checkpoint(path)?.net;
    if net.width() != world.config().d_emb {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint width {} does not match world width {}",
            net.width(),
            world.config().d_emb
        )));
    }
    Ok(net)
}

fn dispatch(command: Command) -> Result<Value> {
    match command {
        Command::GenWorld { common } => {
            let mut config = load_config(&common)?;
            if let Some(s) = common.seed {
                config.world.seed = s;
            }
            let ctx = Ctx { config };
            let out = path_for(&common.out, &ctx.config.world_path, "output")?;
            let world = ToyWorld::new(ctx.config.world.clone())?;
            persist::save_world(&out, &world)?;
            Ok(json!({
                "command": "gen-world",
                "out": out,
                "fingerprint": hex(world.fingerprint()),
                "config": world.config(),
            }))
        }
        Command::GenPairs { common, n } => {
            let ctx = Ctx {
                config: load_config(&common)?,
            };
            let world = ctx.world(&common)?;
            let n = n.unwrap_or(ctx.config.n_pairs);
            let seed = common.seed.unwrap_or(ctx.config.pair_seed);
            let out = path_for(&common.out, &ctx.config.pairs_path, "output")?;
            let ds = world.generate_pairs(n, seed)?;
            let bytes = persist::encode_pairs(&ds)?;
            std::fs::write(&out, &bytes)?;
            Ok(json!({
                "command": "gen-pairs",
                "out": out,
                "n": n,
                "seed": seed,
                "fingerprint": hex(ds.fingerprint),
                "sha256": sha256_hex(&bytes),
            }))
        }
        Command::ComputePrompts { common, n, attrs } => {
            let ctx = Ctx {
                config: load_config(&common)?,
            };
            let world = ctx.world(&common)?;
            let images: Vec<Embedding> = if common.pairs.is_some() && n.is_none() {
                ctx.pairs(&common, &world)?.cie_embeddings()?
            } else {
                let seed = common.seed.unwrap_or(ctx.config.pair_seed);
                world
                    .generate_pairs(n.unwrap_or(DEFAULT_PROMPT_SAMPLES), seed)?
                    .cie_embeddings()?
            };
            let (text_attrs, source) = match &attrs {
                Some(a) => (parse_attrs(a, world.config().d_sem)?, format!("attrs:{a}")),
                None => (world.neutral_attributes(), "neutral".to_string()),
            };
            let prompts = PromptPair::new(
                world.encode_text(&text_attrs)?,
                compute_set_prompt(&images, Modality::Image)?,
                PromptProvenance {
                    text_source: source,
                    image_set_size: images.len(),
                },
            )?;
            let out = path_for(&common.out, &ctx.config.prompts_path, "output")?;
            persist::save_prompts(&out, &prompts)?;
            Ok(json!({
                "command": "compute-prompts",
                "out": out,
                "image_set_size": images.len(),
                "text_source": prompts.provenance.text_source,
            }))
        }
        Command::Train { common } => {
            let mut config = load_config(&common)?;
            if let Some(s) = common.seed {
                config.train.data_seed = s;
            }
            let ctx = Ctx { config };
            let world = ctx.world(&common)?;
            let ds = ctx.pairs(&common, &world)?;
            let out = path_for(&common.out, &ctx.config.ckpt_path, "output")?;
            let mut rng = SeededRng::new(ctx.config.train.init_seed);
            let mut net = C2SNetwork::build(ctx.config.architecture(), &mut rng)?;
            let report = train(&mut net, &ds, &world, &ctx.config.train)?;
            let bytes = persist::encode_checkpoint(&net, Some(&report.optimizer))?;
            std::fs::write(&out, &bytes)?;
            // report metrics of the network as stored, so `eval` reproduces them
            let stored = persist::decode_checkpoint(&bytes)?.net;
            let holdout: Vec<PairRecord> = report
                .holdout_indices
                .iter()
                .map(|&i| ds.records[i].clone())
                .collect();
            let mut metrics = evaluate(&stored, &world, &holdout)?;
            metrics.history = report.metrics.history;
            Ok(json!({
                "command": "train",
                "out": out,
                "checkpoint_sha256": sha256_hex(&bytes),
                "fc_layers": net.count_fc_layers(),
                "holdout_size": report.holdout_indices.len(),
                "metrics": metrics,
            }))
        }
        Command::Eval { common, ckpt } => {
            let ctx = Ctx {
                config: load_config(&common)?,
            };
            let world = ctx.world(&common)?;
            let ds = ctx.pairs(&common, &world)?;
            let net = checkpoint_net(&ckpt, &world)?;
            let (_, holdout) = split_holdout(ds.len(), &ctx.config.train)?;
            let records: Vec<PairRecord> = holdout.iter().map(|&i| ds.records[i].clone()).collect();
            let metrics = evaluate(&net, &world, &records)?;
            Ok(json!({
                "command": "eval",
                "holdout_size": records.len(),
                "metrics": metrics,
            }))
        }
        Command::Translate {
            common,
            ckpt,
            alpha,
            attrs,
        } => {
            let ctx = Ctx {
                config: load_config(&common)?,
            };
            let world = ctx.world(&common)?;
            let prompts = ctx.prompts(&common)?;
            let net = checkpoint_net(&ckpt, &world)?;
            let attrs = match attrs {
                Some(a) => parse_attrs(&a, world.config().d_sem)?,
                None => world.neutral_attributes(),
            };
            let mut projection = ctx.config.projection;
            if let Some(a) = alpha {
                projection.alpha_translate = a;
                projection.validate()?;
            }
            let t = translate(
                &world,
                &prompts,
                &net,
                &TranslateInput::Attributes(attrs),
                Some(projection.alpha_translate),
                projection.renormalize_output,
            )?;
            if let Some(out) = common.out.clone().or(ctx
                .config
                .out_path
                .as_ref()
                .map(PathBuf::from))
            {
                std::fs::write(out, persist::json::to_json(&t)?)?;
            }
            Ok(json!({
                "command": "translate",
                "alpha": projection.alpha_translate,
                "similarity": t.similarity,
                "se": t.se,
            }))
        }
        Command::Manipulate {
            common,
            ckpt,
            alpha,
            attrs,
        } => {
            let ctx = Ctx {
                config: load_config(&common)?,
            };
            let world = ctx.world(&common)?;
            let net = checkpoint_net(&ckpt, &world)?;
            let alpha = alpha.unwrap_or(ctx.config.alpha_manipulate);
            let seed = common.seed.unwrap_or(0);
            let z = crate::embedding::sample_latent(&mut SeededRng::new(seed), world.config().d_z)?;
            let cie_origin = world.encode_image(&world.generate(z.values())?)?;
            let cte_origin = world.encode_text(&world.attributes_of(z.values())?)?;
            let cte_target = world.encode_text(&parse_attrs(&attrs, world.config().d_sem)?)?;
            let renormalize = ctx.config.projection.renormalize_output;
            let cie_target = manipulate(&cie_origin, &cte_origin, &cte_target, alpha, renormalize)?;
            let se = net
                .project(&Matrix::from_rows(&[cie_target.values()])?)?
                .into_data();
            let rebuilt = world.encode_image(&world.generate(&se)?)?;
            let record = json!({
                "command": "manipulate",
                "seed": seed,
                "alpha": alpha,
                "origin_se": z.values(),
                "cie_origin": cie_origin.values(),
                "cie_target": cie_target.values(),
                "se": se,
                "similarity_to_target": crate::embedding::cosine_similarity(&cie_target, &rebuilt)?,
            });
            if let Some(out) = common.out.clone().or(ctx
                .config
                .out_path
                .as_ref()
                .map(PathBuf::from))
            {
                std::fs::write(out, persist::json::to_json(&record)?)?;
            }
            Ok(record)
        }
        Command::Report { common, ckpt } => {
            let ctx = Ctx {
                config: load_config(&common)?,
            };
            let world = ctx.world(&common)?;
            let fingerprint_ok = world.compute_fingerprint() == world.fingerprint();
            let mut summary = json!({
                "command": "report",
                "world_fingerprint": hex(world.fingerprint()),
                "world_fingerprint_ok": fingerprint_ok,
            });
            if common.pairs.is_some() || ctx.config.pairs_path.is_some() {
                let path = path_for(&common.pairs, &ctx.config.pairs_path, "pairs")?;
                let bytes = std::fs::read(&path)?;
                let ds = persist::decode_pairs(&bytes)?;
                let matches_world = ds.check_world(&world).is_ok();
                let regenerated = if matches_world {
                    let again = world.generate_pairs(ds.len(), ds.generation_seed)?;
                    persist::encode_pairs(&again)? == bytes
                } else {
                    false
                };
                summary["pairs"] = json!({
                    "n": ds.len(),
                    "generation_seed": ds.generation_seed,
                    "fingerprint": hex(ds.fingerprint),
                    "matches_world": matches_world,
                    "regenerates_identically": regenerated,
                });
            }
            if let Some(path) = ckpt {
                let ck = persist::load_checkpoint(&path)?;
                summary["checkpoint"] = json!({
                    "architecture": ck.net.architecture(),
                    "fc_layers": ck.net.count_fc_layers(),
                    "parameters": ck.net.network().params().trainable_count(),
                    "optimizer_step": ck.optimizer.map(|a| a.step),
                });
            }
            Ok(summary)
        }
    }
}
