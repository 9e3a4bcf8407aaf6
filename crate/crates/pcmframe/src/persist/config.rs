//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments (whole-line or trailing) are ignored. Every
//! key is optional and falls back to its default; unknown or repeated keys
//! are errors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::c2s::{Architecture, C2SConfig};
use crate::error::{Error, Result};
use crate::prompt::{ProjectionConfig, ALPHA_TRANSLATE_RANGE};
use crate::training::TrainConfig;
use crate::world::ToyWorldConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchKind {
    Dense,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub world: ToyWorldConfig,
    pub n_pairs: usize,
    pub pair_seed: u64,
    pub arch: ArchKind,
    pub n_blocks: usize,
    pub dropout_rate: f64,
    /// FC layer count of the plain baseline.
    pub n_fc: usize,
    pub train: TrainConfig,
    pub projection: ProjectionConfig,
    pub alpha_manipulate: f64,
    pub world_path: Option<String>,
    pub pairs_path: Option<String>,
    pub ckpt_path: Option<String>,
    pub prompts_path: Option<String>,
    pub out_path: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c2s = C2SConfig::default();
        Self {
            world: ToyWorldConfig::default(),
            n_pairs: 20000,
            pair_seed: 7,
            arch: ArchKind::Dense,
            n_blocks: c2s.n_blocks,
            dropout_rate: c2s.dropout_rate,
            n_fc: 54,
            train: TrainConfig::default(),
            projection: ProjectionConfig::default(),
            alpha_manipulate: 0.3,
            world_path: None,
            pairs_path: None,
            ckpt_path: None,
            prompts_path: None,
            out_path: None,
        }
    }
}

impl RunConfig {
    /// The network width equals the embedding and latent width.
    pub fn architecture(&self) -> Architecture {
        let d = self.world.d_emb;
        match self.arch {
            ArchKind::Dense => Architecture::Dense(C2SConfig {
                d,
                n_blocks: self.n_blocks,
                dropout_rate: self.dropout_rate,
            }),
            ArchKind::Plain => Architecture::PlainMlp { d, n_fc: self.n_fc },
        }
    }

    /// Cross-field and range checks, reported against the offending key.
    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, message: String| Error::RangeError {
            key: key.into(),
            message,
        };
        let w = &self.world;
        for (key, v) in [
            ("d_z", w.d_z),
            ("d_img", w.d_img),
            ("d_sem", w.d_sem),
            ("d_emb", w.d_emb),
            ("hidden", w.hidden),
        ] {
            if v < 2 {
                return Err(range(key, format!("{v} < 2")));
            }
        }
        if w.d_z != w.d_emb {
            return Err(range(
                "d_z",
                format!(
                    "latent width {} must equal embedding width {}",
                    w.d_z, w.d_emb
                ),
            ));
        }
        if !(w.gap_scale >= 0.0) {
            return Err(range("gap_scale", format!("{} < 0", w.gap_scale)));
        }
        if !(w.semantic_gain > 0.0) {
            return Err(range("semantic_gain", format!("{} <= 0", w.semantic_gain)));
        }
        if self.n_blocks == 0 {
            return Err(range("n_blocks", "must be >= 1".into()));
        }
        if self.n_fc == 0 {
            return Err(range("n_fc", "must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(range(
                "dropout_rate",
                format!("{} outside [0, 1)", self.dropout_rate),
            ));
        }
        let t = &self.train;
        if t.iterations == 0 {
            return Err(range("iterations", "must be >= 1".into()));
        }
        if t.batch_size < 2 {
            return Err(range("batch_size", format!("{} < 2", t.batch_size)));
        }
        if !(t.lr_min > 0.0) {
            return Err(range("lr_min", format!("{} <= 0", t.lr_min)));
        }
        if !(t.lr_max > t.lr_min) {
            return Err(range(
                "lr_max",
                format!("{} <= lr_min {}", t.lr_max, t.lr_min),
            ));
        }
        for (key, l) in [
            ("lambda_sem_cons", t.weights.sem_cons),
            ("lambda_l1", t.weights.l1),
            ("lambda_reg", t.weights.reg),
        ] {
            if !(l >= 0.0) {
                return Err(range(key, format!("{l} < 0")));
            }
        }
        if !(t.holdout_fraction > 0.0 && t.holdout_fraction < 1.0) {
            return Err(range(
                "holdout_fraction",
                format!("{} outside (0, 1)", t.holdout_fraction),
            ));
        }
        let (lo, hi) = ALPHA_TRANSLATE_RANGE;
        let a = self.projection.alpha_translate;
        if !(lo..=hi).contains(&a) {
            return Err(range("alpha", format!("{a} outside [{lo}, {hi}]")));
        }
        if !(self.alpha_manipulate >= 0.0) {
            return Err(range(
                "alpha_manipulate",
                format!("{} < 0", self.alpha_manipulate),
            ));
        }
        Ok(())
    }
}

/// Every accepted key, in rendering order.
pub const KEYS: &[&str] = &[
    "world_seed",
    "d_z",
    "d_img",
    "d_sem",
    "d_emb",
    "hidden",
    "gap_scale",
    "semantic_gain",
    "n_pairs",
    "pair_seed",
    "arch",
    "n_blocks",
    "dropout_rate",
    "n_fc",
    "iterations",
    "batch_size",
    "lr_max",
    "lr_min",
    "lambda_sem_cons",
    "lambda_l1",
    "lambda_reg",
    "data_seed",
    "init_seed",
    "holdout_fraction",
    "alpha",
    "alpha_manipulate",
    "renormalize_output",
    "world_path",
    "pairs_path",
    "ckpt_path",
    "prompts_path",
    "out_path",
];

fn type_error(line: usize, key: &str, expected: &str, value: &str) -> Error {
    Error::TypeError {
        line,
        message: format!("`{key}` expects {expected}, got `{value}`"),
    }
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| type_error(line, key, "a non-negative integer", v))
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| type_error(line, key, "a non-negative integer", v))
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(type_error(line, key, "a finite number", v)),
    }
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(type_error(line, key, "`true` or `false`", v)),
    }
}

fn parse_path(line: usize, key: &str, v: &str) -> Result<String> {
    if v.is_empty() {
        return Err(type_error(line, key, "a non-empty path", v));
    }
    Ok(v.to_string())
}

impl RunConfig {
    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let w = &mut self.world;
        let t = &mut self.train;
        match key {
            "world_seed" => w.seed = parse_u64(line, key, v)?,
            "d_z" => w.d_z = parse_usize(line, key, v)?,
            "d_img" => w.d_img = parse_usize(line, key, v)?,
            "d_sem" => w.d_sem = parse_usize(line, key, v)?,
            "d_emb" => w.d_emb = parse_usize(line, key, v)?,
            "hidden" => w.hidden = parse_usize(line, key, v)?,
            "gap_scale" => w.gap_scale = parse_f64(line, key, v)?,
            "semantic_gain" => w.semantic_gain = parse_f64(line, key, v)?,
            "n_pairs" => self.n_pairs = parse_usize(line, key, v)?,
            "pair_seed" => self.pair_seed = parse_u64(line, key, v)?,
            "arch" => {
                self.arch = match v {
                    "dense" => ArchKind::Dense,
                    "plain" => ArchKind::Plain,
                    _ => return Err(type_error(line, key, "`dense` or `plain`", v)),
                }
            }
            "n_blocks" => self.n_blocks = parse_usize(line, key, v)?,
            "dropout_rate" => self.dropout_rate = parse_f64(line, key, v)?,
            "n_fc" => self.n_fc = parse_usize(line, key, v)?,
            "iterations" => t.iterations = parse_usize(line, key, v)?,
            "batch_size" => t.batch_size = parse_usize(line, key, v)?,
            "lr_max" => t.lr_max = parse_f64(line, key, v)?,
            "lr_min" => t.lr_min = parse_f64(line, key, v)?,
            "lambda_sem_cons" => t.weights.sem_cons = parse_f64(line, key, v)?,
            "lambda_l1" => t.weights.l1 = parse_f64(line, key, v)?,
            "lambda_reg" => t.weights.reg = parse_f64(line, key, v)?,
            "data_seed" => t.data_seed = parse_u64(line, key, v)?,
            "init_seed" => t.init_seed = parse_u64(line, key, v)?,
            "holdout_fraction" => t.holdout_fraction = parse_f64(line, key, v)?,
            "alpha" => self.projection.alpha_translate = parse_f64(line, key, v)?,
            "alpha_manipulate" => self.alpha_manipulate = parse_f64(line, key, v)?,
            "renormalize_output" => self.projection.renormalize_output = parse_bool(line, key, v)?,
            "world_path" => self.world_path = Some(parse_path(line, key, v)?),
            "pairs_path" => self.pairs_path = Some(parse_path(line, key, v)?),
            "ckpt_path" => self.ckpt_path = Some(parse_path(line, key, v)?),
            "prompts_path" => self.prompts_path = Some(parse_path(line, key, v)?),
            "out_path" => self.out_path = Some(parse_path(line, key, v)?),
            _ => {
                return Err(Error::UnknownKey {
                    key: key.to_string(),
                    line,
                })
            }
        }
        Ok(())
    }
}

/// Parses configuration text, applying defaults for absent keys.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::TypeError {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if seen.contains(&key) {
            return Err(Error::TypeError {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        config.set(line, key, value)?;
        seen.push(key);
    }
    config.validate()?;
    Ok(config)
}

/// Renders every key explicitly; unset paths are omitted.
pub fn render_config(c: &RunConfig) -> String {
    let mut out = String::new();
    let w = &c.world;
    let t = &c.train;
    let arch = match c.arch {
        ArchKind::Dense => "dense",
        ArchKind::Plain => "plain",
    };
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    put("world_seed", w.seed.to_string());
    put("d_z", w.d_z.to_string());
    put("d_img", w.d_img.to_string());
    put("d_sem", w.d_sem.to_string());
    put("d_emb", w.d_emb.to_string());
    put("hidden", w.hidden.to_string());
    put("gap_scale", format!("{:?}", w.gap_scale));
    put("semantic_gain", format!("{:?}", w.semantic_gain));
    put("n_pairs", c.n_pairs.to_string());
    put("pair_seed", c.pair_seed.to_string());
    put("arch", arch.to_string());
    put("n_blocks", c.n_blocks.to_string());
    put("dropout_rate", format!("{:?}", c.dropout_rate));
    put("n_fc", c.n_fc.to_string());
    put("iterations", t.iterations.to_string());
    put("batch_size", t.batch_size.to_string());
    put("lr_max", format!("{:?}", t.lr_max));
    put("lr_min", format!("{:?}", t.lr_min));
    put("lambda_sem_cons", format!("{:?}", t.weights.sem_cons));
    put("lambda_l1", format!("{:?}", t.weights.l1));
    put("lambda_reg", format!("{:?}", t.weights.reg));
    put("data_seed", t.data_seed.to_string());
    put("init_seed", t.init_seed.to_string());
    put("holdout_fraction", format!("{:?}", t.holdout_fraction));
    put("alpha", format!("{:?}", c.projection.alpha_translate));
    put("alpha_manipulate", format!("{:?}", c.alpha_manipulate));
    put(
        "renormalize_output",
        c.projection.renormalize_output.to_string(),
    );
    for (k, v) in [
        ("world_path", &c.world_path),
        ("pairs_path", &c.pairs_path),
        ("ckpt_path", &c.ckpt_path),
        ("prompts_path", &c.prompts_path),
        ("out_path", &c.out_path),
    ] {
        if let Some(p) = v {
            put(k, p.clone());
        }
    }
    out
}
