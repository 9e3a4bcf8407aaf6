//! JSON documents for worlds and prompt pairs, plus a shared report writer.
//!
//! A world file stores only its configuration and fingerprint; loading
//! regenerates the parameters and checks the fingerprint.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::PromptPair;
use crate::world::{ToyWorld, ToyWorldConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub config: ToyWorldConfig,
    pub fingerprint: u64,
}

fn malformed(e: serde_json::Error) -> Error {
    Error::Malformed(e.to_string())
}

/// Pretty-printed JSON terminated by a newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(malformed)?;
    s.push('\n');
    Ok(s)
}

pub fn encode_world(world: &ToyWorld) -> Result<String> {
    to_json(&WorldFile {
        config: world.config().clone(),
        fingerprint: world.fingerprint(),
    })
}

pub fn decode_world(text: &str) -> Result<ToyWorld> {
    let file: WorldFile = serde_json::from_str(text).map_err(malformed)?;
    let world = ToyWorld::new(file.config)?;
    if world.fingerprint() != file.fingerprint {
        return Err(Error::FingerprintMismatch {
            dataset: file.fingerprint,
            world: world.fingerprint(),
        });
    }
    Ok(world)
}

pub fn encode_prompts(prompts: &PromptPair) -> Result<String> {
    to_json(prompts)
}

/// Parses and re-validates a prompt pair.
pub fn decode_prompts(text: &str) -> Result<PromptPair> {
    let raw: PromptPair = serde_json::from_str(text).map_err(malformed)?;
    PromptPair::new(raw.cte_prompt, raw.cie_prompt, raw.provenance)
}

pub fn save_world(path: &Path, world: &ToyWorld) -> Result<()> {
    std::fs::write(path, encode_world(world)?)?;
    Ok(())
}

pub fn load_world(path: &Path) -> Result<ToyWorld> {
    decode_world(&std::fs::read_to_string(path)?)
}

pub fn save_prompts(path: &Path, prompts: &PromptPair) -> Result<()> {
    std::fs::write(path, encode_prompts(prompts)?)?;
    Ok(())
}

pub fn load_prompts(path: &Path) -> Result<PromptPair> {
    decode_prompts(&std::fs::read_to_string(path)?)
}
