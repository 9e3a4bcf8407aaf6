//! On-disk formats: the `key = value` run configuration, the `PCMF`
//! checkpoint and `PCMD` pair-dataset binaries, and JSON documents for
//! worlds, prompts and reports.
//!
//! Every `decode_*`/`parse_*` function takes untrusted bytes or text and
//! either returns a validated value or an error; none of them panic.

mod bytes;
pub mod checkpoint;
pub mod config;
pub mod json;
pub mod pairs;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
};
pub use config::{parse_config, render_config, ArchKind, RunConfig};
pub use json::{
    decode_prompts, decode_world, encode_prompts, encode_world, load_prompts, load_world,
    save_prompts, save_world, WorldFile,
};
pub use pairs::{decode_pairs, encode_pairs, load_pairs, save_pairs};
