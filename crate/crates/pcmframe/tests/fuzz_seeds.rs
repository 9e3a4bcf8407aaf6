//! Every checked-in fuzz seed must decode and satisfy the same round-trip
//! properties the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use pcmframe::persist::{
    decode_checkpoint, decode_pairs, decode_prompts, decode_world, encode_checkpoint, encode_pairs,
    encode_prompts, encode_world, parse_config, render_config,
};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("seed-")
        })
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn config_seeds() {
    for (path, bytes) in seeds("parse_config") {
        let config =
            parse_config(text(&bytes)).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(parse_config(&render_config(&config)).unwrap(), config);
    }
}

#[test]
fn checkpoint_seeds() {
    for (path, bytes) in seeds("decode_checkpoint") {
        let ckpt = decode_checkpoint(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(ckpt.optimizer.is_some());
        assert_eq!(
            encode_checkpoint(&ckpt.net, ckpt.optimizer.as_ref()).unwrap(),
            bytes
        );
    }
}

#[test]
fn pair_seeds() {
    for (path, bytes) in seeds("decode_pairs") {
        let ds = decode_pairs(&bytes).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(encode_pairs(&ds).unwrap(), bytes);
    }
}

#[test]
fn prompt_seeds() {
    for (_, bytes) in seeds("decode_prompts") {
        let prompts = decode_prompts(text(&bytes)).unwrap();
        assert_eq!(encode_prompts(&prompts).unwrap(), text(&bytes));
    }
}

#[test]
fn world_seeds() {
    for (_, bytes) in seeds("decode_world") {
        let world = decode_world(text(&bytes)).unwrap();
        assert_eq!(encode_world(&world).unwrap(), text(&bytes));
    }
}
