#![no_main]

use libfuzzer_sys::fuzz_target;
use pcmframe::persist::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&ckpt.net, ckpt.optimizer.as_ref()).unwrap();
        assert_eq!(bytes, data);
    }
});
