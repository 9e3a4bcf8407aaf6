#![no_main]

use libfuzzer_sys::fuzz_target;
use pcmframe::persist::{decode_pairs, encode_pairs};

fuzz_target!(|data: &[u8]| {
    if let Ok(dataset) = decode_pairs(data) {
        assert_eq!(encode_pairs(&dataset).unwrap(), data);
    }
});
