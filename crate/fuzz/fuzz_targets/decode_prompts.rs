#![no_main]

use libfuzzer_sys::fuzz_target;
use pcmframe::persist::{decode_prompts, encode_prompts};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(prompts) = decode_prompts(text) {
        let again = decode_prompts(&encode_prompts(&prompts).unwrap()).unwrap();
        assert_eq!(again, prompts);
    }
});
