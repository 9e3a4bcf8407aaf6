#![no_main]

use libfuzzer_sys::fuzz_target;
use pcmframe::persist::{decode_world, encode_world};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(world) = decode_world(text) {
        let again = decode_world(&encode_world(&world).unwrap()).unwrap();
        assert_eq!(again.fingerprint(), world.fingerprint());
    }
});
