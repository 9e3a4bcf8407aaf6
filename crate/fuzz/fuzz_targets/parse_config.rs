#![no_main]

use libfuzzer_sys::fuzz_target;
use pcmframe::persist::{parse_config, render_config};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_config(text) {
        let rendered = render_config(&config);
        assert_eq!(parse_config(&rendered).as_ref(), Ok(&config));
    }
});
