#![no_main]

//! Fuzz the dataset manifest parser (JSON + semantic validation).

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = oscinet::io::manifest_from_str(text);
    }
});
