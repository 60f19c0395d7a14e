#![no_main]

//! Fuzz the TOML run-configuration parser: arbitrary text must produce
//! `Ok` or a structured error, never a panic.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = oscinet::config::parse_config(text);
    }
});
