#![no_main]

//! Fuzz the binary checkpoint reader. Every length field is attacker
//! controlled; decoding must validate before allocating and never panic.

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((spec, params)) = oscinet::io::checkpoint_from_bytes(data) {
        // decoded containers must re-encode
        let _ = oscinet::io::checkpoint_to_bytes(&spec, &params);
    }
});
