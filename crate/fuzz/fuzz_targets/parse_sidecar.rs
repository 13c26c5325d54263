#![no_main]

use csso::harness::sidecar::parse_sidecar_str;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_sidecar_str(text);
    }
});
