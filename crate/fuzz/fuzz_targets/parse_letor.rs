#![no_main]

use csso::harness::parse_letor_str;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(queries) = parse_letor_str(text) {
        // whatever parses must survive a write and re-parse unchanged
        let mut buf = Vec::new();
        if csso::harness::write_raw_letor(&mut buf, &queries).is_ok() {
            let back = parse_letor_str(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(back.len(), queries.len());
        }
    }
});
