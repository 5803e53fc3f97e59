#![no_main]

use libfuzzer_sys::fuzz_target;
use mlec::preprocess::parse_symbol_map;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_symbol_map(text);
    }
});
