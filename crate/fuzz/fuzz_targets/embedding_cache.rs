#![no_main]

use libfuzzer_sys::fuzz_target;
use mlec::embeddings::cache::{decode, encode};

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = decode(data) {
        if !c.items.is_empty() {
            assert_eq!(encode(&c.key, &c.items).expect("decoded items encode"), data);
        }
    }
});
