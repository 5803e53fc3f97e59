#![no_main]

use libfuzzer_sys::fuzz_target;
use mlec::corpus::{parse_tsv, to_tsv, EmotionLabelSet};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let schema = EmotionLabelSet::default();
    if let Ok(d) = parse_tsv(text, &schema) {
        let again = to_tsv(&d, &schema).expect("parsed dataset serializes");
        assert_eq!(parse_tsv(&again, &schema).expect("serialized dataset parses"), d);
    }
});
