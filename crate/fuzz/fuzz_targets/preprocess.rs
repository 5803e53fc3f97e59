#![no_main]

use libfuzzer_sys::fuzz_target;
use mlec::preprocess::{pipeline, PreprocessConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let cfg = PreprocessConfig::default();
    if let Ok(once) = pipeline(text, &cfg) {
        assert_eq!(pipeline(once.as_str(), &cfg).expect("clean text stays non-empty"), once);
    }
});
