#![no_main]

use libfuzzer_sys::fuzz_target;
use mlec::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml(text) {
        let _ = cfg.violations();
        let again = RunConfig::from_toml(&cfg.to_toml()).expect("written config parses");
        assert_eq!(again.to_toml(), cfg.to_toml());
    }
});
