#![no_main]

use libfuzzer_sys::fuzz_target;
use rankcorrect::data::PrepConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = PrepConfig::from_toml(text) {
        let _ = cfg.hash();
    }
});
