#![no_main]

use libfuzzer_sys::fuzz_target;
use rankcorrect::train::{TrainConfig, TrainOverrides};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(o) = TrainOverrides::from_toml(text) {
        let mut cfg = TrainConfig::default();
        o.apply(&mut cfg);
        let _ = cfg.validate(100);
    }
});
