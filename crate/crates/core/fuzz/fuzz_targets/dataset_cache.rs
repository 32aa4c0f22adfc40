#![no_main]

use libfuzzer_sys::fuzz_target;
use rankcorrect::data::Artifacts;

fuzz_target!(|data: &[u8]| {
    if let Ok(art) = Artifacts::from_bytes(data, None) {
        let again = Artifacts::from_bytes(&art.to_bytes(), Some(&art.config)).unwrap();
        assert_eq!(again, art);
    }
});
