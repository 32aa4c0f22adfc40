#![no_main]

use libfuzzer_sys::fuzz_target;
use rankcorrect::codec::seal;
use rankcorrect::data::{Artifacts, CACHE_MAGIC, CACHE_VERSION};

fuzz_target!(|data: &[u8]| {
    if data.len() < 8 {
        return;
    }
    let (tag, body) = data.split_at(8);
    let bytes = seal(CACHE_MAGIC, CACHE_VERSION, tag.try_into().unwrap(), body);
    if let Ok(art) = Artifacts::from_bytes(&bytes, None) {
        assert_eq!(Artifacts::from_bytes(&art.to_bytes(), Some(&art.config)).unwrap(), art);
    }
});
