//! Interaction log parsing. The first byte picks CSV or TSV.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rankcorrect::data::{parse_interactions, InputFormat};

fuzz_target!(|data: &[u8]| {
    let Some((&sel, body)) = data.split_first() else {
        return;
    };
    let format = if sel & 1 == 0 { InputFormat::Csv } else { InputFormat::Tsv };
    if let Ok(log) = parse_interactions(body, format) {
        for r in &log.records {
            assert!(!r.user_key.is_empty() && !r.item_key.is_empty());
        }
    }
});
