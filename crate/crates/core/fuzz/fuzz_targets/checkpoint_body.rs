//! Checkpoint bodies behind a valid container, so the checksum never masks
//! the structural decoder.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rankcorrect::codec::seal;
use rankcorrect::model::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
use rankcorrect::AnyModel;

fuzz_target!(|body: &[u8]| {
    let bytes = seal(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, [0; 8], body);
    if let Ok(m) = AnyModel::from_bytes(&bytes) {
        let again = match &m {
            AnyModel::F32(x) => x.to_bytes(),
            AnyModel::F64(x) => x.to_bytes(),
        };
        assert_eq!(AnyModel::from_bytes(&again).unwrap(), m);
    }
});
