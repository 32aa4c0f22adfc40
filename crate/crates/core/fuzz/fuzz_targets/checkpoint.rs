#![no_main]

use libfuzzer_sys::fuzz_target;
use rankcorrect::AnyModel;

fuzz_target!(|data: &[u8]| {
    // anything that decodes must survive a re-encode unchanged
    match AnyModel::from_bytes(data) {
        Ok(AnyModel::F32(m)) => {
            assert_eq!(AnyModel::from_bytes(&m.to_bytes()).unwrap(), AnyModel::F32(m));
        }
        Ok(AnyModel::F64(m)) => {
            assert_eq!(AnyModel::from_bytes(&m.to_bytes()).unwrap(), AnyModel::F64(m));
        }
        Err(_) => {}
    }
});
