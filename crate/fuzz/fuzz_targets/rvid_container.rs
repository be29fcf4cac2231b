#![no_main]

use libfuzzer_sys::fuzz_target;
use ramvid::container::{decode_container, encode_container};

fuzz_target!(|data: &[u8]| {
    if let Ok(batch) = decode_container(data) {
        let bytes = encode_container(&batch);
        assert_eq!(decode_container(&bytes).unwrap(), batch);
    }
});
