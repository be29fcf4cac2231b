#![no_main]

use libfuzzer_sys::fuzz_target;
use ramvid::training::{decode_trainer, encode_trainer};

fuzz_target!(|data: &[u8]| {
    if let Ok(trainer) = decode_trainer(data) {
        let bytes = encode_trainer(&trainer);
        let again = decode_trainer(&bytes).unwrap();
        assert_eq!(encode_trainer(&again), bytes);
    }
});
