#![no_main]

use libfuzzer_sys::fuzz_target;
use ramvid::config::KeyValues;
use ramvid::training::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(kv) = KeyValues::parse(text) {
        let printed = kv.to_string();
        assert_eq!(KeyValues::parse(&printed).unwrap(), kv);
        let _ = TrainConfig::from_key_values(&kv);
    }
});
