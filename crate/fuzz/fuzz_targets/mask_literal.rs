#![no_main]

use libfuzzer_sys::fuzz_target;
use ramvid::MaskSpec;

fuzz_target!(|data: &[u8]| {
    let Some((&len, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let len = len as usize;
    if let Ok(mask) = MaskSpec::parse(text, len) {
        assert_eq!(mask.conditioning().len() + mask.unknown().len(), len);
        assert_eq!(MaskSpec::parse(&mask.to_string(), len).unwrap(), mask);
    }
});
