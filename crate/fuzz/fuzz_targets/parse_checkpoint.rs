#![no_main]

use libfuzzer_sys::fuzz_target;
use ndtt::parse_checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ck) = parse_checkpoint(text) {
        let again = parse_checkpoint(&ck.to_json()).expect("serialized checkpoints parse");
        assert_eq!(again, ck);
    }
});
