#![no_main]

use libfuzzer_sys::fuzz_target;
use ndtt::data::parse_events;
use ndtt::logic::TimeMode;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(seq) = parse_events(text, "fuzz") {
        let _ = seq.check_mode(TimeMode::Discrete);
        // Accepted files survive a write and re-read unchanged.
        let again = parse_events(&seq.to_jsonl(), "fuzz").expect("serialized sequences parse");
        assert_eq!(again, seq);
    }
});
