#![no_main]

use libfuzzer_sys::fuzz_target;
use ndtt::logic::parse_ground_atom;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(atom) = parse_ground_atom(text) {
        assert_eq!(parse_ground_atom(&atom.to_string()).expect("printed atoms parse"), atom);
    }
});
