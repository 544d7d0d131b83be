#![no_main]

use libfuzzer_sys::fuzz_target;
use ndtt::logic::{parse_program, Program, TimeMode};
use ndtt::Model;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_program(text);
    // Valid programs must also lay out parameters in both modes.
    if Program::from_source(text).is_ok() {
        for mode in [TimeMode::Continuous, TimeMode::Discrete] {
            let _ = Model::from_source(text, mode);
        }
    }
});
