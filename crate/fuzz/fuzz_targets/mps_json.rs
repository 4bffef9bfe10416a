//! Fuzzes the boundary-MPS JSON decoder: arbitrary input must either be
//! rejected with an error or parse into a chain whose serialization is a
//! fixed point of the decoder.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rewindq::mps::BoundaryMps;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(chain) = BoundaryMps::from_json(text) else {
        return;
    };
    let json = chain.to_json().expect("accepted chain serializes");
    let reparsed = BoundaryMps::from_json(&json).expect("serialized chain reparses");
    let rejson = reparsed.to_json().expect("reparsed chain serializes");
    assert_eq!(json, rejson, "serialization is stable across a round trip");
});
