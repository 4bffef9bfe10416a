//! Fuzzes the circuit JSON decoder: arbitrary input must either be rejected
//! with an error or parse into a circuit that round-trips losslessly.

#![no_main]

use libfuzzer_sys::fuzz_target;
use rewindq::circuits::Circuit;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(circuit) = Circuit::from_json(text) else {
        return;
    };
    let json = circuit.to_json().expect("accepted circuit serializes");
    let reparsed = Circuit::from_json(&json).expect("serialized circuit reparses");
    assert_eq!(circuit, reparsed, "round trip is lossless");
});
