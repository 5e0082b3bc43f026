//! Arbitrary bytes must never panic the PLY parser, and anything it accepts
//! must survive a re-encode round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;
use springsim::io::{encode_ply, parse_ply};

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = parse_ply(data) {
        let bytes = encode_ply(&cloud);
        let again = parse_ply(&bytes).expect("accepted cloud must re-parse");
        assert_eq!(again.positions.len(), cloud.positions.len());
    }
});
