#![no_main]

use libfuzzer_sys::fuzz_target;
use springsim::io::parse_similarity;

fuzz_target!(|data: &[u8]| {
    let _ = parse_similarity(data);
});
