#![no_main]

use libfuzzer_sys::fuzz_target;
use springsim::io::parse_topology;

fuzz_target!(|data: &[u8]| {
    let _ = parse_topology(data);
});
