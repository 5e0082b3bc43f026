#![no_main]

use libfuzzer_sys::fuzz_target;
use springsim::io::parse_metric_report;

fuzz_target!(|data: &[u8]| {
    let _ = parse_metric_report(data);
});
