#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use niekf::io::parse_trace;

fuzz_target!(|data: &[u8]| {
    let _ = parse_trace(data, Path::new("trace.csv"));
});
