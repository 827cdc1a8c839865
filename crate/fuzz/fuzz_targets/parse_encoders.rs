#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use niekf::io::parse_encoders;

fuzz_target!(|data: &[u8]| {
    let _ = parse_encoders(data, Path::new("encoders.csv"));
});
