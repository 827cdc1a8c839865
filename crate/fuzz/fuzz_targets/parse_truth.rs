#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use niekf::io::parse_truth;

fuzz_target!(|data: &[u8]| {
    let _ = parse_truth(data, Path::new("truth.csv"));
});
