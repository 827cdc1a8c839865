#![no_main]

use libfuzzer_sys::fuzz_target;
use niekf::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_toml_str(text) {
            // anything accepted must survive a round trip
            let again = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
            assert_eq!(again.to_toml_string(), cfg.to_toml_string());
        }
    }
});
