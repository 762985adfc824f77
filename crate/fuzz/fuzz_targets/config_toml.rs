//! Run configuration TOML: parsing and validation must reject, never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = isotherm::config::RunConfig::parse(s);
    }
});
