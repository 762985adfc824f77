//! Density coefficient CSV: anything accepted has one finite value per row.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = isotherm::io::parse_density_csv(s) {
            assert_eq!(t.positions.len(), t.values.len());
            assert!(t.values.iter().all(|v| v.is_finite()));
        }
    }
});
