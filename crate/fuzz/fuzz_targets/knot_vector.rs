//! Knot vector text form: accepted vectors evaluate to a partition of unity.

#![no_main]

use isotherm::splines::KnotVector;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(kv) = KnotVector::parse(s) else { return };
    // anything accepted must evaluate to a partition of unity
    let (a, b) = (kv.first(), kv.last());
    for k in 0..=8 {
        let s = k as f64 / 8.0;
        let u = (a * (1.0 - s) + b * s).clamp(a, b);
        let (_, n) = kv.eval_basis(u).expect("accepted knot vector evaluates");
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
});
