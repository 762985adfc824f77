//! Replays the checked-in fuzz seeds through the same checks as the fuzz
//! targets, so the corpus stays meaningful without a fuzzing toolchain.

use std::fs;
use std::path::PathBuf;

use isotherm::config::RunConfig;
use isotherm::io::parse_density_csv;
use isotherm::splines::KnotVector;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let s = fs::read_to_string(&p).unwrap();
            (p, s)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (_, s) in seeds("config_toml") {
        accepted += RunConfig::parse(&s).is_ok() as usize;
    }
    assert!(accepted > 0);
}

#[test]
fn density_seeds() {
    for (p, s) in seeds("density_csv") {
        if let Ok(t) = parse_density_csv(&s) {
            assert_eq!(t.positions.len(), t.values.len(), "{}", p.display());
            assert!(t.values.iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn knot_seeds() {
    for (p, s) in seeds("knot_vector") {
        let Ok(kv) = KnotVector::parse(&s) else { continue };
        let (a, b) = (kv.first(), kv.last());
        for k in 0..=8 {
            let t = k as f64 / 8.0;
            let u = (a * (1.0 - t) + b * t).clamp(a, b);
            let (_, n) = kv.eval_basis(u).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{}: {n:?}", p.display());
        }
    }
}
