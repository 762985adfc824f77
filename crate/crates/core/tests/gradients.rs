use std::f64::consts::PI;
use std::time::Instant;

use isotherm::assembly::{BoundaryConditions, Materials, Nitsche};
use isotherm::design_field::{DensityField, SymmetryMap, SymmetryMode};
use isotherm::geometry::{build_annulus_model, refine_model};
use isotherm::materials::{MaterialLaw, KAPPA_INSULATOR, KAPPA_IRON};
use isotherm::objectives::MaxTemperature;
use isotherm::optimizer::{gradient_audit, Oracle};
use isotherm::problem::{DesignProblem, ObjectiveKind, ObjectiveSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(kind: ObjectiveKind, chi: f64, inner: f64, constraint: bool, sym: SymmetryMode) -> DesignProblem {
    let base = build_annulus_model(140.0, 10.0, 50.0).unwrap();
    let field = DensityField::design_mesh(&base.patches[1], 3, 4).unwrap();
    let model = refine_model(&base, 4).unwrap();
    let symmetry = SymmetryMap::build(&field, sym).unwrap();
    let mats = Materials::new(MaterialLaw::constant(inner), MaterialLaw::emt(), MaterialLaw::constant(KAPPA_IRON)).unwrap();
    let mut bcs = vec![BoundaryConditions::horizontal(300.0, 200.0)];
    if kind == ObjectiveKind::Bidirectional {
        bcs.push(BoundaryConditions::vertical(300.0, 200.0));
    }
    let c = constraint.then(|| MaxTemperature::new([0.0, 0.0], 15.0, 220.0, 1.5).unwrap());
    DesignProblem::new(
        model,
        field,
        symmetry,
        mats,
        &MaterialLaw::constant(KAPPA_INSULATOR),
        bcs,
        ObjectiveSpec { kind, chi },
        c,
        Nitsche::default(),
    )
    .unwrap()
}

fn audit(name: &str, p: &DesignProblem) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(0.2..0.8)).collect();
    let t = Instant::now();
    let r = gradient_audit(p, &x, 1e-6).unwrap();
    let worst = r
        .adjoint
        .iter()
        .zip(&r.finite_difference)
        .map(|(a, f)| (a, f, (a - f).abs() / f.abs().max(1e-12)))
        .fold((0.0, 0.0, 0.0), |m, (a, f, e)| if e > m.2 { (*a, *f, e) } else { m });
    eprintln!(
        "{name}: n={} obj {:e} constraints {:?} worst adj {:e} fd {:e} ({:?})",
        p.dim(),
        r.objective,
        r.constraints,
        worst.0,
        worst.1,
        t.elapsed()
    );
    r.max_discrepancy()
}

#[test]
fn adjoint_gradients_match_central_differences() {
    let ins = KAPPA_INSULATOR;
    let cases = [
        ("cloak", problem(ObjectiveKind::Cloak, 0.0, ins, false, SymmetryMode::Xy)),
        ("cloak+penalty", problem(ObjectiveKind::Cloak, 1.0, ins, false, SymmetryMode::Xy)),
        ("concentrator", problem(ObjectiveKind::Concentrator, 0.0, KAPPA_IRON, false, SymmetryMode::Xy)),
        ("rotator", problem(ObjectiveKind::Rotator { theta: PI / 2.0 }, 0.0, KAPPA_IRON, false, SymmetryMode::None)),
        ("cloaked sensor", problem(ObjectiveKind::CloakedSensor, 0.0, 130.0, false, SymmetryMode::Xy)),
        ("cloak-concentrator", problem(ObjectiveKind::CloakConcentrator, 0.0, KAPPA_IRON, false, SymmetryMode::Xy)),
        ("bidirectional", problem(ObjectiveKind::Bidirectional, 0.0, KAPPA_IRON, false, SymmetryMode::Xy)),
        ("cloak+tau", problem(ObjectiveKind::Cloak, 0.0, ins, true, SymmetryMode::X)),
    ];
    let mut worst: f64 = 0.0;
    for (n, p) in &cases {
        worst = worst.max(audit(n, p));
    }
    assert!(worst < 1e-4, "{worst}");
}
