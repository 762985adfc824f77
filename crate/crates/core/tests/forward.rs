use std::time::Instant;

use isotherm::assembly::{BoundaryConditions, Discretization, Materials, Nitsche};
use isotherm::geometry::{
    build_annulus_model, refine_model, Edge, EdgeTag, Interface, InterfaceSide, ModelDims,
    MultiPatchModel, Patch, Region, Side,
};
use isotherm::linsolve::{solve_adjoint, solve_primal};

const L: f64 = 140.0;

fn linear(x: f64) -> f64 {
    300.0 - 100.0 * (x + 0.5 * L) / L
}

/// Relative L2 error against the linear field, by quadrature.
fn l2_error(disc: &Discretization, t: &[f64]) -> f64 {
    let (mut e, mut n) = (0.0, 0.0);
    for b in &disc.bulk {
        for q in 0..b.nqp() {
            let (v, _) = b.eval(q, t);
            let ex = linear(b.x[q][0]);
            e += b.w[q] * (v - ex).powi(2);
            n += b.w[q] * ex * ex;
        }
    }
    (e / n).sqrt()
}

fn square(split: bool) -> MultiPatchModel {
    let h = 0.5 * L;
    let dims = ModelDims { length: L, r_in: 0.0, r_out: 0.0 };
    if !split {
        let p = Patch::rectangle(
            [-h, -h],
            [h, h],
            [2, 2],
            [6, 6],
            Region::Out,
            [
                EdgeTag::Boundary(Side::Left),
                EdgeTag::Boundary(Side::Right),
                EdgeTag::Boundary(Side::Bottom),
                EdgeTag::Boundary(Side::Top),
            ],
        )
        .unwrap();
        return MultiPatchModel::new(vec![p], vec![], vec![], dims).unwrap();
    }
    let a = Patch::rectangle(
        [-h, -h],
        [0.0, h],
        [2, 2],
        [3, 6],
        Region::Out,
        [
            EdgeTag::Boundary(Side::Left),
            EdgeTag::Interface,
            EdgeTag::Boundary(Side::Bottom),
            EdgeTag::Boundary(Side::Top),
        ],
    )
    .unwrap();
    let b = Patch::rectangle(
        [0.0, -h],
        [h, h],
        [2, 2],
        [3, 6],
        Region::Design,
        [
            EdgeTag::Interface,
            EdgeTag::Boundary(Side::Right),
            EdgeTag::Boundary(Side::Bottom),
            EdgeTag::Boundary(Side::Top),
        ],
    )
    .unwrap();
    let itf = Interface {
        sides: [
            InterfaceSide { patch: 0, edge: Edge::XiMax, range: (0.0, 1.0) },
            InterfaceSide { patch: 1, edge: Edge::XiMin, range: (0.0, 1.0) },
        ],
    };
    MultiPatchModel::new(vec![a, b], vec![itf], vec![], dims).unwrap()
}

#[test]
fn single_patch_plate_is_linear() {
    let m = square(false);
    let d = Discretization::new(&m, None).unwrap();
    let sys = d
        .assemble(&Materials::homogeneous(67.0), &[], &BoundaryConditions::horizontal(300.0, 200.0), Nitsche::default())
        .unwrap();
    let s = solve_primal(&sys).unwrap();
    assert!(l2_error(&d, &s.t) < 1e-12);
    assert!(s.residual < 1e-10);
}

#[test]
fn nitsche_split_plate_matches_single_patch() {
    let m = square(true);
    let d = Discretization::new(&m, None).unwrap();
    let bc = BoundaryConditions::horizontal(300.0, 200.0);
    let sys = d.assemble(&Materials::homogeneous(67.0), &[], &bc, Nitsche::default()).unwrap();
    let s = solve_primal(&sys).unwrap();
    assert!(l2_error(&d, &s.t) < 1e-10, "{}", l2_error(&d, &s.t));
    let mut jump: f64 = 0.0;
    for f in &d.faces {
        for q in 0..f.w.len() {
            let (a, _) = f.sides[0].eval(q, &s.t);
            let (b, _) = f.sides[1].eval(q, &s.t);
            jump = jump.max((a - b).abs());
        }
    }
    assert!(jump < 1e-6, "jump {jump}");
}

#[test]
fn annulus_reference_plate() {
    let m = refine_model(&build_annulus_model(L, 10.0, 50.0).unwrap(), 5).unwrap();
    let start = Instant::now();
    let d = Discretization::new(&m, None).unwrap();
    let bc = BoundaryConditions::horizontal(300.0, 200.0);
    let sys = d.assemble(&Materials::homogeneous(67.0), &[], &bc, Nitsche::default()).unwrap();
    let s = solve_primal(&sys).unwrap();
    let el = start.elapsed();
    let err = l2_error(&d, &s.t);
    eprintln!("dofs {} err {err:e} residual {:e} time {:?}", m.n_dofs(), s.residual, el);
    assert!(err < 1e-8);
    let sys10 = d
        .assemble(&Materials::homogeneous(67.0), &[], &bc, Nitsche { beta: 1e10, gamma: 0.5 })
        .unwrap();
    let s10 = solve_primal(&sys10).unwrap();
    let num: f64 = s.t.iter().zip(&s10.t).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = s.t.iter().map(|a| a * a).sum();
    assert!((num / den).sqrt() < 1e-6);
    // adjoint of the primal load with homogeneous data is the zero field
    let p = solve_adjoint(&s, &vec![0.0; m.n_dofs()]).unwrap();
    assert!(p.p.iter().all(|&v| v == 0.0));
}
