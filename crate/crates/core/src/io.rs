//! File formats: density coefficient CSV, run history CSV, legacy ASCII VTK
//! field export, PGM raster and contour CSV.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value
//! read back parses to the identical bits.
//!
//! Density CSV, one row per coefficient in field order:
//! ```text
//! coefficient,x,y,value
//! 0,35.35533905932738,-35.35533905932738,0.5
//! ```
//! `x, y` locate the coefficient's control point in mm and are checked
//! against the design basis on read.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::assembly::Materials;
use crate::design_field::DensityField;
use crate::error::{Error, Result};
use crate::geometry::{MultiPatchModel, Region};
use crate::optimizer::RunRecord;
use crate::problem::DesignProblem;

/// Density coefficients with their control point locations.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub positions: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

pub fn density_csv(field: &DensityField, coeffs: &[f64]) -> Result<String> {
    if coeffs.len() != field.n_coeffs() {
        return Err(Error::Argument(format!(
            "{} coefficients for a field of {}",
            coeffs.len(),
            field.n_coeffs()
        )));
    }
    let mut s = String::from("coefficient,x,y,value\n");
    for (i, (p, v)) in field.positions().iter().zip(coeffs).enumerate() {
        writeln!(s, "{i},{:?},{:?},{:?}", p[0], p[1], v).unwrap();
    }
    Ok(s)
}

pub fn write_density_csv(path: &Path, field: &DensityField, coeffs: &[f64]) -> Result<()> {
    fs::write(path, density_csv(field, coeffs)?)?;
    Ok(())
}

fn parse_err(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, msg: msg.into() }
}

pub fn parse_density_csv(text: &str) -> Result<DensityTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().map(str::trim).ne(["coefficient", "x", "y", "value"]) {
        return Err(parse_err(1, "expected header `coefficient,x,y,value`"));
    }
    let mut out = DensityTable { positions: Vec::new(), values: Vec::new() };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let idx: usize = rec[0].trim().parse().map_err(|_| parse_err(line, format!("bad index `{}`", &rec[0])))?;
        if idx != out.values.len() {
            return Err(parse_err(line, format!("expected coefficient {}, found {idx}", out.values.len())));
        }
        let mut f = [0.0f64; 3];
        for (k, v) in f.iter_mut().enumerate() {
            let s = rec[k + 1].trim();
            *v = s.parse().map_err(|_| parse_err(line, format!("bad number `{s}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value `{s}`")));
            }
        }
        out.positions.push([f[0], f[1]]);
        out.values.push(f[2]);
    }
    if out.values.is_empty() {
        return Err(Error::Argument("density CSV holds no coefficients".into()));
    }
    Ok(out)
}

pub fn read_density_csv(path: &Path) -> Result<DensityTable> {
    parse_density_csv(&fs::read_to_string(path)?)
}

/// Check that a table belongs to the field's basis.
pub fn check_basis(field: &DensityField, table: &DensityTable) -> Result<()> {
    if table.values.len() != field.n_coeffs() {
        return Err(Error::Argument(format!(
            "density CSV has {} coefficients, the design basis has {}",
            table.values.len(),
            field.n_coeffs()
        )));
    }
    let scale = field.positions().iter().fold(1.0f64, |s, p| s.max(p[0].abs()).max(p[1].abs()));
    for (i, (a, b)) in field.positions().iter().zip(&table.positions).enumerate() {
        if (a[0] - b[0]).abs() > 1e-9 * scale || (a[1] - b[1]).abs() > 1e-9 * scale {
            return Err(Error::Argument(format!(
                "density coefficient {i} sits at ({}, {}), the design basis has it at ({}, {})",
                b[0], b[1], a[0], a[1]
            )));
        }
    }
    Ok(())
}

/// Optimizer variables of a problem reproducing the table's coefficients.
pub fn variables_from_density(problem: &DesignProblem, table: &DensityTable) -> Result<Vec<f64>> {
    check_basis(&problem.field, table)?;
    let mut vars = vec![f64::NAN; problem.n_vars()];
    for (c, &v) in problem.symmetry.var_of_coeff().iter().enumerate() {
        let x = table.values[c];
        if vars[v].is_nan() {
            vars[v] = x;
        } else if vars[v] != x {
            return Err(Error::Argument(format!(
                "coefficient {c} breaks the configured symmetry ({x} vs {})",
                vars[v]
            )));
        }
    }
    Ok(vars)
}

/// Run history with one row per iteration. Columns: iteration, J, the
/// sub-terms, constraint values `g` (suffix `_g`), projected gradient norm,
/// step norm and cumulative primal solves.
pub fn run_csv(record: &RunRecord) -> String {
    let mut s = String::from("iteration,J");
    let Some(first) = record.iterations.first() else {
        s.push_str(",projected_gradient_norm,step_norm,primal_solves\n");
        return s;
    };
    for (n, _) in &first.terms {
        write!(s, ",{n}").unwrap();
    }
    for (n, _) in &first.constraints {
        write!(s, ",{n}_g").unwrap();
    }
    s.push_str(",projected_gradient_norm,step_norm,primal_solves\n");
    for it in &record.iterations {
        write!(s, "{},{:?}", it.iteration, it.value).unwrap();
        for (_, v) in it.terms.iter().chain(&it.constraints) {
            write!(s, ",{v:?}").unwrap();
        }
        writeln!(s, ",{:?},{:?},{}", it.projected_gradient_norm, it.step_norm, it.primal_solves).unwrap();
    }
    s
}

/// Per-point fields of a visualization grid.
#[derive(Debug, Clone, Default)]
pub struct FieldSamples {
    pub points: Vec<[f64; 2]>,
    /// Quads as point indices, counter-clockwise in parameter space.
    pub cells: Vec<[usize; 4]>,
    pub temperature: Vec<f64>,
    /// −κ∇T, W/m².
    pub flux: Vec<[f64; 2]>,
    /// Relative density; zero outside the design region.
    pub density: Vec<f64>,
    pub kappa: Vec<f64>,
    /// T − T̄.
    pub deviation: Vec<f64>,
}

const SUBDIV: usize = 4;

/// Sample fields on a `SUBDIV × SUBDIV` grid in every element of every patch.
pub fn sample_fields(
    model: &MultiPatchModel,
    field: &DensityField,
    materials: &Materials,
    coeffs: &[f64],
    t: &[f64],
    t_bar: &[f64],
) -> Result<FieldSamples> {
    let density = field.clone().with_values(coeffs)?;
    let mut out = FieldSamples::default();
    for (pi, patch) in model.patches.iter().enumerate() {
        let dofs = &model.dofs.patch_dofs[pi];
        let axis = |dir: usize| {
            let kv = patch.basis.knots(dir);
            let mut u = Vec::new();
            for (a, b) in kv.elements() {
                for s in 0..SUBDIV {
                    u.push(a + (b - a) * s as f64 / SUBDIV as f64);
                }
            }
            u.push(kv.last());
            u
        };
        let (us, vs) = (axis(0), axis(1));
        let base = out.points.len();
        let law = materials.law(patch.region);
        for &v in &vs {
            for &u in &us {
                let m = patch.eval_map(u, v)?;
                let (mut tv, mut dv) = (0.0, 0.0);
                for (k, &idx) in m.basis.indices.iter().enumerate() {
                    tv += m.basis.values[k] * t[dofs[idx]];
                    dv += m.basis.values[k] * t_bar[dofs[idx]];
                }
                // the collapsed disk centre has no Jacobian; take the gradient just off it
                let x = m.x;
                let gm = if m.det.abs() > 1e-12 * patch_scale(model) {
                    m
                } else {
                    let (v0, v1) = patch.param_range(1);
                    let vv = if v - v0 > 0.5 * (v1 - v0) { v - 1e-7 } else { v + 1e-7 };
                    patch.eval_map(u, vv)?
                };
                let mut g = [0.0; 2];
                for (k, gr) in gm.gradients().iter().enumerate() {
                    let c = t[dofs[gm.basis.indices[k]]];
                    g[0] += gr[0] * c * 1e3;
                    g[1] += gr[1] * c * 1e3;
                }
                let rho = if patch.region == Region::Design { density.eval_density(u, v)?.0 } else { 0.0 };
                let kappa = law.kappa_eff(if patch.region == Region::Design { rho } else { law.v_min })?;
                out.points.push(x);
                out.temperature.push(tv);
                out.deviation.push(tv - dv);
                out.flux.push([-kappa * g[0], -kappa * g[1]]);
                out.density.push(rho);
                out.kappa.push(kappa);
            }
        }
        let nu = us.len();
        for j in 0..vs.len() - 1 {
            for i in 0..nu - 1 {
                let a = base + j * nu + i;
                out.cells.push([a, a + 1, a + nu + 1, a + nu]);
            }
        }
    }
    Ok(out)
}

fn patch_scale(model: &MultiPatchModel) -> f64 {
    model.dims.length * model.dims.length
}

/// Legacy ASCII VTK unstructured grid of quads with point data T, T_minus_Tbar,
/// density, kappa, flux_magnitude and the flux vector.
pub fn vtk_string(s: &FieldSamples) -> String {
    let mut o = String::new();
    o.push_str("# vtk DataFile Version 3.0\nisotherm fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(o, "POINTS {} double", s.points.len()).unwrap();
    for p in &s.points {
        writeln!(o, "{:?} {:?} 0", p[0], p[1]).unwrap();
    }
    writeln!(o, "CELLS {} {}", s.cells.len(), 5 * s.cells.len()).unwrap();
    for c in &s.cells {
        writeln!(o, "4 {} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
    }
    writeln!(o, "CELL_TYPES {}", s.cells.len()).unwrap();
    for _ in &s.cells {
        o.push_str("9\n");
    }
    writeln!(o, "POINT_DATA {}", s.points.len()).unwrap();
    let magnitude: Vec<f64> = s.flux.iter().map(|f| f[0].hypot(f[1])).collect();
    for (name, vals) in [
        ("T", &s.temperature),
        ("T_minus_Tbar", &s.deviation),
        ("density", &s.density),
        ("kappa", &s.kappa),
        ("flux_magnitude", &magnitude),
    ] {
        writeln!(o, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in vals {
            writeln!(o, "{v:?}").unwrap();
        }
    }
    o.push_str("VECTORS flux double\n");
    for f in &s.flux {
        writeln!(o, "{:?} {:?} 0", f[0], f[1]).unwrap();
    }
    o
}

pub fn write_vtk(path: &Path, s: &FieldSamples) -> Result<()> {
    fs::write(path, vtk_string(s))?;
    Ok(())
}

/// Plain PGM (P2), row 0 at the top. `raster[row][col]` with 0 black, 255 white.
pub fn pgm_string(raster: &[Vec<u8>]) -> Result<String> {
    let h = raster.len();
    let w = raster.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || raster.iter().any(|r| r.len() != w) {
        return Err(Error::Argument("raster must be a non-empty rectangle".into()));
    }
    let mut o = format!("P2\n{w} {h}\n255\n");
    for row in raster {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        o.push_str(&line.join(" "));
        o.push('\n');
    }
    Ok(o)
}

/// Closed polylines as `contour_id,x,y`; the first point is repeated last.
pub fn contours_csv(contours: &[Vec<[f64; 2]>]) -> String {
    let mut o = String::from("contour_id,x,y\n");
    for (i, c) in contours.iter().enumerate() {
        for p in c {
            writeln!(o, "{i},{:?},{:?}", p[0], p[1]).unwrap();
        }
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_annulus_model;

    fn field() -> DensityField {
        let m = build_annulus_model(140.0, 10.0, 50.0).unwrap();
        DensityField::design_mesh(&m.patches[1], 3, 4).unwrap()
    }

    #[test]
    fn density_round_trip_is_bit_exact() {
        let f = field();
        let c: Vec<f64> = (0..f.n_coeffs()).map(|i| (i as f64 * 0.37).sin().abs() / 3.0 + 1e-17).collect();
        let text = density_csv(&f, &c).unwrap();
        let t = parse_density_csv(&text).unwrap();
        assert_eq!(t.values, c);
        check_basis(&f, &t).unwrap();
    }

    #[test]
    fn density_errors() {
        assert!(matches!(parse_density_csv("coefficient,x,y,value\n"), Err(Error::Argument(_))));
        assert!(matches!(parse_density_csv("a,b\n1,2\n"), Err(Error::Parse { line: 1, .. })));
        let e = parse_density_csv("coefficient,x,y,value\n0,1,2,0.5\n2,1,2,0.5\n");
        assert!(matches!(e, Err(Error::Parse { line: 3, .. })), "{e:?}");
        let e = parse_density_csv("coefficient,x,y,value\n0,1,2,nan\n");
        assert!(matches!(e, Err(Error::Parse { line: 2, .. })));
        let e = parse_density_csv("coefficient,x,y,value\n0,1,2\n");
        assert!(matches!(e, Err(Error::Parse { .. })));
    }

    #[test]
    fn basis_mismatch_detected() {
        let f = field();
        let mut t = parse_density_csv(&density_csv(&f, &vec![0.5; f.n_coeffs()]).unwrap()).unwrap();
        t.positions[3][0] += 1.0;
        assert!(check_basis(&f, &t).is_err());
        t.positions.pop();
        t.values.pop();
        assert!(check_basis(&f, &t).is_err());
    }

    #[test]
    fn pgm_layout() {
        let s = pgm_string(&[vec![0, 255], vec![7, 8]]).unwrap();
        assert_eq!(s, "P2\n2 2\n255\n0 255\n7 8\n");
        assert!(pgm_string(&[]).is_err());
    }
}
