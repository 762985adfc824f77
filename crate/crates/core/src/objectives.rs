//! Functionals of the temperature and density fields, their adjoint loads
//! `∂J/∂T` and explicit density derivatives, and the reference solutions they
//! are normalized against.
//!
//! Every functional is integrated with the quadrature of the
//! [`Discretization`], so a functional and its normalizer always share points.

use crate::assembly::{BoundaryConditions, Discretization, Materials, Nitsche};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::linsolve::solve_primal;
use crate::materials::MaterialLaw;

/// A scalar functional value with its derivative with respect to the
/// temperature coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub value: f64,
    pub load: Vec<f64>,
}

impl Term {
    fn zero(n: usize) -> Self {
        Self { value: 0.0, load: vec![0.0; n] }
    }

    pub fn scaled(&self, s: f64) -> Vec<f64> {
        self.load.iter().map(|l| s * l).collect()
    }
}

/// Reference solutions and normalizers for one geometry and boundary set.
#[derive(Debug, Clone)]
pub struct ReferenceFields {
    /// Whole domain filled with the base material.
    pub t_bar: Vec<f64>,
    /// Design region filled with base material, the reference inclusion in Ω_in.
    pub t_tilde: Vec<f64>,
    pub j_cloak: f64,
    pub j_cloaksen: f64,
    /// Inflow integral of the base plate over Γ_in (signed, W/m).
    pub psi: f64,
    pub j_rtr: f64,
    pub kappa_base: f64,
    /// Per face block: which points lie on the inflow half of Γ_in.
    inflow: Vec<Vec<bool>>,
}

fn check_len(disc: &Discretization, t: &[f64]) -> Result<()> {
    if t.len() != disc.n_dofs {
        return Err(Error::Argument(format!(
            "field has {} coefficients, model has {} DOFs",
            t.len(),
            disc.n_dofs
        )));
    }
    Ok(())
}

/// Side index of Ω_in on a face block and the sign that turns the stored
/// normal into the outward normal of Ω_in.
fn inner_side(disc: &Discretization, face: usize) -> Option<(usize, f64)> {
    let s = &disc.faces[face].sides;
    match (s[0].region, s[1].region) {
        (Region::In, Region::In) => None,
        (Region::In, _) => Some((0, 1.0)),
        (_, Region::In) => Some((1, -1.0)),
        _ => None,
    }
}

/// `∫ (t − a)²` over the given regions and its derivative.
fn deviation(disc: &Discretization, regions: &[Region], t: &[f64], a: &[f64]) -> Term {
    let mut out = Term::zero(disc.n_dofs);
    for b in disc.bulk.iter().filter(|b| regions.contains(&b.region)) {
        let nl = b.nloc();
        for q in 0..b.nqp() {
            let (tv, _) = b.eval(q, t);
            let (av, _) = b.eval(q, a);
            let d = tv - av;
            out.value += b.w[q] * d * d;
            for k in 0..nl {
                out.load[b.dofs[k]] += 2.0 * d * b.w[q] * b.n[q * nl + k];
            }
        }
    }
    out
}

/// Normal flux `∫ −κ ∂T/∂n` over the inflow points of Γ_in.
fn inflow_flux(disc: &Discretization, inflow: &[Vec<bool>], kappa: f64, t: &[f64]) -> Term {
    let mut out = Term::zero(disc.n_dofs);
    for (fi, fb) in disc.faces.iter().enumerate() {
        let Some((si, sign)) = inner_side(disc, fi) else { continue };
        let side = &fb.sides[si];
        let nl = side.dofs.len();
        for q in 0..fb.w.len() {
            if !inflow[fi][q] {
                continue;
            }
            let (_, dn) = side.eval(q, t);
            let c = -kappa * sign * fb.w[q];
            out.value += c * dn;
            for k in 0..nl {
                out.load[side.dofs[k]] += c * side.dn[q * nl + k];
            }
        }
    }
    out
}

impl ReferenceFields {
    /// Solve the base plate and the reference-inclusion field for one set of
    /// boundary conditions. `materials.outer` is the base material.
    pub fn compute(
        disc: &Discretization,
        materials: &Materials,
        inclusion: &MaterialLaw,
        bc: &BoundaryConditions,
        nitsche: Nitsche,
    ) -> Result<Self> {
        if !inclusion.is_constant() {
            return Err(Error::Argument("reference inclusion must be a constant material".into()));
        }
        let base = materials.outer.clone();
        let kappa_base = base.kappa_eff(base.v_min)?;
        let zeros = vec![0.0; disc.n_coeffs];
        let homog = Materials::new(base.clone(), base.clone(), base.clone())?;
        let t_bar = solve_primal(&disc.assemble(&homog, &zeros, bc, nitsche)?)?.t;
        let tilde_mats = Materials::new(inclusion.clone(), base.clone(), base)?;
        let t_tilde = solve_primal(&disc.assemble(&tilde_mats, &zeros, bc, nitsche)?)?.t;

        let j_cloak = deviation(disc, &[Region::Out], &t_tilde, &t_bar).value;
        let j_cloaksen = deviation(disc, &[Region::In, Region::Out], &t_tilde, &t_bar).value;

        // inflow points: reference flux q̄·n < 0 with n the outward normal of Ω_in
        let mut inflow = vec![Vec::new(); disc.faces.len()];
        for (fi, fb) in disc.faces.iter().enumerate() {
            let Some((si, sign)) = inner_side(disc, fi) else { continue };
            inflow[fi] = (0..fb.w.len())
                .map(|q| sign * fb.sides[si].eval(q, &t_bar).1 > 0.0)
                .collect();
        }
        let psi = inflow_flux(disc, &inflow, kappa_base, &t_bar).value;

        let mut j_rtr = 0.0;
        for b in disc.bulk.iter().filter(|b| b.region == Region::In) {
            for q in 0..b.nqp() {
                let (_, g) = b.eval(q, &t_bar);
                j_rtr += b.w[q] * kappa_base * kappa_base * (g[0] * g[0] + g[1] * g[1]);
            }
        }
        Ok(Self { t_bar, t_tilde, j_cloak, j_cloaksen, psi, j_rtr, kappa_base, inflow })
    }

    fn normalizer(value: f64, what: &str) -> Result<f64> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Objective(format!(
                "{what} normalizer is {value}; the reference inclusion does not disturb the field"
            )));
        }
        Ok(value)
    }
}

/// `∫_Ωout (T − T̄)² / J̃_cloak`.
pub fn cloak(disc: &Discretization, refs: &ReferenceFields, t: &[f64]) -> Result<Term> {
    check_len(disc, t)?;
    let n = ReferenceFields::normalizer(refs.j_cloak, "cloak")?;
    let d = deviation(disc, &[Region::Out], t, &refs.t_bar);
    Ok(Term { value: d.value / n, load: d.scaled(1.0 / n) })
}

/// `∫_{Ωin ∪ Ωout} (T − T̄)² / J̃_cloaksen`.
pub fn cloaked_sensor(disc: &Discretization, refs: &ReferenceFields, t: &[f64]) -> Result<Term> {
    check_len(disc, t)?;
    let n = ReferenceFields::normalizer(refs.j_cloaksen, "cloaked-sensor")?;
    let d = deviation(disc, &[Region::In, Region::Out], t, &refs.t_bar);
    Ok(Term { value: d.value / n, load: d.scaled(1.0 / n) })
}

/// Concentration `Ψ`: inflow through Γ_in relative to the base plate.
pub fn concentration(
    disc: &Discretization,
    refs: &ReferenceFields,
    materials: &Materials,
    t: &[f64],
) -> Result<Term> {
    check_len(disc, t)?;
    if refs.psi == 0.0 || !refs.psi.is_finite() {
        return Err(Error::Objective("base-plate flux through the inner boundary vanishes".into()));
    }
    let kappa_in = materials.inner.kappa_eff(materials.inner.v_min)?;
    let f = inflow_flux(disc, &refs.inflow, kappa_in, t);
    Ok(Term { value: f.value / refs.psi, load: f.scaled(1.0 / refs.psi) })
}

/// `∫_Ωin ‖q − R q̄‖² / ∫_Ωin ‖q̄‖²` with `R` the rotation by `theta`.
pub fn rotator(
    disc: &Discretization,
    refs: &ReferenceFields,
    materials: &Materials,
    t: &[f64],
    theta: f64,
) -> Result<Term> {
    check_len(disc, t)?;
    let n = ReferenceFields::normalizer(refs.j_rtr, "rotator")?;
    let kappa = materials.inner.kappa_eff(materials.inner.v_min)?;
    let kb = refs.kappa_base;
    let (s, c) = theta.sin_cos();
    let mut out = Term::zero(disc.n_dofs);
    for b in disc.bulk.iter().filter(|b| b.region == Region::In) {
        let nl = b.nloc();
        for q in 0..b.nqp() {
            let (_, g) = b.eval(q, t);
            let (_, gb) = b.eval(q, &refs.t_bar);
            let qb = [-kb * gb[0], -kb * gb[1]];
            let target = [c * qb[0] - s * qb[1], s * qb[0] + c * qb[1]];
            let r = [-kappa * g[0] - target[0], -kappa * g[1] - target[1]];
            out.value += b.w[q] * (r[0] * r[0] + r[1] * r[1]) / n;
            let o = q * nl;
            for k in 0..nl {
                let dq = r[0] * b.gx[o + k] + r[1] * b.gy[o + k];
                out.load[b.dofs[k]] += -2.0 * kappa * b.w[q] * dq / n;
            }
        }
    }
    Ok(out)
}

/// `∫_Ωdesign v⁴(1−v)⁴` and its derivative per density coefficient.
pub fn intermediate_penalty(disc: &Discretization, coeffs: &[f64]) -> Result<(f64, Vec<f64>)> {
    if coeffs.len() != disc.n_coeffs {
        return Err(Error::Argument(format!(
            "{} density coefficients for a field with {}",
            coeffs.len(),
            disc.n_coeffs
        )));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; disc.n_coeffs];
    for b in disc.bulk.iter().filter(|b| !b.design.is_empty()) {
        let ds = &b.design;
        for q in 0..b.nqp() {
            let v = ds.density(q, coeffs);
            let u = 1.0 - v;
            value += b.w[q] * (v * u).powi(4);
            let d = b.w[q] * 4.0 * (v * u).powi(3) * (1.0 - 2.0 * v);
            let o = q * ds.count;
            for k in 0..ds.count {
                grad[ds.coeffs[o + k]] += d * ds.values[o + k];
            }
        }
    }
    Ok((value, grad))
}

/// Smooth maximum of the temperature over a disk,
/// `τ = ∫ T A^T H / ∫ A^T H` with a sharp indicator `H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxTemperature {
    /// Disk center and radius, mm.
    pub center: [f64; 2],
    pub radius: f64,
    pub t_max: f64,
    pub base: f64,
}

impl MaxTemperature {
    pub fn new(center: [f64; 2], radius: f64, t_max: f64, base: f64) -> Result<Self> {
        if !(base > 1.0 && base.is_finite()) {
            return Err(Error::Argument(format!("base A must exceed 1, got {base}")));
        }
        if !(radius > 0.0) {
            return Err(Error::Argument(format!("constraint radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius, t_max, base })
    }

    fn inside(&self, x: [f64; 2]) -> bool {
        (x[0] - self.center[0]).hypot(x[1] - self.center[1]) <= self.radius
    }

    /// `τ` and its derivative.
    pub fn tau(&self, disc: &Discretization, t: &[f64]) -> Result<Term> {
        check_len(disc, t)?;
        // A^T overflows at plate temperatures; shift by the largest sample
        let mut pts = Vec::new();
        let mut tref = f64::NEG_INFINITY;
        for (bi, b) in disc.bulk.iter().enumerate() {
            for q in 0..b.nqp() {
                if self.inside(b.x[q]) {
                    let (tv, _) = b.eval(q, t);
                    tref = tref.max(tv);
                    pts.push((bi, q, tv));
                }
            }
        }
        if pts.is_empty() {
            return Err(Error::Argument("temperature constraint region contains no quadrature points".into()));
        }
        let ln_a = self.base.ln();
        let (mut num, mut den) = (0.0, 0.0);
        for &(bi, q, tv) in &pts {
            let e = ((tv - tref) * ln_a).exp() * disc.bulk[bi].w[q];
            num += tv * e;
            den += e;
        }
        let tau = num / den;
        let mut load = vec![0.0; disc.n_dofs];
        for &(bi, q, tv) in &pts {
            let b = &disc.bulk[bi];
            let e = ((tv - tref) * ln_a).exp() * b.w[q];
            let d = e * (1.0 + (tv - tau) * ln_a) / den;
            let nl = b.nloc();
            for k in 0..nl {
                load[b.dofs[k]] += d * b.n[q * nl + k];
            }
        }
        Ok(Term { value: tau, load })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_annulus_model, refine_model};
    use crate::materials::KAPPA_INSULATOR;

    fn setup() -> (Discretization, Materials, ReferenceFields) {
        let m = refine_model(&build_annulus_model(140.0, 10.0, 50.0).unwrap(), 2).unwrap();
        let d = Discretization::new(&m, None).unwrap();
        let mats = Materials::homogeneous(67.0);
        let refs = ReferenceFields::compute(
            &d,
            &mats,
            &MaterialLaw::constant(KAPPA_INSULATOR),
            &BoundaryConditions::horizontal(300.0, 200.0),
            Nitsche::default(),
        )
        .unwrap();
        (d, mats, refs)
    }

    #[test]
    fn normalization_fixed_points() {
        let (d, mats, refs) = setup();
        assert_eq!(cloak(&d, &refs, &refs.t_tilde).unwrap().value, 1.0);
        assert_eq!(cloak(&d, &refs, &refs.t_bar).unwrap().value, 0.0);
        assert_eq!(cloaked_sensor(&d, &refs, &refs.t_tilde).unwrap().value, 1.0);
        assert_eq!(concentration(&d, &refs, &mats, &refs.t_bar).unwrap().value, 1.0);
        assert!(rotator(&d, &refs, &mats, &refs.t_bar, 0.0).unwrap().value < 1e-20);
        let rev: Vec<f64> = refs.t_bar.iter().map(|t| 500.0 - t).collect();
        assert!(rotator(&d, &refs, &mats, &rev, std::f64::consts::PI).unwrap().value < 1e-20);
        let neg = concentration(&d, &refs, &mats, &rev).unwrap().value;
        assert!((neg + 1.0).abs() < 1e-12);
        assert!(cloak(&d, &refs, &[0.0; 3]).is_err());
    }

    #[test]
    fn max_temperature_of_constant_field() {
        let (d, _, _) = setup();
        let c = MaxTemperature::new([0.0, 0.0], 15.0, 220.0, 1.5).unwrap();
        let t = vec![233.0; d.n_dofs];
        assert!((c.tau(&d, &t).unwrap().value - 233.0).abs() < 1e-12);
        assert!(MaxTemperature::new([0.0, 0.0], 15.0, 220.0, 1.0).is_err());
        let far = MaxTemperature::new([500.0, 0.0], 1.0, 220.0, 1.5).unwrap();
        assert!(far.tau(&d, &t).is_err());
    }

    #[test]
    fn penalty_vanishes_on_pure_material() {
        let m = build_annulus_model(140.0, 10.0, 50.0).unwrap();
        let f = crate::design_field::DensityField::design_mesh(&m.patches[1], 3, 4).unwrap();
        let d = Discretization::new(&m, Some(&f)).unwrap();
        for c in [0.0, 1.0] {
            let (v, g) = intermediate_penalty(&d, &vec![c; d.n_coeffs]).unwrap();
            // partition of unity holds to rounding, so v sits within 1e-16 of c
            assert!(v < 1e-60);
            assert!(g.iter().all(|&x| x.abs() < 1e-40));
        }
    }
}
