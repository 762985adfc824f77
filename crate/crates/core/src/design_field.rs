//! NURBS density field over the design annulus and the symmetry reduction
//! between optimizer variables and density control coefficients.

use crate::error::{Error, Result};
use crate::geometry::Patch;

/// Relative-density field `v(ξ) = Σ R_i(ξ) v_i` on its own design mesh.
///
/// Control points that coincide (the closing seam of the annulus) share one
/// coefficient, so the field is continuous across the seam.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    patch: Patch,
    coeff_of_cp: Vec<usize>,
    positions: Vec<[f64; 2]>,
    values: Vec<f64>,
}

impl DensityField {
    pub fn from_patch(patch: Patch) -> Result<Self> {
        let scale = patch
            .points
            .iter()
            .fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
        let tol = 1e-9 * scale;
        let mut coeff_of_cp = Vec::with_capacity(patch.points.len());
        let mut positions: Vec<[f64; 2]> = Vec::new();
        for p in &patch.points {
            let hit = positions
                .iter()
                .position(|q| (q[0] - p[0]).abs() <= tol && (q[1] - p[1]).abs() <= tol);
            match hit {
                Some(k) => coeff_of_cp.push(k),
                None => {
                    coeff_of_cp.push(positions.len());
                    positions.push(*p);
                }
            }
        }
        let values = vec![0.0; positions.len()];
        Ok(Self { patch, coeff_of_cp, positions, values })
    }

    /// Design mesh over an unrefined design patch: `per_quarter` uniform spans
    /// in each circumferential quarter and `radial` spans across.
    pub fn design_mesh(base: &Patch, per_quarter: usize, radial: usize) -> Result<Self> {
        if per_quarter == 0 || radial == 0 {
            return Err(Error::Argument("design mesh needs at least one span per direction".into()));
        }
        let eta: Vec<f64> = (1..radial).map(|j| j as f64 / radial as f64).collect();
        Self::design_mesh_with(base, per_quarter, &eta)
    }

    /// As [`design_mesh`](Self::design_mesh) with explicit interior radial knots.
    pub fn design_mesh_with(base: &Patch, per_quarter: usize, radial_knots: &[f64]) -> Result<Self> {
        if per_quarter == 0 {
            return Err(Error::Argument("design mesh needs at least one span per direction".into()));
        }
        if radial_knots.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
            return Err(Error::Argument("interior radial knots must lie in (0, 1)".into()));
        }
        let kx = base.basis.knots(0);
        let mut xi = Vec::new();
        for q in 0..4 {
            for j in 1..per_quarter {
                let u = q as f64 / 4.0 + j as f64 / (4 * per_quarter) as f64;
                if kx.multiplicity(u) == 0 {
                    xi.push(u);
                }
            }
        }
        let ky = base.basis.knots(1);
        let eta: Vec<f64> = radial_knots.iter().copied().filter(|&u| ky.multiplicity(u) == 0).collect();
        let p = base.insert_knots(0, &xi)?.insert_knots(1, &eta)?;
        Self::from_patch(p)
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    pub fn n_coeffs(&self) -> usize {
        self.positions.len()
    }

    /// Physical location (mm) of each coefficient's control point.
    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Argument(format!(
                "{} density coefficients given, field has {}",
                values.len(),
                self.values.len()
            )));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn with_values(mut self, values: &[f64]) -> Result<Self> {
        self.set_values(values)?;
        Ok(self)
    }

    fn check_param(&self, xi: f64, eta: f64) -> Result<()> {
        let (a0, a1) = self.patch.param_range(0);
        let (b0, b1) = self.patch.param_range(1);
        if !(xi >= a0 && xi <= a1 && eta >= b0 && eta <= b1) {
            return Err(Error::Domain(format!(
                "parametric point ({xi}, {eta}) outside the design patch"
            )));
        }
        Ok(())
    }

    /// Nonzero basis functions at a parametric point as (coefficient, R).
    pub fn basis_at(&self, xi: f64, eta: f64) -> Result<Vec<(usize, f64)>> {
        self.check_param(xi, eta)?;
        let e = self.patch.basis.eval_rational(xi, eta)?;
        Ok(e.indices
            .iter()
            .zip(&e.values)
            .map(|(&i, &r)| (self.coeff_of_cp[i], r))
            .collect())
    }

    /// Density and its physical gradient (per mm).
    pub fn eval_density(&self, xi: f64, eta: f64) -> Result<(f64, [f64; 2])> {
        self.check_param(xi, eta)?;
        let m = self.patch.eval_map(xi, eta)?;
        if m.det.abs() < 1e-300 {
            return Err(Error::Geometry(format!("singular design map at ({xi}, {eta})")));
        }
        let grads = m.gradients();
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (k, &idx) in m.basis.indices.iter().enumerate() {
            let c = self.values[self.coeff_of_cp[idx]];
            v += m.basis.values[k] * c;
            g[0] += grads[k][0] * c;
            g[1] += grads[k][1] * c;
        }
        Ok((v, g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryMode {
    None,
    /// Mirror about the x axis (y → −y).
    X,
    /// Mirror about both axes.
    Xy,
}

impl SymmetryMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Self::None),
            "x" => Some(Self::X),
            "xy" => Some(Self::Xy),
            _ => None,
        }
    }

    fn reflections(self) -> &'static [[f64; 2]] {
        match self {
            Self::None => &[[1.0, 1.0]],
            Self::X => &[[1.0, 1.0], [1.0, -1.0]],
            Self::Xy => &[[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]],
        }
    }
}

/// Assignment of each density coefficient to one optimizer variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryMap {
    mode: SymmetryMode,
    var_of_coeff: Vec<usize>,
    n_vars: usize,
}

impl SymmetryMap {
    pub fn identity(n: usize) -> Self {
        Self { mode: SymmetryMode::None, var_of_coeff: (0..n).collect(), n_vars: n }
    }

    /// Group coefficients into orbits of the mirror group acting on their
    /// control point positions. Variables are numbered by first appearance.
    pub fn build(field: &DensityField, mode: SymmetryMode) -> Result<Self> {
        let pos = field.positions();
        let m = pos.len();
        let scale = pos.iter().fold(1.0f64, |s, p| s.max(p[0].abs()).max(p[1].abs()));
        let tol = 1e-9 * scale;
        let mut var_of_coeff = vec![usize::MAX; m];
        let mut n_vars = 0;
        for i in 0..m {
            if var_of_coeff[i] != usize::MAX {
                continue;
            }
            for r in mode.reflections() {
                let q = [pos[i][0] * r[0], pos[i][1] * r[1]];
                let j = pos
                    .iter()
                    .position(|p| (p[0] - q[0]).abs() <= tol && (p[1] - q[1]).abs() <= tol)
                    .ok_or_else(|| {
                        Error::Argument(format!(
                            "design mesh is not {mode:?}-symmetric: no mirror image of control point ({}, {})",
                            pos[i][0], pos[i][1]
                        ))
                    })?;
                var_of_coeff[j] = n_vars;
            }
            n_vars += 1;
        }
        Ok(Self { mode, var_of_coeff, n_vars })
    }

    pub fn mode(&self) -> SymmetryMode {
        self.mode
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_coeffs(&self) -> usize {
        self.var_of_coeff.len()
    }

    pub fn var_of_coeff(&self) -> &[usize] {
        &self.var_of_coeff
    }

    pub fn expand(&self, vars: &[f64]) -> Result<Vec<f64>> {
        if vars.len() != self.n_vars {
            return Err(Error::Argument(format!(
                "expected {} design variables, got {}",
                self.n_vars,
                vars.len()
            )));
        }
        Ok(self.var_of_coeff.iter().map(|&k| vars[k]).collect())
    }

    pub fn reduce_gradient(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.var_of_coeff.len() {
            return Err(Error::Argument(format!(
                "expected {} coefficient gradients, got {}",
                self.var_of_coeff.len(),
                g.len()
            )));
        }
        let mut out = vec![0.0; self.n_vars];
        for (&k, gi) in self.var_of_coeff.iter().zip(g) {
            out[k] += gi;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_annulus_model;

    fn field(eq: usize, er: usize) -> DensityField {
        let m = build_annulus_model(140.0, 10.0, 50.0).unwrap();
        DensityField::design_mesh(&m.patches[m.design_patch().unwrap()], eq, er).unwrap()
    }

    #[test]
    fn variable_counts() {
        let f = field(3, 4);
        assert_eq!(f.n_coeffs(), 80);
        assert_eq!(SymmetryMap::build(&f, SymmetryMode::Xy).unwrap().n_vars(), 25);
        assert_eq!(SymmetryMap::build(&f, SymmetryMode::X).unwrap().n_vars(), 45);
        assert_eq!(SymmetryMap::build(&f, SymmetryMode::None).unwrap().n_vars(), 80);
        let f = field(4, 4);
        assert_eq!(SymmetryMap::build(&f, SymmetryMode::None).unwrap().n_vars(), 100);
        let f = field(7, 8);
        assert_eq!(SymmetryMap::build(&f, SymmetryMode::Xy).unwrap().n_vars(), 81);
    }

    #[test]
    fn constant_field() {
        let f = field(3, 4);
        let f = f.clone().with_values(&vec![0.5; f.n_coeffs()]).unwrap();
        for &(xi, eta) in &[(0.0, 0.0), (0.13, 0.7), (0.999, 1.0)] {
            let (v, g) = f.eval_density(xi, eta).unwrap();
            assert!((v - 0.5).abs() < 1e-14);
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
        }
        assert!(f.eval_density(1.2, 0.0).is_err());
    }

    #[test]
    fn counting_reduction() {
        let f = field(3, 4);
        let s = SymmetryMap::build(&f, SymmetryMode::Xy).unwrap();
        let g = s.reduce_gradient(&vec![1.0; 80]).unwrap();
        assert_eq!(g.iter().sum::<f64>(), 80.0);
        assert!(g.iter().any(|&c| c == 4.0));
        assert!(g.iter().all(|&c| c == 2.0 || c == 4.0));
        assert!(s.expand(&[0.0; 3]).is_err());
    }
}
