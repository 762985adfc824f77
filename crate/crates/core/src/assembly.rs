//! Stiffness and load assembly for steady conduction with Nitsche coupling
//! across region interfaces, and the density derivative of the stiffness.
//!
//! All geometric data needed per quadrature point is computed once in a
//! [`Discretization`]; assembling for a new density only re-evaluates κ.
//! Lengths are converted from mm to m here, so integrals come out in SI.

use std::sync::Arc;

use crate::design_field::DensityField;
use crate::error::{Error, Result};
use crate::geometry::{for_each_gauss, smoothed_delta, Edge, EdgeTag, MultiPatchModel, Patch, Region, Side};
use crate::materials::MaterialLaw;
use crate::splines::gauss_legendre;

const MM: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nitsche {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for Nitsche {
    fn default() -> Self {
        Self { beta: 1e12, gamma: 0.5 }
    }
}

impl Nitsche {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Argument(format!("penalty beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Argument(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SideCondition {
    /// Prescribed temperature (K).
    Dirichlet(f64),
    /// Prescribed inward heat flux κ∇T·n (W/m²); zero is adiabatic.
    Neumann(f64),
    /// Convection κ∇T·n = h (T∞ − T).
    Robin { h: f64, t_inf: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditions {
    /// Indexed in `Side::ALL` order: left, right, bottom, top.
    pub sides: [SideCondition; 4],
    /// Uniform volumetric source q_b (W/m³).
    pub body_source: f64,
}

impl BoundaryConditions {
    /// Hot left, cold right, adiabatic top and bottom.
    pub fn horizontal(hot: f64, cold: f64) -> Self {
        Self {
            sides: [
                SideCondition::Dirichlet(hot),
                SideCondition::Dirichlet(cold),
                SideCondition::Neumann(0.0),
                SideCondition::Neumann(0.0),
            ],
            body_source: 0.0,
        }
    }

    /// Hot top, cold bottom, adiabatic left and right.
    pub fn vertical(hot: f64, cold: f64) -> Self {
        Self {
            sides: [
                SideCondition::Neumann(0.0),
                SideCondition::Neumann(0.0),
                SideCondition::Dirichlet(cold),
                SideCondition::Dirichlet(hot),
            ],
            body_source: 0.0,
        }
    }

    pub fn side(&self, s: Side) -> SideCondition {
        self.sides[s as usize]
    }

    pub fn is_well_posed(&self) -> bool {
        self.sides
            .iter()
            .any(|c| matches!(c, SideCondition::Dirichlet(_) | SideCondition::Robin { .. }))
    }
}

/// Conductivity law per region. Only the design region may be graded.
#[derive(Debug, Clone, PartialEq)]
pub struct Materials {
    pub inner: MaterialLaw,
    pub design: MaterialLaw,
    pub outer: MaterialLaw,
}

impl Materials {
    pub fn new(inner: MaterialLaw, design: MaterialLaw, outer: MaterialLaw) -> Result<Self> {
        for (name, law) in [("inner", &inner), ("outer", &outer)] {
            if !law.is_constant() {
                return Err(Error::Argument(format!(
                    "{name} region needs a constant material, got {}",
                    law.name
                )));
            }
        }
        Ok(Self { inner, design, outer })
    }

    pub fn homogeneous(kappa: f64) -> Self {
        let c = MaterialLaw::constant(kappa);
        Self { inner: c.clone(), design: c.clone(), outer: c }
    }

    pub fn law(&self, r: Region) -> &MaterialLaw {
        match r {
            Region::In => &self.inner,
            Region::Design => &self.design,
            Region::Out => &self.outer,
        }
    }

    /// κ and dκ/dv at a point with density `v` (ignored off the design region).
    fn kappa(&self, r: Region, v: f64) -> Result<(f64, f64)> {
        match r {
            Region::Design => self.design.eval(v),
            _ => self.law(r).eval(self.law(r).v_min),
        }
    }
}

/// Density basis functions sampled at the points of one block: `count` per point.
#[derive(Debug, Clone, Default)]
pub struct DesignSamples {
    pub count: usize,
    pub coeffs: Vec<usize>,
    pub values: Vec<f64>,
}

impl DesignSamples {
    fn push(&mut self, s: &[(usize, f64)]) {
        self.count = s.len();
        for &(c, r) in s {
            self.coeffs.push(c);
            self.values.push(r);
        }
    }

    pub fn density(&self, q: usize, coeffs: &[f64]) -> f64 {
        let o = q * self.count;
        (0..self.count).map(|k| self.values[o + k] * coeffs[self.coeffs[o + k]]).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

/// One bulk element: local DOFs and per-point basis data.
#[derive(Debug, Clone)]
pub struct BulkBlock {
    pub patch: usize,
    pub region: Region,
    pub dofs: Vec<usize>,
    /// `nqp × nloc` values and physical gradients (per m).
    pub n: Vec<f64>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    /// Weight × |J| in m².
    pub w: Vec<f64>,
    /// Physical location, mm.
    pub x: Vec<[f64; 2]>,
    pub param: Vec<[f64; 2]>,
    pub design: DesignSamples,
}

impl BulkBlock {
    pub fn nqp(&self) -> usize {
        self.w.len()
    }

    pub fn nloc(&self) -> usize {
        self.dofs.len()
    }

    /// Field value and gradient (per m) at point `q`.
    pub fn eval(&self, q: usize, t: &[f64]) -> (f64, [f64; 2]) {
        let nl = self.dofs.len();
        let o = q * nl;
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for a in 0..nl {
            let c = t[self.dofs[a]];
            v += self.n[o + a] * c;
            gx += self.gx[o + a] * c;
            gy += self.gy[o + a] * c;
        }
        (v, [gx, gy])
    }
}

/// One side of an interface segment.
#[derive(Debug, Clone)]
pub struct FaceSide {
    pub patch: usize,
    pub region: Region,
    pub dofs: Vec<usize>,
    pub n: Vec<f64>,
    /// Normal derivative ∇N·n with n the normal of side 0 (per m).
    pub dn: Vec<f64>,
    pub param: Vec<[f64; 2]>,
    pub design: DesignSamples,
}

impl FaceSide {
    pub fn eval(&self, q: usize, t: &[f64]) -> (f64, f64) {
        let nl = self.dofs.len();
        let o = q * nl;
        let (mut v, mut d) = (0.0, 0.0);
        for a in 0..nl {
            let c = t[self.dofs[a]];
            v += self.n[o + a] * c;
            d += self.dn[o + a] * c;
        }
        (v, d)
    }
}

/// One knot-span segment of an interface, seen from both sides.
#[derive(Debug, Clone)]
pub struct FaceBlock {
    pub interface: usize,
    pub sides: [FaceSide; 2],
    /// Arc-length weight in m.
    pub w: Vec<f64>,
    pub x: Vec<[f64; 2]>,
    pub normal: Vec<[f64; 2]>,
}

/// One span of a square side.
#[derive(Debug, Clone)]
pub struct BoundaryBlock {
    pub side: Side,
    pub dofs: Vec<usize>,
    pub n: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<[f64; 2]>,
}

/// Precomputed quadrature data of a model and, optionally, a density field.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub n_dofs: usize,
    pub n_coeffs: usize,
    pub bulk: Vec<BulkBlock>,
    pub faces: Vec<FaceBlock>,
    pub boundary: Vec<BoundaryBlock>,
    /// DOFs lying on each square side, `Side::ALL` order.
    pub side_dofs: [Vec<usize>; 4],
    pub pairs: Arc<Vec<(usize, usize)>>,
    /// Load of the model's point sources (unit: W · m).
    pub source_load: Vec<f64>,
    /// ∫ N_i dΩ, scaled by the body source at assembly.
    pub unit_load: Vec<f64>,
}

fn edge_interior_sign(e: Edge) -> f64 {
    match e {
        Edge::XiMin | Edge::EtaMin => 1.0,
        Edge::XiMax | Edge::EtaMax => -1.0,
    }
}

/// Outward unit normal and |dx/ds| (mm per parameter) on a patch edge.
fn edge_frame(jac: &[[f64; 2]; 2], e: Edge) -> ([f64; 2], f64) {
    let a = e.along();
    let o = 1 - a;
    let t = [jac[0][a], jac[1][a]];
    let len = t[0].hypot(t[1]);
    let mut n = [t[1] / len, -t[0] / len];
    let inward = [jac[0][o] * edge_interior_sign(e), jac[1][o] * edge_interior_sign(e)];
    if n[0] * inward[0] + n[1] * inward[1] > 0.0 {
        n = [-n[0], -n[1]];
    }
    (n, len)
}

fn patch_rule(p: &Patch) -> [usize; 2] {
    [p.basis.knots(0).degree() + 1, p.basis.knots(1).degree() + 1]
}

impl Discretization {
    pub fn new(model: &MultiPatchModel, field: Option<&DensityField>) -> Result<Self> {
        let n_dofs = model.n_dofs();
        let n_coeffs = field.map_or(0, |f| f.n_coeffs());
        let mut bulk = Vec::new();
        for (pi, patch) in model.patches.iter().enumerate() {
            let gdofs = &model.dofs.patch_dofs[pi];
            let mut current: Option<(usize, BulkBlock)> = None;
            let mut blocks = Vec::new();
            for_each_gauss(patch, patch_rule(patch), |element, param, w| {
                let m = patch.eval_map(param[0], param[1])?;
                if !(m.det > 0.0) {
                    return Err(Error::Geometry(format!(
                        "non-positive Jacobian {} in patch {pi} at ({}, {})",
                        m.det, param[0], param[1]
                    )));
                }
                if current.as_ref().map(|c| c.0) != Some(element) {
                    if let Some((_, b)) = current.take() {
                        blocks.push(b);
                    }
                    current = Some((
                        element,
                        BulkBlock {
                            patch: pi,
                            region: patch.region,
                            dofs: m.basis.indices.iter().map(|&l| gdofs[l]).collect(),
                            n: Vec::new(),
                            gx: Vec::new(),
                            gy: Vec::new(),
                            w: Vec::new(),
                            x: Vec::new(),
                            param: Vec::new(),
                            design: DesignSamples::default(),
                        },
                    ));
                }
                let b = &mut current.as_mut().unwrap().1;
                let g = m.gradients();
                b.n.extend_from_slice(&m.basis.values);
                b.gx.extend(g.iter().map(|d| d[0] / MM));
                b.gy.extend(g.iter().map(|d| d[1] / MM));
                b.w.push(w * m.det * MM * MM);
                b.x.push(m.x);
                b.param.push(param);
                if patch.region == Region::Design {
                    if let Some(f) = field {
                        b.design.push(&f.basis_at(param[0], param[1])?);
                    }
                }
                Ok(())
            })?;
            if let Some((_, b)) = current {
                blocks.push(b);
            }
            bulk.extend(blocks);
        }

        let mut faces = Vec::new();
        for (ii, itf) in model.interfaces.iter().enumerate() {
            let mut breaks = vec![0.0, 1.0];
            let mut nq = 1;
            for s in &itf.sides {
                let p = &model.patches[s.patch];
                let kv = p.basis.knots(s.edge.along());
                nq = nq.max(kv.degree() + 1);
                let (r0, r1) = s.range;
                for &k in kv.knots() {
                    let t = (k - r0) / (r1 - r0);
                    if t > 0.0 && t < 1.0 {
                        breaks.push(t);
                    }
                }
            }
            breaks.sort_by(f64::total_cmp);
            breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
            let (gp, gw) = gauss_legendre(nq);
            for seg in breaks.windows(2) {
                let (t0, t1) = (seg[0], seg[1]);
                let mut fb = FaceBlock {
                    interface: ii,
                    sides: [0, 1].map(|k| {
                        let s = &itf.sides[k];
                        FaceSide {
                            patch: s.patch,
                            region: model.patches[s.patch].region,
                            dofs: Vec::new(),
                            n: Vec::new(),
                            dn: Vec::new(),
                            param: Vec::new(),
                            design: DesignSamples::default(),
                        }
                    }),
                    w: Vec::new(),
                    x: Vec::new(),
                    normal: Vec::new(),
                };
                for (g, gwi) in gp.iter().zip(&gw) {
                    let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * g;
                    let mut normal = [0.0; 2];
                    for k in 0..2 {
                        let s = &itf.sides[k];
                        let p = &model.patches[s.patch];
                        let uv = p.edge_param(s.edge, s.edge_param(t));
                        let m = p.eval_map(uv[0], uv[1])?;
                        if k == 0 {
                            let (n, len) = edge_frame(&m.jac, s.edge);
                            normal = n;
                            let ds = (s.range.1 - s.range.0).abs();
                            fb.w.push(gwi * 0.5 * (t1 - t0) * ds * len * MM);
                            fb.x.push(m.x);
                            fb.normal.push(n);
                        }
                        let grads = m.gradients();
                        let side = &mut fb.sides[k];
                        let gd = &model.dofs.patch_dofs[s.patch];
                        let dofs: Vec<usize> = m.basis.indices.iter().map(|&l| gd[l]).collect();
                        if side.dofs.is_empty() {
                            side.dofs = dofs;
                        } else if side.dofs != dofs {
                            return Err(Error::Geometry(format!(
                                "interface {ii} segment crosses a knot of patch {}",
                                s.patch
                            )));
                        }
                        side.n.extend_from_slice(&m.basis.values);
                        side.dn.extend(grads.iter().map(|d| (d[0] * normal[0] + d[1] * normal[1]) / MM));
                        side.param.push(uv);
                        if p.region == Region::Design {
                            if let Some(f) = field {
                                side.design.push(&f.basis_at(uv[0], uv[1])?);
                            }
                        }
                    }
                }
                faces.push(fb);
            }
        }

        let mut boundary = Vec::new();
        let mut side_dofs: [Vec<usize>; 4] = Default::default();
        for (pi, p) in model.patches.iter().enumerate() {
            for e in Edge::ALL {
                let EdgeTag::Boundary(side) = p.edge_tag(e) else { continue };
                let gd = &model.dofs.patch_dofs[pi];
                side_dofs[side as usize].extend(p.edge_indices(e).iter().map(|&l| gd[l]));
                let kv = p.basis.knots(e.along());
                let (gp, gw) = gauss_legendre(kv.degree() + 1);
                for (a, b) in kv.elements() {
                    let mut bb = BoundaryBlock { side, dofs: Vec::new(), n: Vec::new(), w: Vec::new(), x: Vec::new() };
                    for (g, gwi) in gp.iter().zip(&gw) {
                        let s = 0.5 * (a + b) + 0.5 * (b - a) * g;
                        let uv = p.edge_param(e, s);
                        let m = p.eval_map(uv[0], uv[1])?;
                        let (_, len) = edge_frame(&m.jac, e);
                        if bb.dofs.is_empty() {
                            bb.dofs = m.basis.indices.iter().map(|&l| gd[l]).collect();
                        }
                        bb.n.extend_from_slice(&m.basis.values);
                        bb.w.push(gwi * 0.5 * (b - a) * len * MM);
                        bb.x.push(m.x);
                    }
                    boundary.push(bb);
                }
            }
        }
        for d in side_dofs.iter_mut() {
            d.sort_unstable();
            d.dedup();
        }

        let mut source_load = vec![0.0; n_dofs];
        let mut unit_load = vec![0.0; n_dofs];
        for b in &bulk {
            let nl = b.nloc();
            for q in 0..b.nqp() {
                let mut s = 0.0;
                for src in &model.point_sources {
                    let phi = (b.x[q][0] - src.position[0]).hypot(b.x[q][1] - src.position[1]) * MM;
                    s += src.magnitude * smoothed_delta(phi, src.width * MM);
                }
                for a in 0..nl {
                    let nw = b.n[q * nl + a] * b.w[q];
                    unit_load[b.dofs[a]] += nw;
                    source_load[b.dofs[a]] += s * nw;
                }
            }
        }

        Ok(Self {
            n_dofs,
            n_coeffs,
            bulk,
            faces,
            boundary,
            side_dofs,
            pairs: Arc::new(model.dofs.interface_pairs.clone()),
            source_load,
            unit_load,
        })
    }

    fn check_coeffs(&self, materials: &Materials, coeffs: &[f64]) -> Result<()> {
        if !materials.design.is_constant() && self.n_coeffs == 0 {
            return Err(Error::Argument(
                "graded design material needs a density field".into(),
            ));
        }
        if coeffs.len() != self.n_coeffs {
            return Err(Error::Argument(format!(
                "{} density coefficients for a field with {}",
                coeffs.len(),
                self.n_coeffs
            )));
        }
        Ok(())
    }

    fn design_kappa(
        &self,
        materials: &Materials,
        region: Region,
        samples: &DesignSamples,
        q: usize,
        coeffs: &[f64],
    ) -> Result<(f64, f64)> {
        let v = if region == Region::Design && !samples.is_empty() {
            samples.density(q, coeffs)
        } else {
            materials.law(region).v_min
        };
        materials.kappa(region, v)
    }

    /// Build K and F for one density.
    pub fn assemble(
        &self,
        materials: &Materials,
        coeffs: &[f64],
        bc: &BoundaryConditions,
        nitsche: Nitsche,
    ) -> Result<LinearSystem> {
        nitsche.validate()?;
        self.check_coeffs(materials, coeffs)?;
        let n = self.n_dofs;
        let mut k = Vec::with_capacity(self.bulk.len() * 40);
        let mut f = vec![0.0; n];
        let mut loc = Vec::new();
        for b in &self.bulk {
            let nl = b.nloc();
            loc.clear();
            loc.resize(nl * nl, 0.0);
            for q in 0..b.nqp() {
                let (kappa, _) = self.design_kappa(materials, b.region, &b.design, q, coeffs)?;
                let o = q * nl;
                let s = kappa * b.w[q];
                for i in 0..nl {
                    let (gxi, gyi) = (b.gx[o + i] * s, b.gy[o + i] * s);
                    for j in 0..nl {
                        loc[i * nl + j] += gxi * b.gx[o + j] + gyi * b.gy[o + j];
                    }
                }
            }
            for i in 0..nl {
                for j in 0..nl {
                    k.push((b.dofs[i], b.dofs[j], loc[i * nl + j]));
                }
            }
        }

        let mut penalty = Vec::new();
        let g = nitsche.gamma;
        for fb in &self.faces {
            let [s0, s1] = &fb.sides;
            let (n0, n1) = (s0.dofs.len(), s1.dofs.len());
            let nt = n0 + n1;
            let dofs: Vec<usize> = s0.dofs.iter().chain(&s1.dofs).copied().collect();
            loc.clear();
            loc.resize(nt * nt, 0.0);
            let mut jump = vec![0.0; nt];
            let mut flux = vec![0.0; nt];
            let mut pen = vec![0.0; n0 * n0];
            for q in 0..fb.w.len() {
                let (k0, _) = self.design_kappa(materials, s0.region, &s0.design, q, coeffs)?;
                let (k1, _) = self.design_kappa(materials, s1.region, &s1.design, q, coeffs)?;
                for a in 0..n0 {
                    jump[a] = s0.n[q * n0 + a];
                    flux[a] = g * k0 * s0.dn[q * n0 + a];
                }
                for a in 0..n1 {
                    jump[n0 + a] = -s1.n[q * n1 + a];
                    flux[n0 + a] = (1.0 - g) * k1 * s1.dn[q * n1 + a];
                }
                let w = fb.w[q];
                for i in 0..nt {
                    for j in 0..nt {
                        loc[i * nt + j] -= w * (jump[i] * flux[j] + flux[i] * jump[j]);
                    }
                }
                for i in 0..n0 {
                    for j in 0..n0 {
                        pen[i * n0 + j] += nitsche.beta * w * jump[i] * jump[j];
                    }
                }
            }
            for i in 0..nt {
                for j in 0..nt {
                    k.push((dofs[i], dofs[j], loc[i * nt + j]));
                }
            }
            for i in 0..n0 {
                for j in 0..n0 {
                    // functions vanishing on the interface carry exact zeros
                    if pen[i * n0 + j] != 0.0 {
                        penalty.push((s0.dofs[i], s0.dofs[j], pen[i * n0 + j]));
                    }
                }
            }
        }

        let mut dir_sum = vec![0.0; n];
        let mut dir_cnt = vec![0u32; n];
        for (si, side) in Side::ALL.iter().enumerate() {
            if let SideCondition::Dirichlet(v) = bc.side(*side) {
                for &d in &self.side_dofs[si] {
                    dir_sum[d] += v;
                    dir_cnt[d] += 1;
                }
            }
        }
        for bb in &self.boundary {
            let nl = bb.dofs.len();
            match bc.side(bb.side) {
                SideCondition::Dirichlet(_) => {}
                SideCondition::Neumann(qn) => {
                    for q in 0..bb.w.len() {
                        for a in 0..nl {
                            f[bb.dofs[a]] += qn * bb.n[q * nl + a] * bb.w[q];
                        }
                    }
                }
                SideCondition::Robin { h, t_inf } => {
                    for q in 0..bb.w.len() {
                        for a in 0..nl {
                            let na = bb.n[q * nl + a] * bb.w[q];
                            f[bb.dofs[a]] += h * t_inf * na;
                            for b2 in 0..nl {
                                k.push((bb.dofs[a], bb.dofs[b2], h * na * bb.n[q * nl + b2]));
                            }
                        }
                    }
                }
            }
        }
        for i in 0..n {
            f[i] += self.source_load[i] + bc.body_source * self.unit_load[i];
        }
        let dirichlet = dir_sum
            .iter()
            .zip(&dir_cnt)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        Ok(LinearSystem {
            n,
            k,
            penalty,
            f,
            dirichlet,
            pairs: self.pairs.clone(),
            well_posed: bc.is_well_posed(),
        })
    }

    /// `P^T (dK/dv_i) T` for every density coefficient i.
    pub fn apply_dk_dv(
        &self,
        materials: &Materials,
        coeffs: &[f64],
        p: &[f64],
        t: &[f64],
        nitsche: Nitsche,
    ) -> Result<Vec<f64>> {
        self.check_coeffs(materials, coeffs)?;
        if p.len() != self.n_dofs || t.len() != self.n_dofs {
            return Err(Error::Argument(format!(
                "adjoint/state length {}/{} for {} DOFs",
                p.len(),
                t.len(),
                self.n_dofs
            )));
        }
        let mut out = vec![0.0; self.n_coeffs];
        if materials.design.is_constant() {
            return Ok(out);
        }
        for b in self.bulk.iter().filter(|b| b.region == Region::Design) {
            let ds = &b.design;
            for q in 0..b.nqp() {
                let (_, dk) = self.design_kappa(materials, b.region, ds, q, coeffs)?;
                let (_, gp) = b.eval(q, p);
                let (_, gt) = b.eval(q, t);
                let s = dk * (gp[0] * gt[0] + gp[1] * gt[1]) * b.w[q];
                let o = q * ds.count;
                for k in 0..ds.count {
                    out[ds.coeffs[o + k]] += s * ds.values[o + k];
                }
            }
        }
        for fb in &self.faces {
            let Some(si) = fb.sides.iter().position(|s| s.region == Region::Design) else { continue };
            let gamma = if si == 0 { nitsche.gamma } else { 1.0 - nitsche.gamma };
            let side = &fb.sides[si];
            let ds = &side.design;
            for q in 0..fb.w.len() {
                let (_, dk) = self.design_kappa(materials, Region::Design, ds, q, coeffs)?;
                let (p0, _) = fb.sides[0].eval(q, p);
                let (p1, _) = fb.sides[1].eval(q, p);
                let (t0, _) = fb.sides[0].eval(q, t);
                let (t1, _) = fb.sides[1].eval(q, t);
                let (_, dps) = side.eval(q, p);
                let (_, dts) = side.eval(q, t);
                let s = -fb.w[q] * gamma * dk * ((p0 - p1) * dts + dps * (t0 - t1));
                let o = q * ds.count;
                for k in 0..ds.count {
                    out[ds.coeffs[o + k]] += s * ds.values[o + k];
                }
            }
        }
        Ok(out)
    }

    /// Density at every bulk point of the design region, block by block.
    pub fn densities(&self, coeffs: &[f64]) -> Vec<Vec<f64>> {
        self.bulk
            .iter()
            .map(|b| {
                if b.design.is_empty() {
                    Vec::new()
                } else {
                    (0..b.nqp()).map(|q| b.design.density(q, coeffs)).collect()
                }
            })
            .collect()
    }
}

/// Assembled system. The interface penalty is kept apart from the rest of K
/// as a matrix on jump variables so the solver never forms β-sized entries in
/// the averaged unknowns.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub n: usize,
    /// Bulk, Nitsche consistency and Robin terms as unsummed triplets.
    pub k: Vec<(usize, usize, f64)>,
    /// β ∫ φ_a φ_b keyed by region-1 DOFs of interface pairs.
    pub penalty: Vec<(usize, usize, f64)>,
    pub f: Vec<f64>,
    pub dirichlet: Vec<Option<f64>>,
    pub pairs: Arc<Vec<(usize, usize)>>,
    pub well_posed: bool,
}

impl LinearSystem {
    fn partner(&self) -> Vec<Option<usize>> {
        let mut p = vec![None; self.n];
        for &(a, b) in self.pairs.iter() {
            p[a] = Some(b);
        }
        p
    }

    /// Full K as triplets, penalty included.
    pub fn full_triplets(&self) -> Vec<(usize, usize, f64)> {
        let partner = self.partner();
        let mut out = self.k.clone();
        for &(a, c, v) in &self.penalty {
            let (b, d) = (partner[a].unwrap(), partner[c].unwrap());
            out.push((a, c, v));
            out.push((a, d, -v));
            out.push((b, c, -v));
            out.push((b, d, v));
        }
        out
    }

    /// `K x` with the penalty applied to interface jumps.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(i, j, v) in &self.k {
            y[i] += v * x[j];
        }
        let partner = self.partner();
        for &(a, c, v) in &self.penalty {
            let (b, d) = (partner[a].unwrap(), partner[c].unwrap());
            let jc = x[c] - x[d];
            y[a] += v * jc;
            y[b] -= v * jc;
        }
        y
    }

    /// `pᵀ K t` excluding the density-independent penalty.
    pub fn bilinear_main(&self, p: &[f64], t: &[f64]) -> f64 {
        self.k.iter().map(|&(i, j, v)| p[i] * v * t[j]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_presets() {
        let h = BoundaryConditions::horizontal(300.0, 200.0);
        assert_eq!(h.side(Side::Left), SideCondition::Dirichlet(300.0));
        assert_eq!(h.side(Side::Top), SideCondition::Neumann(0.0));
        let v = BoundaryConditions::vertical(300.0, 200.0);
        assert_eq!(v.side(Side::Top), SideCondition::Dirichlet(300.0));
        let none = BoundaryConditions { sides: [SideCondition::Neumann(0.0); 4], body_source: 0.0 };
        assert!(!none.is_well_posed());
    }

    #[test]
    fn nitsche_validation() {
        assert!(Nitsche::default().validate().is_ok());
        assert!(Nitsche { beta: 0.0, gamma: 0.5 }.validate().is_err());
        assert!(Nitsche { beta: 1.0, gamma: 1.0 }.validate().is_err());
    }

    #[test]
    fn graded_outer_material_rejected() {
        assert!(Materials::new(MaterialLaw::emt(), MaterialLaw::emt(), MaterialLaw::constant(1.0)).is_err());
    }
}
