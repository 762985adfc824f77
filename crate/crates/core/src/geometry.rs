//! Multi-patch NURBS domains: the inclusion disk, the design annulus and the
//! surrounding square plate, plus refinement and quadrature.
//!
//! Parametric conventions: ξ runs counter-clockwise around the centre, η runs
//! inward (η = 0 on the outer boundary of a patch), which keeps det J > 0.
//! Coordinates are millimetres.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::splines::{gauss_legendre, KnotVector, RationalBasis, RationalEval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    In,
    Design,
    Out,
}

/// Sides of the outer square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    XiMin,
    XiMax,
    EtaMin,
    EtaMax,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::XiMin, Edge::XiMax, Edge::EtaMin, Edge::EtaMax];

    fn index(self) -> usize {
        self as usize
    }

    /// Parametric direction running along the edge.
    pub fn along(self) -> usize {
        match self {
            Edge::XiMin | Edge::XiMax => 1,
            Edge::EtaMin | Edge::EtaMax => 0,
        }
    }
}

/// What sits on a patch edge. Boundary conditions attach to square sides and
/// are resolved at assembly time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeTag {
    None,
    Interface,
    Boundary(Side),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub basis: RationalBasis,
    pub points: Vec<[f64; 2]>,
    pub region: Region,
    pub edges: [EdgeTag; 4],
}

/// Gauss point of a patch: parametric and physical location and weight × |J|.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub element: usize,
    pub param: [f64; 2],
    pub x: [f64; 2],
    pub weight: f64,
}

/// Point map derivatives at one parametric location.
#[derive(Debug, Clone)]
pub struct MapEval {
    pub x: [f64; 2],
    /// `jac[a][b] = ∂x_a/∂ξ_b`
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub basis: RationalEval,
}

impl MapEval {
    /// Physical gradients (per mm) of the local basis functions.
    pub fn gradients(&self) -> Vec<[f64; 2]> {
        let j = &self.jac;
        let d = self.det;
        self.basis
            .d_xi
            .iter()
            .zip(&self.basis.d_eta)
            .map(|(&a, &b)| [(j[1][1] * a - j[1][0] * b) / d, (-j[0][1] * a + j[0][0] * b) / d])
            .collect()
    }
}

impl Patch {
    pub fn new(
        basis: RationalBasis,
        points: Vec<[f64; 2]>,
        region: Region,
        edges: [EdgeTag; 4],
    ) -> Result<Self> {
        if points.len() != basis.len() {
            return Err(Error::Argument(format!(
                "{} control points for {} basis functions",
                points.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, points, region, edges })
    }

    /// Axis-aligned rectangle with uniform knots, all weights 1.
    pub fn rectangle(
        lo: [f64; 2],
        hi: [f64; 2],
        degree: [usize; 2],
        elements: [usize; 2],
        region: Region,
        edges: [EdgeTag; 4],
    ) -> Result<Self> {
        let kx = KnotVector::uniform(degree[0], elements[0])?;
        let ky = KnotVector::uniform(degree[1], elements[1])?;
        let gx = greville(&kx);
        let gy = greville(&ky);
        let mut pts = Vec::with_capacity(gx.len() * gy.len());
        for &v in &gy {
            for &u in &gx {
                pts.push([lo[0] + (hi[0] - lo[0]) * u, lo[1] + (hi[1] - lo[1]) * v]);
            }
        }
        let w = vec![1.0; pts.len()];
        Self::new(RationalBasis::new(kx, ky, w)?, pts, region, edges)
    }

    pub fn edge_tag(&self, e: Edge) -> EdgeTag {
        self.edges[e.index()]
    }

    pub fn eval_map(&self, xi: f64, eta: f64) -> Result<MapEval> {
        let basis = self.basis.eval_rational(xi, eta)?;
        let mut x = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        for (k, &idx) in basis.indices.iter().enumerate() {
            let p = self.points[idx];
            for a in 0..2 {
                x[a] += basis.values[k] * p[a];
                jac[a][0] += basis.d_xi[k] * p[a];
                jac[a][1] += basis.d_eta[k] * p[a];
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        Ok(MapEval { x, jac, det, basis })
    }

    pub fn eval_point(&self, xi: f64, eta: f64) -> Result<[f64; 2]> {
        Ok(self.eval_map(xi, eta)?.x)
    }

    pub fn param_range(&self, dir: usize) -> (f64, f64) {
        let kv = self.basis.knots(dir);
        (kv.first(), kv.last())
    }

    /// Parametric coordinates of the point at edge parameter `s`.
    pub fn edge_param(&self, e: Edge, s: f64) -> [f64; 2] {
        let (x0, x1) = self.param_range(0);
        let (y0, y1) = self.param_range(1);
        match e {
            Edge::XiMin => [x0, s],
            Edge::XiMax => [x1, s],
            Edge::EtaMin => [s, y0],
            Edge::EtaMax => [s, y1],
        }
    }

    /// Local control point indices on an edge, ordered along it.
    pub fn edge_indices(&self, e: Edge) -> Vec<usize> {
        let [n0, n1] = self.basis.shape();
        match e {
            Edge::XiMin => (0..n1).map(|j| self.basis.index(0, j)).collect(),
            Edge::XiMax => (0..n1).map(|j| self.basis.index(n0 - 1, j)).collect(),
            Edge::EtaMin => (0..n0).map(|i| self.basis.index(i, 0)).collect(),
            Edge::EtaMax => (0..n0).map(|i| self.basis.index(i, n1 - 1)).collect(),
        }
    }

    pub fn num_elements(&self) -> usize {
        self.basis.knots(0).num_elements() * self.basis.knots(1).num_elements()
    }

    /// Insert knots in one direction.
    pub fn insert_knots(&self, dir: usize, knots: &[f64]) -> Result<Patch> {
        let net: Vec<Vec<f64>> = self.points.iter().map(|p| p.to_vec()).collect();
        let (basis, net) = self.basis.knot_insert(&net, dir, knots)?;
        let points = net.iter().map(|p| [p[0], p[1]]).collect();
        Patch::new(basis, points, self.region, self.edges)
    }

    /// Split every span at its midpoint in both directions.
    pub fn refine_midpoints(&self) -> Result<Patch> {
        let m0 = self.basis.knots(0).midpoints();
        let p = self.insert_knots(0, &m0)?;
        let m1 = p.basis.knots(1).midpoints();
        p.insert_knots(1, &m1)
    }

    /// Gauss points with `p+1` points per direction per element.
    pub fn quadrature_points(&self) -> Result<Vec<QuadPoint>> {
        let n = [self.basis.knots(0).degree() + 1, self.basis.knots(1).degree() + 1];
        self.quadrature_points_with(n)
    }

    pub fn quadrature_points_with(&self, n: [usize; 2]) -> Result<Vec<QuadPoint>> {
        let mut out = Vec::new();
        for_each_gauss(self, n, |element, param, w| {
            let m = self.eval_map(param[0], param[1])?;
            if !(m.det > 0.0) {
                return Err(Error::Geometry(format!(
                    "non-positive Jacobian {} at parameter ({}, {})",
                    m.det, param[0], param[1]
                )));
            }
            out.push(QuadPoint { element, param, x: m.x, weight: w * m.det });
            Ok(())
        })?;
        Ok(out)
    }

    pub fn area(&self) -> Result<f64> {
        Ok(self.quadrature_points()?.iter().map(|q| q.weight).sum())
    }
}

/// Visit every Gauss point of a patch as `(element, (ξ, η), parametric weight)`.
pub fn for_each_gauss<F>(patch: &Patch, n: [usize; 2], mut f: F) -> Result<()>
where
    F: FnMut(usize, [f64; 2], f64) -> Result<()>,
{
    let ex = patch.basis.knots(0).elements();
    let ey = patch.basis.knots(1).elements();
    let (gx, wx) = gauss_legendre(n[0]);
    let (gy, wy) = gauss_legendre(n[1]);
    let mut element = 0;
    for &(b0, b1) in &ey {
        for &(a0, a1) in &ex {
            for (j, &t) in gy.iter().enumerate() {
                let eta = 0.5 * (b0 + b1) + 0.5 * (b1 - b0) * t;
                for (i, &s) in gx.iter().enumerate() {
                    let xi = 0.5 * (a0 + a1) + 0.5 * (a1 - a0) * s;
                    let w = wx[i] * wy[j] * 0.25 * (a1 - a0) * (b1 - b0);
                    f(element, [xi, eta], w)?;
                }
            }
            element += 1;
        }
    }
    Ok(())
}

pub fn greville(kv: &KnotVector) -> Vec<f64> {
    let p = kv.degree();
    let t = kv.knots();
    if p == 0 {
        return (0..kv.num_basis()).map(|i| 0.5 * (t[i] + t[i + 1])).collect();
    }
    (0..kv.num_basis())
        .map(|i| t[i + 1..=i + p].iter().sum::<f64>() / p as f64)
        .collect()
}

/// A planar NURBS curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub knots: KnotVector,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl Curve {
    pub fn eval(&self, u: f64) -> Result<[f64; 2]> {
        let (span, n) = self.knots.eval_basis(u)?;
        let p = self.knots.degree();
        let (mut x, mut y, mut w) = (0.0, 0.0, 0.0);
        for (j, nj) in n.iter().enumerate() {
            let i = span - p + j;
            let wi = nj * self.weights[i];
            x += wi * self.points[i][0];
            y += wi * self.points[i][1];
            w += wi;
        }
        Ok([x / w, y / w])
    }

    pub fn insert_knots(&self, knots: &[f64]) -> Result<Curve> {
        let mut kv = self.knots.clone();
        let mut h: Vec<Vec<f64>> = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| vec![p[0] * w, p[1] * w, *w])
            .collect();
        for &u in knots {
            let (k2, h2) = kv.insert_knot(u, &h)?;
            kv = k2;
            h = h2;
        }
        Ok(Curve {
            knots: kv,
            points: h.iter().map(|q| [q[0] / q[2], q[1] / q[2]]).collect(),
            weights: h.iter().map(|q| q[2]).collect(),
        })
    }

    /// Control point interpolating the curve at a knot of multiplicity `p`.
    fn interpolating_index(&self, u: f64) -> Result<usize> {
        let p = self.knots.degree();
        if u <= self.knots.first() {
            return Ok(0);
        }
        if u >= self.knots.last() {
            return Ok(self.points.len() - 1);
        }
        if self.knots.multiplicity(u) < p {
            return Err(Error::Geometry(format!(
                "curve is not C0-split at parameter {u}"
            )));
        }
        let first = self.knots.knots().iter().position(|&k| k == u).unwrap();
        Ok(first - 1)
    }

    /// Sub-curve on [a, b] rescaled to [0, 1]. Both ends must be C0 breaks.
    pub fn segment(&self, a: f64, b: f64) -> Result<Curve> {
        let p = self.knots.degree();
        let i0 = self.interpolating_index(a)?;
        let i1 = self.interpolating_index(b)?;
        let mut knots = vec![0.0; p + 1];
        for &k in self.knots.knots() {
            if k > a && k < b {
                knots.push((k - a) / (b - a));
            }
        }
        knots.extend(std::iter::repeat(1.0).take(p + 1));
        Ok(Curve {
            knots: KnotVector::new(p, knots)?,
            points: self.points[i0..=i1].to_vec(),
            weights: self.weights[i0..=i1].to_vec(),
        })
    }
}

/// Exact full circle: quadratic, 9 control points, knots at quarters.
pub fn nurbs_circle(radius: f64, start_angle: f64) -> Curve {
    let knots = KnotVector::new(
        2,
        vec![0.0, 0.0, 0.0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1.0, 1.0, 1.0],
    )
    .expect("circle knot vector");
    let r2 = std::f64::consts::SQRT_2;
    let mut points = Vec::with_capacity(9);
    let mut weights = Vec::with_capacity(9);
    for k in 0..9 {
        let th = start_angle + k as f64 * PI / 4.0;
        let (r, w) = if k % 2 == 0 { (radius, 1.0) } else { (radius * r2, r2 / 2.0) };
        points.push([r * th.cos(), r * th.sin()]);
        weights.push(w);
    }
    Curve { knots, points, weights }
}

/// Radial perturbation `r̄ = r + C r sin(k(θ + θ₀))` of control points.
pub fn perturb_star(points: &[[f64; 2]], c: f64, k: f64, theta0: f64) -> Result<Vec<[f64; 2]>> {
    if !(c.abs() < 1.0) {
        return Err(Error::Argument(format!("star amplitude {c} must satisfy |C| < 1")));
    }
    Ok(points
        .iter()
        .map(|p| {
            let th = p[1].atan2(p[0]);
            let s = 1.0 + c * (k * (th + theta0)).sin();
            [p[0] * s, p[1] * s]
        })
        .collect())
}

/// Star perturbation of one of the two circles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarShape {
    pub amplitude: f64,
    pub lobes: f64,
    pub phase: f64,
}

/// Pairing of two patch edges across Γ_I. Side 0 is region 1 and carries the
/// normal; edge parameters map affinely over the given ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub sides: [InterfaceSide; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSide {
    pub patch: usize,
    pub edge: Edge,
    pub range: (f64, f64),
}

impl InterfaceSide {
    pub fn edge_param(&self, t: f64) -> f64 {
        self.range.0 + (self.range.1 - self.range.0) * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSource {
    /// Location in mm.
    pub position: [f64; 2],
    /// Strength in W.
    pub magnitude: f64,
    /// Kernel half-width Δ in mm.
    pub width: f64,
}

/// Smoothed point-source kernel δ̃(φ) = 3/(4Δ)(1 − φ²/Δ²) on φ ≤ Δ.
pub fn smoothed_delta(phi: f64, width: f64) -> f64 {
    if phi.abs() > width {
        0.0
    } else {
        0.75 / width * (1.0 - phi * phi / (width * width))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub length: f64,
    pub r_in: f64,
    pub r_out: f64,
}

/// Global numbering of solution control points. Classes of coincident control
/// points are merged only inside a region; Γ_I stays unmerged.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub patch_dofs: Vec<Vec<usize>>,
    pub n_dofs: usize,
    /// Coincident (region 1, region 2) DOF pairs across every interface.
    pub interface_pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiPatchModel {
    pub patches: Vec<Patch>,
    pub interfaces: Vec<Interface>,
    pub dofs: DofMap,
    pub point_sources: Vec<PointSource>,
    pub dims: ModelDims,
    /// Refinement levels applied since construction.
    pub level: usize,
}

impl MultiPatchModel {
    pub fn new(
        patches: Vec<Patch>,
        interfaces: Vec<Interface>,
        point_sources: Vec<PointSource>,
        dims: ModelDims,
    ) -> Result<Self> {
        let dofs = build_dofs(&patches, &interfaces)?;
        let model = Self { patches, interfaces, dofs, point_sources, dims, level: 0 };
        model.check_interfaces()?;
        Ok(model)
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs
    }

    /// Index of the single design patch, if any.
    pub fn design_patch(&self) -> Option<usize> {
        self.patches.iter().position(|p| p.region == Region::Design)
    }

    pub fn with_point_sources(mut self, sources: Vec<PointSource>) -> Result<Self> {
        let h = 0.5 * self.dims.length;
        for s in &sources {
            if !(s.width > 0.0) {
                return Err(Error::Argument(format!("source width {} must be positive", s.width)));
            }
            if s.position.iter().any(|c| !(c.abs() < h)) {
                return Err(Error::Argument(format!(
                    "point source at ({}, {}) lies outside the domain",
                    s.position[0], s.position[1]
                )));
            }
        }
        self.point_sources = sources;
        Ok(self)
    }

    /// Physical point on both sides of an interface at common parameter t.
    pub fn interface_points(&self, itf: &Interface, t: f64) -> Result<[[f64; 2]; 2]> {
        let mut out = [[0.0; 2]; 2];
        for (k, s) in itf.sides.iter().enumerate() {
            let p = &self.patches[s.patch];
            let uv = p.edge_param(s.edge, s.edge_param(t));
            out[k] = p.eval_point(uv[0], uv[1])?;
        }
        Ok(out)
    }

    fn check_interfaces(&self) -> Result<()> {
        for (n, itf) in self.interfaces.iter().enumerate() {
            for k in 0..50 {
                let t = k as f64 / 49.0;
                let [a, b] = self.interface_points(itf, t)?;
                let d = (a[0] - b[0]).hypot(a[1] - b[1]);
                if d > 1e-10 * (1.0 + self.dims.length) {
                    return Err(Error::Geometry(format!(
                        "interface {n} sides differ by {d} mm at t={t}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn area(&self) -> Result<f64> {
        let mut a = 0.0;
        for p in &self.patches {
            a += p.area()?;
        }
        Ok(a)
    }

    pub fn region_area(&self, region: Region) -> Result<f64> {
        let mut a = 0.0;
        for p in self.patches.iter().filter(|p| p.region == region) {
            a += p.area()?;
        }
        Ok(a)
    }
}

fn build_dofs(patches: &[Patch], interfaces: &[Interface]) -> Result<DofMap> {
    // union-find over (patch, local) boundary control points, per region
    let offsets: Vec<usize> = patches
        .iter()
        .scan(0, |acc, p| {
            let o = *acc;
            *acc += p.points.len();
            Some(o)
        })
        .collect();
    let total: usize = patches.iter().map(|p| p.points.len()).sum();
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let scale = patches
        .iter()
        .flat_map(|p| p.points.iter())
        .fold(1.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    let tol = 1e-9 * scale;
    let mut by_region: BTreeMap<Region, Vec<(usize, [f64; 2])>> = BTreeMap::new();
    for (pi, p) in patches.iter().enumerate() {
        let mut seen = vec![false; p.points.len()];
        for e in Edge::ALL {
            for l in p.edge_indices(e) {
                if !seen[l] {
                    seen[l] = true;
                    by_region.entry(p.region).or_default().push((offsets[pi] + l, p.points[l]));
                }
            }
        }
    }
    for (_, mut pts) in by_region {
        pts.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]));
        for i in 0..pts.len() {
            let mut j = i + 1;
            while j < pts.len() && pts[j].1[0] - pts[i].1[0] <= tol {
                if (pts[j].1[1] - pts[i].1[1]).abs() <= tol {
                    let (a, b) = (find(&mut parent, pts[i].0), find(&mut parent, pts[j].0));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                j += 1;
            }
        }
    }
    let mut global = vec![usize::MAX; total];
    let mut n = 0;
    let mut patch_dofs = Vec::with_capacity(patches.len());
    for (pi, p) in patches.iter().enumerate() {
        let mut d = Vec::with_capacity(p.points.len());
        for l in 0..p.points.len() {
            let r = find(&mut parent, offsets[pi] + l);
            if global[r] == usize::MAX {
                global[r] = n;
                n += 1;
            }
            d.push(global[r]);
        }
        patch_dofs.push(d);
    }
    let mut pairs = Vec::new();
    for (k, itf) in interfaces.iter().enumerate() {
        let mut sides = Vec::new();
        for s in &itf.sides {
            let p = &patches[s.patch];
            let kv = p.basis.knots(s.edge.along());
            let idx = p.edge_indices(s.edge);
            // control points whose support meets the range
            let (lo, hi) = if s.range.0 <= s.range.1 { s.range } else { (s.range.1, s.range.0) };
            let g = greville(kv);
            let sel: Vec<usize> = idx
                .iter()
                .zip(&g)
                .filter(|(_, &gi)| gi >= lo - 1e-14 && gi <= hi + 1e-14)
                .map(|(&l, _)| l)
                .collect();
            let mut sel = sel;
            if s.range.0 > s.range.1 {
                sel.reverse();
            }
            sides.push((s.patch, sel));
        }
        let (pa, a) = &sides[0];
        let (pb, b) = &sides[1];
        if a.len() != b.len() {
            return Err(Error::Geometry(format!(
                "interface {k} is non-conforming: {} vs {} edge control points",
                a.len(),
                b.len()
            )));
        }
        for (&la, &lb) in a.iter().zip(b) {
            let (qa, qb) = (patches[*pa].points[la], patches[*pb].points[lb]);
            let (wa, wb) = (patches[*pa].basis.weights()[la], patches[*pb].basis.weights()[lb]);
            if (qa[0] - qb[0]).hypot(qa[1] - qb[1]) > tol || (wa - wb).abs() > 1e-12 * wa.max(wb) {
                return Err(Error::Geometry(format!(
                    "interface {k} is non-conforming at control points {la}/{lb}"
                )));
            }
            pairs.push((patch_dofs[*pa][la], patch_dofs[*pb][lb]));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut used = vec![false; n];
    for &(a, b) in &pairs {
        if used[a] || used[b] || a == b {
            return Err(Error::Geometry(format!(
                "interface DOF pairs overlap at DOFs {a}/{b}"
            )));
        }
        used[a] = true;
        used[b] = true;
    }
    Ok(DofMap { patch_dofs, n_dofs: n, interface_pairs: pairs })
}

fn check_dims(l: f64, r_in: f64, r_out: f64) -> Result<()> {
    if !(l.is_finite() && r_in.is_finite() && r_out.is_finite()) {
        return Err(Error::Argument("geometry lengths must be finite".into()));
    }
    if !(0.0 < r_in && r_in < r_out && r_out < 0.5 * l) {
        return Err(Error::Argument(format!(
            "need 0 < R_in < R_out < L/2, got R_in={r_in}, R_out={r_out}, L={l}"
        )));
    }
    Ok(())
}

const SQUARE_SIDES: [Side; 4] = [Side::Right, Side::Top, Side::Left, Side::Bottom];

/// Three-region model from matching inner and outer closed curves that start
/// at −45° and have C0 breaks at the quarters.
pub fn model_from_curves(l: f64, inner: &Curve, outer: &Curve, dims: ModelDims) -> Result<MultiPatchModel> {
    if inner.knots != outer.knots || inner.weights != outer.weights {
        return Err(Error::Geometry("inner and outer curves must share knots and weights".into()));
    }
    let lin = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0])?;
    let n = inner.points.len();
    let h = 0.5 * l;

    // Ω_in: collapsed disk, η = 1 at the centre
    let mut pts = inner.points.clone();
    pts.extend(std::iter::repeat([0.0, 0.0]).take(n));
    let mut w = inner.weights.clone();
    w.extend(inner.weights.iter().copied());
    let disk = Patch::new(
        RationalBasis::new(inner.knots.clone(), lin.clone(), w.clone())?,
        pts,
        Region::In,
        [EdgeTag::None, EdgeTag::None, EdgeTag::Interface, EdgeTag::None],
    )?;

    // Ω_design: outer curve at η = 0, inner curve at η = 1
    let mut pts = outer.points.clone();
    pts.extend(inner.points.iter().copied());
    let design = Patch::new(
        RationalBasis::new(outer.knots.clone(), lin.clone(), w)?,
        pts,
        Region::Design,
        [EdgeTag::None, EdgeTag::None, EdgeTag::Interface, EdgeTag::Interface],
    )?;

    let mut patches = vec![disk, design];
    let mut interfaces = vec![Interface {
        sides: [
            InterfaceSide { patch: 0, edge: Edge::EtaMin, range: (0.0, 1.0) },
            InterfaceSide { patch: 1, edge: Edge::EtaMax, range: (0.0, 1.0) },
        ],
    }];
    let corners = [[h, -h], [h, h], [-h, h], [-h, -h]];
    for (k, side) in SQUARE_SIDES.iter().enumerate() {
        let a = k as f64 / 4.0;
        let b = (k + 1) as f64 / 4.0;
        let seg = outer.segment(a, b)?;
        let (c0, c1) = (corners[k], corners[(k + 1) % 4]);
        let g = greville(&seg.knots);
        let m = seg.points.len();
        let mut pts: Vec<[f64; 2]> = g
            .iter()
            .map(|&u| [c0[0] + (c1[0] - c0[0]) * u, c0[1] + (c1[1] - c0[1]) * u])
            .collect();
        pts.extend(seg.points.iter().copied());
        let mut w = vec![1.0; m];
        w.extend(seg.weights.iter().copied());
        let patch = Patch::new(
            RationalBasis::new(seg.knots.clone(), lin.clone(), w)?,
            pts,
            Region::Out,
            [EdgeTag::None, EdgeTag::None, EdgeTag::Boundary(*side), EdgeTag::Interface],
        )?;
        patches.push(patch);
        interfaces.push(Interface {
            sides: [
                InterfaceSide { patch: 1, edge: Edge::EtaMin, range: (a, b) },
                InterfaceSide { patch: patches.len() - 1, edge: Edge::EtaMax, range: (0.0, 1.0) },
            ],
        });
    }
    let model = MultiPatchModel::new(patches, interfaces, Vec::new(), dims)?;
    for (i, p) in model.patches.iter().enumerate() {
        p.quadrature_points().map_err(|e| {
            Error::Geometry(format!("patch {i} ({:?}) is invalid: {e}", p.region))
        })?;
    }
    Ok(model)
}

impl Edge {
    pub fn opposite(self) -> Edge {
        match self {
            Edge::XiMin => Edge::XiMax,
            Edge::XiMax => Edge::XiMin,
            Edge::EtaMin => Edge::EtaMax,
            Edge::EtaMax => Edge::EtaMin,
        }
    }
}

/// Square plate of side `l` with a circular inclusion of radius `r_in` inside
/// a design annulus of outer radius `r_out`, centred at the origin.
pub fn build_annulus_model(l: f64, r_in: f64, r_out: f64) -> Result<MultiPatchModel> {
    check_dims(l, r_in, r_out)?;
    let start = -PI / 4.0;
    let inner = nurbs_circle(r_in, start);
    let outer = nurbs_circle(r_out, start);
    model_from_curves(l, &inner, &outer, ModelDims { length: l, r_in, r_out })
}

/// Star-perturbed variant: both circles get three extra knots per quarter and
/// their control points are perturbed radially.
pub fn build_star_model(
    l: f64,
    r_in: f64,
    r_out: f64,
    inner_star: StarShape,
    outer_star: StarShape,
) -> Result<MultiPatchModel> {
    check_dims(l, r_in, r_out)?;
    let start = -PI / 4.0;
    let extra = star_knots();
    let mut inner = nurbs_circle(r_in, start).insert_knots(&extra)?;
    let mut outer = nurbs_circle(r_out, start).insert_knots(&extra)?;
    inner.points = perturb_star(&inner.points, inner_star.amplitude, inner_star.lobes, inner_star.phase)?;
    outer.points = perturb_star(&outer.points, outer_star.amplitude, outer_star.lobes, outer_star.phase)?;
    model_from_curves(l, &inner, &outer, ModelDims { length: l, r_in, r_out })
}

/// The twelve knots that split each circle quarter into four spans.
pub fn star_knots() -> Vec<f64> {
    let mut k = Vec::new();
    for q in 0..4 {
        for j in 1..4 {
            k.push(q as f64 / 4.0 + j as f64 / 16.0);
        }
    }
    k
}

/// Apply `levels` rounds of midpoint refinement to every patch.
pub fn refine_model(model: &MultiPatchModel, levels: usize) -> Result<MultiPatchModel> {
    let mut patches = model.patches.clone();
    for _ in 0..levels {
        patches = patches.iter().map(|p| p.refine_midpoints()).collect::<Result<_>>()?;
    }
    let mut out = MultiPatchModel::new(
        patches,
        model.interfaces.clone(),
        model.point_sources.clone(),
        model.dims,
    )?;
    out.level = model.level + levels;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_is_exact() {
        let c = nurbs_circle(3.0, 0.0);
        for k in 0..=200 {
            let p = c.eval(k as f64 / 200.0).unwrap();
            assert!((p[0].hypot(p[1]) - 3.0).abs() < 1e-12);
        }
        let c2 = c.insert_knots(&star_knots()).unwrap();
        assert_eq!(c2.points.len(), 21);
        for k in 0..=200 {
            let u = k as f64 / 200.0;
            let (a, b) = (c.eval(u).unwrap(), c2.eval(u).unwrap());
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_matches_parent() {
        let c = nurbs_circle(2.0, -PI / 4.0).insert_knots(&[0.3, 0.6]).unwrap();
        let s = c.segment(0.25, 0.5).unwrap();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let a = s.eval(t).unwrap();
            let b = c.eval(0.25 + 0.25 * t).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        assert!(c.segment(0.2, 0.5).is_err());
    }

    #[test]
    fn unit_square_area() {
        let p = Patch::rectangle([0.0, 0.0], [1.0, 1.0], [2, 2], [3, 2], Region::Out, [EdgeTag::None; 4])
            .unwrap();
        assert!((p.area().unwrap() - 1.0).abs() < 1e-14);
        // cubic integrand on a degree-2 patch
        let q = p.quadrature_points().unwrap();
        let s: f64 = q.iter().map(|q| q.weight * q.x[0].powi(3) * q.x[1].powi(2)).sum();
        assert!((s - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn model_dof_counts_and_merging() {
        let m = build_annulus_model(140.0, 10.0, 50.0).unwrap();
        assert_eq!(m.patches.len(), 6);
        // disk: 8 ring + 1 centre; design: 16; out: 4 * 6 - 8
        assert_eq!(m.n_dofs(), 9 + 16 + 16);
        assert_eq!(m.dofs.interface_pairs.len(), 16);
        let m4 = refine_model(&m, 4).unwrap();
        assert_eq!(m4.n_dofs(), 3401);
        let m5 = refine_model(&m4, 1).unwrap();
        assert_eq!(m5.n_dofs(), 12937);
    }

    #[test]
    fn rejects_bad_radii() {
        assert!(matches!(build_annulus_model(140.0, 60.0, 50.0), Err(Error::Argument(_))));
        assert!(build_annulus_model(140.0, 10.0, 80.0).is_err());
    }

    #[test]
    fn star_perturbation() {
        let c = nurbs_circle(15.0, 0.0).insert_knots(&star_knots()).unwrap();
        assert_eq!(perturb_star(&c.points, 0.0, 5.0, PI).unwrap(), c.points);
        let p = perturb_star(&c.points, 0.3, 5.0, PI).unwrap();
        for (a, b) in c.points.iter().zip(&p) {
            let th = a[1].atan2(a[0]);
            let r = a[0].hypot(a[1]);
            assert!((b[1].atan2(b[0]) - th).abs() < 1e-12);
            assert!((b[0].hypot(b[1]) - r * (1.0 + 0.3 * (5.0 * (th + PI)).sin())).abs() < 1e-12);
        }
        assert!(perturb_star(&c.points, 1.0, 5.0, 0.0).is_err());
        let s = StarShape { amplitude: 0.3, lobes: 5.0, phase: PI };
        let o = StarShape { amplitude: 0.4, lobes: 8.0, phase: -PI / 2.0 };
        let m = build_star_model(140.0, 15.0, 40.0, s, o).unwrap();
        // rational Jacobians need more than the default Gauss rule
        let a: f64 = m
            .patches
            .iter()
            .flat_map(|p| p.quadrature_points_with([12, 12]).unwrap())
            .map(|q| q.weight)
            .sum();
        assert!((a - 140.0 * 140.0).abs() < 1e-6 * 140.0 * 140.0, "{a}");
    }

    #[test]
    fn delta_kernel() {
        assert_eq!(smoothed_delta(0.0, 2.0), 0.375);
        assert_eq!(smoothed_delta(2.0, 2.0), 0.0);
        assert_eq!(smoothed_delta(2.5, 2.0), 0.0);
    }
}
