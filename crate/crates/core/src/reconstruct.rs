//! Full-scale lattice reconstruction from a density field: one gyroid unit
//! cell per voxel with wall parameter driven by the local density, trimmed
//! against the design region, plus marching-squares contours.
//!
//! The 2D raster is the z = a/4 slice of the 3D gyroid.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design_field::DensityField;
use crate::error::{Error, Result};
use crate::geometry::{Edge, Patch};

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_ITERS: usize = 50;

/// Result of inverting a patch map at a physical point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub param: [f64; 2],
    /// Distance from the point to the image of `param`, mm.
    pub residual: f64,
    /// False when the point lies outside the patch image and `param` is the
    /// nearest parametric point on its boundary.
    pub inside: bool,
}

fn is_periodic_xi(patch: &Patch) -> Result<bool> {
    let (x0, x1) = patch.param_range(0);
    let (y0, y1) = patch.param_range(1);
    for s in [0.0, 0.37, 1.0] {
        let y = y0 + (y1 - y0) * s;
        let a = patch.eval_point(x0, y)?;
        let b = patch.eval_point(x1, y)?;
        if (a[0] - b[0]).hypot(a[1] - b[1]) > 1e-9 * (1.0 + a[0].abs() + a[1].abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Newton inversion of a patch map with projection onto the parameter box.
/// Closed patches wrap in ξ.
pub fn invert_map(patch: &Patch, point: [f64; 2]) -> Result<Inversion> {
    if !(point[0].is_finite() && point[1].is_finite()) {
        return Err(Error::Argument("point must be finite".into()));
    }
    let periodic = is_periodic_xi(patch)?;
    let (x0, x1) = patch.param_range(0);
    let (y0, y1) = patch.param_range(1);

    // start from the closest point of a coarse parametric grid
    let n = 32;
    let mut u = [x0, y0];
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let c = [x0 + (x1 - x0) * i as f64 / n as f64, y0 + (y1 - y0) * j as f64 / n as f64];
            let p = patch.eval_point(c[0], c[1])?;
            let d = (p[0] - point[0]).hypot(p[1] - point[1]);
            if d < best {
                best = d;
                u = c;
            }
        }
    }

    let wrap = |x: f64| {
        if periodic {
            let w = x1 - x0;
            x0 + (x - x0).rem_euclid(w)
        } else {
            x.clamp(x0, x1)
        }
    };
    let mut edge: Option<f64> = None;
    for _ in 0..NEWTON_ITERS {
        if let Some(yb) = edge {
            // nearest point on an η edge: Newton on r·∂F/∂ξ = 0 with a
            // differenced derivative
            let f = |x: f64| -> Result<f64> {
                let m = patch.eval_map(wrap(x), yb)?;
                Ok((point[0] - m.x[0]) * m.jac[0][0] + (point[1] - m.x[1]) * m.jac[1][0])
            };
            let h = 1e-6 * (x1 - x0);
            let fx = f(u[0])?;
            let df = (f(u[0] + h)? - f(u[0] - h)?) / (2.0 * h);
            let dx = if df < 0.0 { -fx / df } else { 0.0 };
            let dx = dx.clamp(-0.1 * (x1 - x0), 0.1 * (x1 - x0));
            u = [wrap(u[0] + dx), yb];
            if dx.abs() < 1e-12 * (x1 - x0) {
                let p = patch.eval_point(u[0], u[1])?;
                let res = (p[0] - point[0]).hypot(p[1] - point[1]);
                return Ok(Inversion { param: u, residual: res, inside: res < NEWTON_TOL });
            }
            continue;
        }
        let m = patch.eval_map(u[0], u[1])?;
        let r = [point[0] - m.x[0], point[1] - m.x[1]];
        let res = r[0].hypot(r[1]);
        if res < NEWTON_TOL {
            return Ok(Inversion { param: u, residual: res, inside: true });
        }
        let j = m.jac;
        let du = if m.det.abs() > 1e-14 {
            [(j[1][1] * r[0] - j[0][1] * r[1]) / m.det, (-j[1][0] * r[0] + j[0][0] * r[1]) / m.det]
        } else {
            [0.0, f64::NAN]
        };
        let eta = u[1] + du[1];
        if eta >= y0 && eta <= y1 {
            u = [wrap(u[0] + du[0]), eta];
        } else {
            let yb = if eta.is_nan() {
                if u[1] - y0 < y1 - u[1] { y0 } else { y1 }
            } else {
                eta.clamp(y0, y1)
            };
            // only commit to the edge once the iterate sits on it
            if u[1] == yb {
                edge = Some(yb);
            }
            u = [wrap(u[0] + du[0]), yb];
        }
    }
    Err(Error::Projection(format!(
        "inverse map did not converge at ({}, {}) within {NEWTON_ITERS} iterations",
        point[0], point[1]
    )))
}

/// Density at a physical point; points outside the design image take the
/// value at the nearest parametric point.
pub fn sample_density(field: &DensityField, point: [f64; 2]) -> Result<(f64, Inversion)> {
    let inv = invert_map(field.patch(), point)?;
    let v = field.eval_density(inv.param[0], inv.param[1])?.0;
    Ok((v, inv))
}

/// Gyroid wall parameter from porosity.
pub fn gyroid_t(v: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&v) {
        return Err(Error::Argument(format!("porosity {v} must lie in [0, 1)")));
    }
    Ok(0.65 / (1.0 - v))
}

/// Gyroid level-set value with period `a`.
pub fn gyroid(p: [f64; 3], a: f64) -> f64 {
    let k = 2.0 * PI / a;
    let (x, y, z) = (k * p[0], k * p[1], k * p[2]);
    x.cos() * y.sin() + y.cos() * z.sin() + z.cos() * x.sin()
}

/// Material test `g + t ≥ 0 and g − t ≤ 0`, with both level-set values.
pub fn gyroid_field(p: [f64; 3], a: f64, t: f64) -> (bool, f64, f64) {
    let g = gyroid(p, a);
    (g + t >= 0.0 && g - t <= 0.0, g + t, g - t)
}

/// Monte-Carlo material fraction of one unit cell.
pub fn material_fraction(t: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hit = 0usize;
    for _ in 0..samples {
        let p = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
        if gyroid(p, 1.0).abs() <= t {
            hit += 1;
        }
    }
    hit as f64 / samples.max(1) as f64
}

/// Closed polygon sampled along one η edge of a patch.
fn edge_polygon(patch: &Patch, edge: Edge, n: usize) -> Result<Vec<[f64; 2]>> {
    let (x0, x1) = patch.param_range(0);
    (0..n)
        .map(|k| {
            let s = x0 + (x1 - x0) * k as f64 / n as f64;
            let uv = patch.edge_param(edge, s);
            patch.eval_point(uv[0], uv[1])
        })
        .collect()
}

/// Sorted x coordinates where a horizontal line crosses a closed polygon.
fn crossings(poly: &[[f64; 2]], y: f64) -> Vec<f64> {
    let n = poly.len();
    let mut xs = Vec::new();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > y) != (b[1] > y) {
            xs.push(a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs
}

/// Even-odd test against precomputed crossings of the point's row.
fn inside_row(xs: &[f64], x: f64) -> bool {
    xs.iter().filter(|&&c| x < c).count() % 2 == 1
}

/// Voxel background grid and the three raster stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Voxel side, mm.
    pub a: f64,
    /// Voxels per side.
    pub voxels: usize,
    /// Lower-left corner of the background box, mm.
    pub origin: [f64; 2],
    /// Pixels per voxel side.
    pub resolution: usize,
    /// Per voxel, row-major from the bottom row: centre density and wall
    /// parameter, both zero for empty voxels.
    pub density: Vec<f64>,
    pub wall: Vec<f64>,
    /// Voxel touches the design region.
    pub occupied: Vec<bool>,
    /// Pixel rasters, row 0 at the top.
    pub mask: Vec<Vec<bool>>,
    pub tessellation: Vec<Vec<bool>>,
    pub trimmed: Vec<Vec<bool>>,
}

impl Reconstruction {
    pub fn pixel_size(&self) -> f64 {
        self.a / self.resolution as f64
    }

    /// Centre of pixel `(row, col)`, mm.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let h = self.pixel_size();
        let n = self.voxels * self.resolution;
        [self.origin[0] + (col as f64 + 0.5) * h, self.origin[1] + ((n - 1 - row) as f64 + 0.5) * h]
    }

    pub fn to_gray(raster: &[Vec<bool>]) -> Vec<Vec<u8>> {
        raster.iter().map(|r| r.iter().map(|&b| if b { 0 } else { 255 }).collect()).collect()
    }

    /// Material fraction of the trimmed raster within the mask.
    pub fn fill_fraction(&self) -> f64 {
        let (mut m, mut t) = (0usize, 0usize);
        for (mr, tr) in self.mask.iter().zip(&self.trimmed) {
            m += mr.iter().filter(|&&b| b).count();
            t += tr.iter().filter(|&&b| b).count();
        }
        t as f64 / m.max(1) as f64
    }
}

/// Tessellate the design region with one gyroid cell per voxel of side `a`
/// and trim against the region.
pub fn reconstruct_and_trim(field: &DensityField, a: f64, resolution: usize) -> Result<Reconstruction> {
    let patch = field.patch();
    let outer = edge_polygon(patch, Edge::EtaMin, 2048)?;
    let inner = edge_polygon(patch, Edge::EtaMax, 2048)?;
    let half = outer.iter().chain(&inner).fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    if !(a.is_finite() && a > 0.0) || resolution == 0 {
        return Err(Error::Argument(format!("voxel size {a} and resolution {resolution} must be positive")));
    }
    let voxels = (2.0 * half / a - 1e-9).ceil().max(1.0) as usize;
    if voxels > 2048 || voxels * resolution > 16384 {
        return Err(Error::Argument(format!("voxel size {a} gives a {voxels}-voxel grid, too fine")));
    }
    // centre the grid on the region
    let origin = [-0.5 * voxels as f64 * a, -0.5 * voxels as f64 * a];
    let n = voxels * resolution;
    let mut rec = Reconstruction {
        a,
        voxels,
        origin,
        resolution,
        density: vec![0.0; voxels * voxels],
        wall: vec![0.0; voxels * voxels],
        occupied: vec![false; voxels * voxels],
        mask: vec![vec![false; n]; n],
        tessellation: vec![vec![false; n]; n],
        trimmed: vec![vec![false; n]; n],
    };
    for row in 0..n {
        let y = rec.pixel_center(row, 0)[1];
        let (xo, xi) = (crossings(&outer, y), crossings(&inner, y));
        for col in 0..n {
            let p = rec.pixel_center(row, col);
            if inside_row(&xo, p[0]) && !inside_row(&xi, p[0]) {
                rec.mask[row][col] = true;
                let (vi, vj) = (col / resolution, (n - 1 - row) / resolution);
                rec.occupied[vj * voxels + vi] = true;
            }
        }
    }
    for vj in 0..voxels {
        for vi in 0..voxels {
            let k = vj * voxels + vi;
            let c = [origin[0] + (vi as f64 + 0.5) * a, origin[1] + (vj as f64 + 0.5) * a];
            // voxels wholly outside the region stay empty
            if !rec.occupied[k] {
                continue;
            }
            let (v, _) = sample_density(field, c)?;
            rec.density[k] = v;
            rec.wall[k] = gyroid_t(v)?;
        }
    }
    let z = 0.25 * a;
    for row in 0..n {
        for col in 0..n {
            let p = rec.pixel_center(row, col);
            let (vi, vj) = (col / resolution, (n - 1 - row) / resolution);
            let k = vj * voxels + vi;
            let local = [p[0] - origin[0], p[1] - origin[1], z];
            let solid = rec.occupied[k] && gyroid_field(local, a, rec.wall[k]).0;
            rec.tessellation[row][col] = solid;
            rec.trimmed[row][col] = solid && rec.mask[row][col];
        }
    }
    Ok(rec)
}

/// Closed contours of a binary raster by marching squares. The raster is
/// padded with empty pixels so every contour closes; points are edge
/// midpoints between pixel centres in the raster's physical frame.
pub fn marching_squares(rec: &Reconstruction, raster: &[Vec<bool>]) -> Vec<Vec<[f64; 2]>> {
    let h = raster.len();
    let w = raster.first().map_or(0, Vec::len);
    let at = |r: isize, c: isize| -> bool {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && raster[r as usize][c as usize]
    };
    // edge keys: (row2, col2) doubled-grid coordinates of edge midpoints
    type Key = (isize, isize);
    let mut segs: Vec<(Key, Key)> = Vec::new();
    for r in -1..h as isize {
        for c in -1..w as isize {
            // corners: tl (r,c), tr (r,c+1), br (r+1,c+1), bl (r+1,c)
            let tl = at(r, c);
            let tr = at(r, c + 1);
            let br = at(r + 1, c + 1);
            let bl = at(r + 1, c);
            let top = (2 * r, 2 * c + 1);
            let right = (2 * r + 1, 2 * c + 2);
            let bottom = (2 * r + 2, 2 * c + 1);
            let left = (2 * r + 1, 2 * c);
            let code = (tl as u8) << 3 | (tr as u8) << 2 | (br as u8) << 1 | bl as u8;
            match code {
                0 | 15 => {}
                1 | 14 => segs.push((left, bottom)),
                2 | 13 => segs.push((bottom, right)),
                3 | 12 => segs.push((left, right)),
                4 | 11 => segs.push((top, right)),
                6 | 9 => segs.push((top, bottom)),
                7 | 8 => segs.push((left, top)),
                // saddles: keep diagonal material pixels connected
                5 => {
                    segs.push((left, top));
                    segs.push((bottom, right));
                }
                10 => {
                    segs.push((top, right));
                    segs.push((left, bottom));
                }
                _ => unreachable!(),
            }
        }
    }
    let mut adj: HashMap<Key, Vec<usize>> = HashMap::new();
    for (i, (a, b)) in segs.iter().enumerate() {
        adj.entry(*a).or_default().push(i);
        adj.entry(*b).or_default().push(i);
    }
    let hp = rec.pixel_size();
    let n = h as f64;
    let to_xy = |k: Key| {
        let (r2, c2) = k;
        let col = c2 as f64 / 2.0;
        let row = r2 as f64 / 2.0;
        [rec.origin[0] + (col + 0.5) * hp, rec.origin[1] + (n - 1.0 - row + 0.5) * hp]
    };
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    for s in 0..segs.len() {
        if used[s] {
            continue;
        }
        used[s] = true;
        let start = segs[s].0;
        let mut cur = segs[s].1;
        let mut poly = vec![to_xy(start), to_xy(cur)];
        while cur != start {
            let Some(&next) = adj[&cur].iter().find(|&&i| !used[i]) else { break };
            used[next] = true;
            let (a, b) = segs[next];
            cur = if a == cur { b } else { a };
            poly.push(to_xy(cur));
        }
        out.push(poly);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_annulus_model;

    fn field(v: f64) -> DensityField {
        let m = build_annulus_model(140.0, 10.0, 50.0).unwrap();
        let f = DensityField::design_mesh(&m.patches[1], 3, 4).unwrap();
        let n = f.n_coeffs();
        f.with_values(&vec![v; n]).unwrap()
    }

    #[test]
    fn gyroid_t_values() {
        assert_eq!(gyroid_t(0.0).unwrap(), 0.65);
        assert!((gyroid_t(0.2).unwrap() - 0.8125).abs() < 1e-15);
        assert!(gyroid_t(1.0).is_err());
        assert!(gyroid_t(-0.1).is_err());
        assert!(gyroid_t(f64::NAN).is_err());
    }

    #[test]
    fn gyroid_basics() {
        assert_eq!(gyroid([0.0; 3], 3.0), 0.0);
        assert!(gyroid_field([0.0; 3], 3.0, 1e-9).0);
        let mut max: f64 = 0.0;
        let n = 60;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = [i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64];
                    max = max.max(gyroid(p, 1.0).abs());
                }
            }
        }
        assert!(max <= 1.5 + 1e-12 && max > 1.4);
    }

    #[test]
    fn inversion_inside_and_outside() {
        let f = field(0.4);
        let p = f.patch();
        for &(u, v) in &[(0.1, 0.3), (0.0, 0.5), (0.9999, 0.0), (0.5, 1.0), (0.62, 0.77)] {
            let x = p.eval_point(u, v).unwrap();
            let inv = invert_map(p, x).unwrap();
            assert!(inv.inside && inv.residual < 1e-10, "{u} {v}: {inv:?}");
            let y = p.eval_point(inv.param[0], inv.param[1]).unwrap();
            assert!((y[0] - x[0]).hypot(y[1] - x[1]) < 1e-10);
        }
        // beyond the outer circle projects radially onto it
        let inv = invert_map(p, [0.0, 60.0]).unwrap();
        assert!(!inv.inside);
        let y = p.eval_point(inv.param[0], inv.param[1]).unwrap();
        assert!((y[0]).abs() < 1e-8 && (y[1] - 50.0).abs() < 1e-8, "{y:?}");
        let (v, _) = sample_density(&f, [3.0, 1.0]).unwrap();
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn stages_and_trimming() {
        let f = field(0.0);
        let r = reconstruct_and_trim(&f, 100.0 / 11.0, 8).unwrap();
        assert_eq!(r.voxels, 11);
        for i in 0..r.mask.len() {
            for j in 0..r.mask.len() {
                assert!(!r.trimmed[i][j] || (r.tessellation[i][j] && r.mask[i][j]));
            }
        }
        // the corner voxel is outside the annulus
        assert!(!r.occupied[0]);
        assert!(r.occupied[5]);
        let frac = r.fill_fraction();
        assert!(frac > 0.1 && frac < 0.9, "{frac}");
        assert!(reconstruct_and_trim(&f, 0.0, 8).is_err());
        assert!(reconstruct_and_trim(&f, f64::NAN, 8).is_err());
    }

    #[test]
    fn contours_close() {
        let f = field(0.2);
        let r = reconstruct_and_trim(&f, 20.0, 6).unwrap();
        let cs = marching_squares(&r, &r.trimmed);
        assert!(!cs.is_empty());
        for c in &cs {
            assert_eq!(c.first(), c.last());
        }
        // a single pixel gives one diamond
        let one = vec![vec![false, false, false], vec![false, true, false], vec![false, false, false]];
        let cs = marching_squares(&r, &one);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].len(), 5);
    }
}
