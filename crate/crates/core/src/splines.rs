//! B-spline and NURBS basis evaluation and knot insertion.
//!
//! Evaluation returns only the `p+1` locally nonzero functions together with
//! the knot span; mapping to global indices happens in [`crate::geometry`].

use crate::error::{Error, Result};

/// Clamped knot vector of degree `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::Argument(format!(
                "knot vector of degree {p} needs at least {} entries, got {}",
                2 * (p + 1),
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Argument("knot vector contains non-finite values".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Argument("knots must be non-decreasing".into()));
        }
        let n = knots.len();
        let (a, b) = (knots[0], knots[n - 1]);
        if b <= a {
            return Err(Error::Argument("knot vector has an empty parameter range".into()));
        }
        let range = b - a;
        if !range.is_normal() || range < f64::EPSILON * a.abs().max(b.abs()) {
            return Err(Error::Argument(format!("knot vector parameter range [{a}, {b}] is not representable")));
        }
        if knots.windows(2).any(|w| w[1] > w[0] && w[1] - w[0] < 1e-12 * range) {
            return Err(Error::Argument("knot spans shorter than 1e-12 of the range".into()));
        }
        if knots[..=p].iter().any(|&k| k != a) || knots[n - p - 1..].iter().any(|&k| k != b) {
            return Err(Error::Argument(format!(
                "knot vector must be clamped: first and last knots repeated {} times",
                p + 1
            )));
        }
        let kv = Self { degree, knots };
        for u in kv.unique_interior() {
            let m = kv.multiplicity(u);
            if m > p {
                return Err(Error::Argument(format!(
                    "interior knot {u} has multiplicity {m} > degree {p}"
                )));
            }
        }
        Ok(kv)
    }

    /// Clamped uniform knot vector on [0, 1] with `elements` spans.
    pub fn uniform(degree: usize, elements: usize) -> Result<Self> {
        if elements == 0 {
            return Err(Error::Argument("need at least one element".into()));
        }
        let mut knots = vec![0.0; degree + 1];
        for i in 1..elements {
            knots.push(i as f64 / elements as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(degree, knots)
    }

    /// Parse `"p: k0 k1 ..."`; knots may be separated by spaces or commas.
    pub fn parse(text: &str) -> Result<Self> {
        let (deg, rest) = text.split_once(':').ok_or_else(|| Error::Parse {
            line: 1,
            msg: "expected `degree: knots...`".into(),
        })?;
        let degree: usize = deg.trim().parse().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("invalid degree `{}`", deg.trim()),
        })?;
        if degree > 16 {
            return Err(Error::Argument(format!("degree {degree} is unsupported (max 16)")));
        }
        let knots = rest
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse { line: 1, msg: format!("invalid knot `{t}`") })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn multiplicity(&self, u: f64) -> usize {
        self.knots.iter().filter(|&&k| k == u).count()
    }

    fn unique_interior(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if k > self.first() && k < self.last() && out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    /// Nonzero knot spans as `(start, end)` pairs, i.e. the elements.
    pub fn elements(&self) -> Vec<(f64, f64)> {
        self.knots
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[0], w[1]))
            .collect()
    }

    pub fn num_elements(&self) -> usize {
        self.elements().len()
    }

    /// Midpoints of every nonzero span.
    pub fn midpoints(&self) -> Vec<f64> {
        self.elements().iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Index `k` with `knots[k] <= u < knots[k+1]`; the last nonzero span is
    /// returned for `u` equal to the upper end.
    pub fn find_span(&self, u: f64) -> Result<usize> {
        if !u.is_finite() || u < self.first() || u > self.last() {
            return Err(Error::Domain(format!(
                "parameter {u} outside [{}, {}]",
                self.first(),
                self.last()
            )));
        }
        let p = self.degree;
        let n = self.num_basis();
        if u >= self.knots[n] {
            return Ok(n - 1);
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if u < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Nonzero basis values at `u`. Function `span - p + j` has value `values[j]`.
    pub fn eval_basis(&self, u: f64) -> Result<(usize, Vec<f64>)> {
        let span = self.find_span(u)?;
        Ok((span, self.basis_at_span(span, u)))
    }

    fn basis_at_span(&self, span: usize, u: f64) -> Vec<f64> {
        let p = self.degree;
        let t = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = u - t[span + 1 - j];
            right[j] = t[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        n
    }

    /// Basis values and derivatives up to order `k`; row `d` holds the
    /// `d`-th derivatives of the `p+1` nonzero functions.
    pub fn eval_basis_derivs(&self, u: f64, k: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let p = self.degree;
        if k > p {
            return Err(Error::Argument(format!(
                "derivative order {k} exceeds degree {p}"
            )));
        }
        let span = self.find_span(u)?;
        let t = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - t[span + 1 - j];
            right[j] = t[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let tmp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; k + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=k {
                let mut d = 0.0;
                let rk = r as isize - kk as isize;
                let pk = p - kk;
                if r >= kk {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { kk - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r as isize <= pk as isize {
                    a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                    d += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for (kk, row) in ders.iter_mut().enumerate().skip(1) {
            for v in row.iter_mut() {
                *v *= fac;
            }
            fac *= (p - kk) as f64;
        }
        Ok((span, ders))
    }

    /// Single insertion of `u` into a curve with homogeneous points of any
    /// dimension. Returns the new knot vector and control points.
    pub fn insert_knot(&self, u: f64, points: &[Vec<f64>]) -> Result<(KnotVector, Vec<Vec<f64>>)> {
        let p = self.degree;
        if points.len() != self.num_basis() {
            return Err(Error::Argument(format!(
                "{} control points for {} basis functions",
                points.len(),
                self.num_basis()
            )));
        }
        if !(u > self.first() && u < self.last()) {
            return Err(Error::Argument(format!(
                "inserted knot {u} must lie strictly inside ({}, {})",
                self.first(),
                self.last()
            )));
        }
        if self.multiplicity(u) + 1 > p {
            return Err(Error::Argument(format!(
                "inserting {u} would raise its multiplicity above degree {p}"
            )));
        }
        let k = self.find_span(u)?;
        let t = &self.knots;
        let mut q = Vec::with_capacity(points.len() + 1);
        q.extend(points[..=k - p].iter().cloned());
        for i in (k - p + 1)..=k {
            let alpha = (u - t[i]) / (t[i + p] - t[i]);
            let pt: Vec<f64> = points[i]
                .iter()
                .zip(&points[i - 1])
                .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                .collect();
            q.push(pt);
        }
        for pt in &points[k..] {
            q.push(pt.clone());
        }
        let mut knots = t.clone();
        knots.insert(k + 1, u);
        Ok((KnotVector { degree: p, knots }, q))
    }
}

/// Bivariate NURBS basis: tensor product of two knot vectors with one
/// positive weight per control point, stored with the first direction fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalBasis {
    kv: [KnotVector; 2],
    weights: Vec<f64>,
}

/// Local rational basis at one parametric point. Entry `j` belongs to the
/// control point `indices[j]`.
#[derive(Debug, Clone)]
pub struct RationalEval {
    pub spans: [usize; 2],
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub d_xi: Vec<f64>,
    pub d_eta: Vec<f64>,
}

impl RationalBasis {
    pub fn new(kv_xi: KnotVector, kv_eta: KnotVector, weights: Vec<f64>) -> Result<Self> {
        let n = kv_xi.num_basis() * kv_eta.num_basis();
        if weights.len() != n {
            return Err(Error::Argument(format!(
                "{} weights for {n} basis functions",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Argument("weights must be positive and finite".into()));
        }
        Ok(Self { kv: [kv_xi, kv_eta], weights })
    }

    pub fn knots(&self, dir: usize) -> &KnotVector {
        &self.kv[dir]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.kv[0].num_basis(), self.kv[1].num_basis()]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.kv[0].num_basis() * j
    }

    pub fn local_count(&self) -> usize {
        (self.kv[0].degree() + 1) * (self.kv[1].degree() + 1)
    }

    pub fn eval_rational(&self, xi: f64, eta: f64) -> Result<RationalEval> {
        let (sx, nx) = self.kv[0].eval_basis_derivs(xi, 1.min(self.kv[0].degree()))?;
        let (sy, ny) = self.kv[1].eval_basis_derivs(eta, 1.min(self.kv[1].degree()))?;
        let (px, py) = (self.kv[0].degree(), self.kv[1].degree());
        let zero_x = vec![0.0; px + 1];
        let zero_y = vec![0.0; py + 1];
        let dx = nx.get(1).unwrap_or(&zero_x);
        let dy = ny.get(1).unwrap_or(&zero_y);
        let nloc = (px + 1) * (py + 1);
        let mut indices = Vec::with_capacity(nloc);
        let mut wn = Vec::with_capacity(nloc);
        let mut wdx = Vec::with_capacity(nloc);
        let mut wdy = Vec::with_capacity(nloc);
        let (mut w, mut w_x, mut w_y) = (0.0, 0.0, 0.0);
        for b in 0..=py {
            for a in 0..=px {
                let idx = self.index(sx - px + a, sy - py + b);
                let wt = self.weights[idx];
                let v = nx[0][a] * ny[0][b] * wt;
                let vx = dx[a] * ny[0][b] * wt;
                let vy = nx[0][a] * dy[b] * wt;
                w += v;
                w_x += vx;
                w_y += vy;
                indices.push(idx);
                wn.push(v);
                wdx.push(vx);
                wdy.push(vy);
            }
        }
        let inv = 1.0 / w;
        let inv2 = inv * inv;
        let values: Vec<f64> = wn.iter().map(|v| v * inv).collect();
        let d_xi = wn.iter().zip(&wdx).map(|(v, vx)| (vx * w - v * w_x) * inv2).collect();
        let d_eta = wn.iter().zip(&wdy).map(|(v, vy)| (vy * w - v * w_y) * inv2).collect();
        Ok(RationalEval { spans: [sx, sy], indices, values, d_xi, d_eta })
    }

    /// Insert knots in direction `dir` (0 = ξ, 1 = η), transforming a control
    /// net whose points carry `dim` coordinates each. Returns the refined basis
    /// and net.
    pub fn knot_insert(
        &self,
        net: &[Vec<f64>],
        dir: usize,
        new_knots: &[f64],
    ) -> Result<(RationalBasis, Vec<Vec<f64>>)> {
        if dir > 1 {
            return Err(Error::Argument(format!("direction {dir} is not 0 or 1")));
        }
        if net.len() != self.len() {
            return Err(Error::Argument(format!(
                "{} control points for {} basis functions",
                net.len(),
                self.len()
            )));
        }
        let [n0, n1] = self.shape();
        // homogeneous coordinates: (w x, w) per point
        let homog: Vec<Vec<f64>> = net
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| {
                let mut h: Vec<f64> = p.iter().map(|c| c * w).collect();
                h.push(w);
                h
            })
            .collect();
        let (lines, len) = if dir == 0 { (n1, n0) } else { (n0, n1) };
        let at = |line: usize, k: usize| if dir == 0 { k + n0 * line } else { line + n0 * k };
        let mut kv_new = self.kv[dir].clone();
        let mut curves: Vec<Vec<Vec<f64>>> = (0..lines)
            .map(|l| (0..len).map(|k| homog[at(l, k)].clone()).collect())
            .collect();
        for &u in new_knots {
            let mut next_kv = None;
            for c in curves.iter_mut() {
                let (kv2, pts) = kv_new.insert_knot(u, c)?;
                *c = pts;
                next_kv = Some(kv2);
            }
            kv_new = match next_kv {
                Some(k) => k,
                None => kv_new.insert_knot(u, &vec![vec![0.0]; kv_new.num_basis()])?.0,
            };
        }
        let new_len = kv_new.num_basis();
        let (m0, m1) = if dir == 0 { (new_len, n1) } else { (n0, new_len) };
        let mut out_net = vec![Vec::new(); m0 * m1];
        let mut weights = vec![0.0; m0 * m1];
        for (l, c) in curves.iter().enumerate() {
            for (k, h) in c.iter().enumerate() {
                let idx = if dir == 0 { k + m0 * l } else { l + m0 * k };
                let w = *h.last().unwrap();
                weights[idx] = w;
                out_net[idx] = h[..h.len() - 1].iter().map(|c| c / w).collect();
            }
        }
        let kvs = if dir == 0 {
            [kv_new, self.kv[1].clone()]
        } else {
            [self.kv[0].clone(), kv_new]
        };
        let [a, b] = kvs;
        Ok((RationalBasis::new(a, b, weights)?, out_net))
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_hat_values() {
        let kv = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let (_, v) = kv.eval_basis(0.5).unwrap();
        assert_eq!(v, vec![0.5, 0.5]);
        let (_, d) = kv.eval_basis_derivs(0.3, 1).unwrap();
        assert!((d[1][0] + 1.0).abs() < 1e-14 && (d[1][1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn clamped_endpoint() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let (s, v) = kv.eval_basis(0.0).unwrap();
        assert_eq!(s, 2);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        let (_, v) = kv.eval_basis(1.0).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn partition_with_interior_knot() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).unwrap();
        let (_, v) = kv.eval_basis(0.25).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(KnotVector::new(2, vec![0.0, 0.0, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.6, 0.5, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.1, 1.0, 1.0]).is_err());
        let kv = KnotVector::uniform(2, 3).unwrap();
        assert!(matches!(kv.eval_basis(1.5), Err(Error::Domain(_))));
        assert!(matches!(kv.eval_basis_derivs(0.5, 3), Err(Error::Argument(_))));
    }

    #[test]
    fn derivs_match_finite_difference() {
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.3, 0.7, 1.0, 1.0, 1.0]).unwrap();
        for &u in &[0.1, 0.45, 0.8] {
            let (s, d) = kv.eval_basis_derivs(u, 2).unwrap();
            let h = 1e-6;
            let (s1, a) = kv.eval_basis(u + h).unwrap();
            let (s2, b) = kv.eval_basis(u - h).unwrap();
            assert_eq!((s, s), (s1, s2));
            for j in 0..3 {
                let fd = (a[j] - b[j]) / (2.0 * h);
                assert!((fd - d[1][j]).abs() < 1e-6, "{fd} vs {}", d[1][j]);
            }
            assert!(d[2].iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn parse_text_form() {
        let kv = KnotVector::parse("1: 0, 0, 0.3 0.7 1 1").unwrap();
        assert_eq!(kv.degree(), 1);
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.3, 0.7, 1.0, 1.0]);
        assert!(KnotVector::parse("0 0 1 1").is_err());
        assert!(KnotVector::parse("x: 0 1").is_err());
        assert!(KnotVector::parse("1: 0 0 a 1 1").is_err());
        assert!(KnotVector::parse("2: 0 0 1 1").is_err());
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..6 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn single_insertion_preserves_curve() {
        let kv = KnotVector::uniform(2, 2).unwrap();
        let pts = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, -1.0], vec![3.0, 0.5]];
        let eval = |kv: &KnotVector, pts: &[Vec<f64>], u: f64| {
            let (s, v) = kv.eval_basis(u).unwrap();
            let mut out = [0.0; 2];
            for (j, vj) in v.iter().enumerate() {
                for d in 0..2 {
                    out[d] += vj * pts[s - 2 + j][d];
                }
            }
            out
        };
        let (kv2, pts2) = kv.insert_knot(0.25, &pts).unwrap();
        let (kv3, pts3) = kv2.insert_knot(0.5, &pts2).unwrap();
        assert_eq!(kv3.knots(), &[0.0, 0.0, 0.0, 0.25, 0.5, 0.5, 1.0, 1.0, 1.0]);
        assert!(kv3.insert_knot(0.5, &pts3).is_err());
        for i in 0..=20 {
            let u = i as f64 / 20.0;
            let a = eval(&kv, &pts, u);
            let b = eval(&kv3, &pts3, u);
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }
}
