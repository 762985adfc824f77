//! Direct solves of the primal and adjoint systems.
//!
//! Each interface pair (a, b) of coincident DOFs is rewritten as a mean and a
//! jump, `T_a = s + d/2`, `T_b = s − d/2`. The penalty then acts on `d` alone
//! and the β-sized entries never mix with the O(κ) entries, which keeps the
//! factorization accurate at β = 1e12. Dirichlet DOFs are eliminated with
//! lifting, and the remaining symmetric positive definite system is
//! factorized once per assembly with a sparse Cholesky.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::assembly::LinearSystem;
use crate::error::{Error, Result};

pub struct Factorization {
    n: usize,
    llt: Llt<usize, f64>,
    matrix: SparseColMat<usize, f64>,
    /// Reduced index of each transformed slot, `usize::MAX` when prescribed.
    reduced: Vec<usize>,
    free: Vec<usize>,
    /// For each DOF: `None`, `Some((partner, true))` for the first DOF of a
    /// pair, `Some((first, false))` for the second.
    role: Vec<Option<(usize, bool)>>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("n", &self.n)
            .field("free", &self.free.len())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct SolvedState {
    pub t: Vec<f64>,
    pub factor: Arc<Factorization>,
    /// Relative residual of the reduced system.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct AdjointState {
    pub p: Vec<f64>,
    pub load: Vec<f64>,
    pub residual: f64,
}

/// Row `i` of Q in `T = Q y` as (slot, coefficient) pairs.
fn expand(role: &[Option<(usize, bool)>], i: usize) -> ([(usize, f64); 2], usize) {
    match role[i] {
        None => ([(i, 1.0), (0, 0.0)], 1),
        Some((b, true)) => ([(i, 1.0), (b, 0.5)], 2),
        Some((a, false)) => ([(a, 1.0), (i, -0.5)], 2),
    }
}

impl Factorization {
    fn expand(&self, i: usize) -> ([(usize, f64); 2], usize) {
        expand(&self.role, i)
    }

    pub fn new(sys: &LinearSystem) -> Result<Self> {
        if !sys.well_posed {
            return Err(Error::Solver(
                "boundary conditions have no Dirichlet or Robin side; the problem is singular".into(),
            ));
        }
        let n = sys.n;
        let mut role = vec![None; n];
        for &(a, b) in sys.pairs.iter() {
            role[a] = Some((b, true));
            role[b] = Some((a, false));
        }
        let mut reduced = vec![usize::MAX; n];
        let mut free = Vec::new();
        for i in 0..n {
            if sys.dirichlet[i].is_none() {
                reduced[i] = free.len();
                free.push(i);
            } else if role[i].is_some() {
                return Err(Error::Solver(format!(
                    "DOF {i} is both prescribed and on an interface"
                )));
            }
        }
        let nf = free.len();
        let mut trips = Vec::with_capacity(sys.k.len() * 2);
        for &(i, j, v) in &sys.k {
            let (ei, ni) = expand(&role, i);
            let (ej, nj) = expand(&role, j);
            for &(p, cp) in &ei[..ni] {
                let rp = reduced[p];
                if rp == usize::MAX {
                    continue;
                }
                for &(q, cq) in &ej[..nj] {
                    let rq = reduced[q];
                    if rq != usize::MAX {
                        trips.push(Triplet::new(rp, rq, cp * cq * v));
                    }
                }
            }
        }
        for &(a, c, v) in &sys.penalty {
            let (Some((b, true)), Some((d, true))) = (role[a], role[c]) else {
                return Err(Error::Solver(format!("penalty entry ({a}, {c}) is not on a pair")));
            };
            trips.push(Triplet::new(reduced[b], reduced[d], v));
        }
        let matrix = SparseColMat::try_new_from_triplets(nf, nf, &trips)
            .map_err(|e| Error::Solver(format!("sparse assembly failed: {e:?}")))?;
        let llt = matrix.as_ref().sp_cholesky(Side::Lower).map_err(|e| {
            Error::Solver(format!(
                "Cholesky factorization failed ({e:?}) for {n} DOFs with {} prescribed; \
                 check boundary conditions and material positivity",
                n - nf
            ))
        })?;
        Ok(Self { n, llt, matrix, reduced, free, role })
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    fn matvec(&self, y: &[f64]) -> Vec<f64> {
        let m = self.matrix.as_ref();
        let sym = m.symbolic();
        let cp = sym.col_ptr();
        let ri = sym.row_idx();
        let val = m.val();
        let mut out = vec![0.0; y.len()];
        for c in 0..y.len() {
            for k in cp[c]..cp[c + 1] {
                out[ri[k]] += val[k] * y[c];
            }
        }
        out
    }

    fn solve_reduced(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        let nf = rhs.len();
        let b = Mat::from_fn(nf, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        let mut y: Vec<f64> = (0..nf).map(|i| x[(i, 0)]).collect();
        // one step of iterative refinement
        let ky = self.matvec(&y);
        let r: Vec<f64> = rhs.iter().zip(&ky).map(|(a, b)| a - b).collect();
        let rb = Mat::from_fn(nf, 1, |i, _| r[i]);
        let dx = self.llt.solve(&rb);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += dx[(i, 0)];
        }
        let ky = self.matvec(&y);
        let rn = rhs.iter().zip(&ky).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let bn = rhs.iter().map(|a| a * a).sum::<f64>().sqrt();
        (y, if bn > 0.0 { rn / bn } else { rn })
    }

    /// Transformed right-hand side `Qᵀ f`.
    fn transform_load(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, &fi) in f.iter().enumerate() {
            let (e, k) = self.expand(i);
            for &(p, c) in &e[..k] {
                out[p] += c * fi;
            }
        }
        out
    }

    fn back_transform(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (e, k) = self.expand(i);
                e[..k].iter().map(|&(p, c)| c * y[p]).sum()
            })
            .collect()
    }

    /// Solve `K x = f` with prescribed values (`None` free) and the system's
    /// unsummed stiffness for lifting.
    fn solve_full(&self, sys_k: &[(usize, usize, f64)], f: &[f64], fixed: &[Option<f64>]) -> (Vec<f64>, f64) {
        let ft = self.transform_load(f);
        let mut rhs: Vec<f64> = self.free.iter().map(|&s| ft[s]).collect();
        if fixed.iter().any(|v| v.is_some_and(|x| x != 0.0)) {
            for &(i, j, v) in sys_k {
                let Some(tj) = fixed[j] else { continue };
                let (ei, ni) = self.expand(i);
                for &(p, cp) in &ei[..ni] {
                    let rp = self.reduced[p];
                    if rp != usize::MAX {
                        rhs[rp] -= cp * v * tj;
                    }
                }
            }
        }
        let (yr, res) = self.solve_reduced(&rhs);
        let mut y = vec![0.0; self.n];
        for (s, v) in fixed.iter().enumerate() {
            if let Some(v) = v {
                y[s] = *v;
            }
        }
        for (k, &s) in self.free.iter().enumerate() {
            y[s] = yr[k];
        }
        (self.back_transform(&y), res)
    }
}

pub fn solve_primal(sys: &LinearSystem) -> Result<SolvedState> {
    let factor = Arc::new(Factorization::new(sys)?);
    let (t, residual) = factor.solve_full(&sys.k, &sys.f, &sys.dirichlet);
    if !t.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver("solution contains non-finite values".into()));
    }
    Ok(SolvedState { t, factor, residual })
}

/// Solve `Kᵀ P = F_J` (K is symmetric) with P = 0 on prescribed DOFs, reusing
/// the primal factorization.
pub fn solve_adjoint(state: &SolvedState, load: &[f64]) -> Result<AdjointState> {
    let fac = &state.factor;
    if load.len() != fac.n {
        return Err(Error::Argument(format!(
            "adjoint load has {} entries for {} DOFs",
            load.len(),
            fac.n
        )));
    }
    let fixed: Vec<Option<f64>> = (0..fac.n)
        .map(|i| (fac.reduced[i] == usize::MAX).then_some(0.0))
        .collect();
    let mut l = load.to_vec();
    for (i, f) in fixed.iter().enumerate() {
        if f.is_some() {
            l[i] = 0.0;
        }
    }
    let (p, residual) = fac.solve_full(&[], &l, &fixed);
    Ok(AdjointState { p, load: l, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faer_sums_duplicate_triplets() {
        let t = [Triplet::new(0usize, 0usize, 1.0), Triplet::new(0, 0, 2.0), Triplet::new(1, 1, 1.0)];
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(2, 2, &t).unwrap();
        assert_eq!(m.val().iter().sum::<f64>(), 4.0);
    }
}
