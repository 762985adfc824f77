//! Solution-mesh sensitivity of optimized designs: optimize at each
//! refinement level and compare density fields against the finest level.

use crate::config::RunConfig;
use crate::design_field::DensityField;
use crate::error::{Error, Result};
use crate::optimizer::{minimize_constrained, OptimizationResult, StopReason};
use crate::problem::DesignProblem;

/// Error level regarded as mesh-converged.
pub const ACCEPTABLE_ERROR: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub level: usize,
    pub dofs: usize,
    pub objective: f64,
    pub stop: StopReason,
    /// Relative L2 density error over the design region against the finest level.
    pub error: f64,
}

impl ConvergenceRow {
    pub fn acceptable(&self) -> bool {
        self.error <= ACCEPTABLE_ERROR
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceStudy {
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error <= w[0].error)
    }

    /// Tab-separated table with a header line.
    pub fn table(&self) -> String {
        let mut s = String::from("level\tdofs\tJ\tstop\terror\twithin_2pct\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{:e}\t{}\t{:e}\t{}\n",
                r.level,
                r.dofs,
                r.objective,
                r.stop.as_str(),
                r.error,
                if r.acceptable() { "yes" } else { "no" }
            ));
        }
        s
    }
}

/// Optimize a problem from the configured starting point.
pub fn optimize(cfg: &RunConfig, problem: &DesignProblem) -> Result<OptimizationResult> {
    let x0 = cfg.initial_point(problem)?;
    minimize_constrained(problem, &x0, &cfg.optimizer)
}

/// Relative L2 difference of two coefficient vectors over the design region.
pub fn density_error(field: &DensityField, coeffs: &[f64], reference: &[f64]) -> Result<f64> {
    if coeffs.len() != field.n_coeffs() || reference.len() != field.n_coeffs() {
        return Err(Error::Argument("coefficient vectors do not match the density field".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for q in field.patch().quadrature_points_with([4, 4])? {
        let (mut a, mut b) = (0.0, 0.0);
        for (c, r) in field.basis_at(q.param[0], q.param[1])? {
            a += r * coeffs[c];
            b += r * reference[c];
        }
        num += q.weight * (a - b) * (a - b);
        den += q.weight * b * b;
    }
    if !(den > 0.0) {
        return Err(Error::Argument("reference density vanishes".into()));
    }
    Ok((num / den).sqrt())
}

/// Optimize at every level in `levels` (ascending) and report errors against
/// the last one.
pub fn convergence(cfg: &RunConfig, levels: std::ops::RangeInclusive<usize>) -> Result<ConvergenceStudy> {
    if levels.end() <= levels.start() {
        return Err(Error::Argument("a convergence study needs at least two levels".into()));
    }
    let mut runs = Vec::new();
    let mut field = None;
    for level in levels {
        let p = cfg.build_problem_at(level)?;
        let r = optimize(cfg, &p)?;
        let coeffs = p.symmetry.expand(&r.x)?;
        log::info!("level {level}: {} dofs, J = {:e} ({})", p.disc.n_dofs, r.evaluation.value, r.stop.as_str());
        runs.push((level, p.disc.n_dofs, r.evaluation.value, r.stop, coeffs));
        field = Some(p.field);
    }
    let field = field.expect("at least two levels");
    let finest = runs.last().expect("non-empty").4.clone();
    let rows = runs
        .into_iter()
        .map(|(level, dofs, objective, stop, c)| {
            Ok(ConvergenceRow { level, dofs, objective, stop, error: density_error(&field, &c, &finest)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceStudy { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_annulus_model;

    #[test]
    fn density_error_is_relative_l2() {
        let m = build_annulus_model(140.0, 10.0, 50.0).unwrap();
        let f = DensityField::design_mesh(&m.patches[1], 3, 4).unwrap();
        let n = f.n_coeffs();
        let a = vec![0.5; n];
        assert_eq!(density_error(&f, &a, &a).unwrap(), 0.0);
        let b = vec![0.55; n];
        assert!((density_error(&f, &b, &a).unwrap() - 0.1).abs() < 1e-12);
    }
}
