//! Box-constrained minimization by projected limited-memory quasi-Newton
//! steps with an Armijo backtracking search, an augmented-Lagrangian wrapper
//! for inequality constraints, and a central-difference gradient audit.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};

/// One constraint `g(x) ≤ 0` with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValue {
    pub name: String,
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Named sub-terms for reporting.
    pub terms: Vec<(String, f64)>,
    pub constraints: Vec<ConstraintValue>,
    /// Primal solves spent on this evaluation.
    pub primal_solves: usize,
}

impl Evaluation {
    pub fn plain(value: f64, gradient: Vec<f64>) -> Self {
        Self { value, gradient, terms: Vec::new(), constraints: Vec::new(), primal_solves: 0 }
    }
}

/// Objective and gradient source over a box.
pub trait Oracle {
    fn dim(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn evaluate(&self, x: &[f64]) -> Result<Evaluation>;
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub objective_limit: f64,
    pub step_tolerance: f64,
    pub optimality_tolerance: f64,
    /// Number of stored curvature pairs.
    pub history: usize,
    /// Largest coordinate change of a first step, as a fraction of the box.
    pub initial_step: f64,
    pub penalty_initial: f64,
    /// Inner iterations per augmented-Lagrangian round.
    pub inner_iterations: usize,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    pub feasibility_tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            objective_limit: 1e-10,
            step_tolerance: 1e-10,
            optimality_tolerance: 1e-10,
            history: 10,
            initial_step: 0.25,
            penalty_initial: 0.1,
            inner_iterations: 40,
            penalty_growth: 10.0,
            penalty_max: 1e10,
            feasibility_tolerance: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("objective_limit", self.objective_limit),
            ("step_tolerance", self.step_tolerance),
            ("optimality_tolerance", self.optimality_tolerance),
            ("initial_step", self.initial_step),
            ("penalty_initial", self.penalty_initial),
            ("feasibility_tolerance", self.feasibility_tolerance),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.penalty_growth > 1.0) {
            return Err(Error::Argument("penalty_growth must exceed 1".into()));
        }
        if self.inner_iterations == 0 {
            return Err(Error::Argument("inner_iterations must be at least 1".into()));
        }
        if self.history == 0 {
            return Err(Error::Argument("history must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ObjectiveLimit,
    StepTolerance,
    OptimalityTolerance,
    MaxIterations,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ObjectiveLimit => "objective_limit",
            Self::StepTolerance => "step_tolerance",
            Self::OptimalityTolerance => "optimality_tolerance",
            Self::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective without augmented-Lagrangian terms.
    pub value: f64,
    pub terms: Vec<(String, f64)>,
    pub constraints: Vec<(String, f64)>,
    pub projected_gradient_norm: f64,
    pub step_norm: f64,
    /// Cumulative primal solves.
    pub primal_solves: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
}

impl RunRecord {
    pub fn total_solves(&self) -> usize {
        self.iterations.last().map_or(0, |r| r.primal_solves)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub x: Vec<f64>,
    pub evaluation: Evaluation,
    pub record: RunRecord,
    pub stop: StopReason,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs())
        .fold(0.0, f64::max)
}

fn check_eval(ev: &Evaluation, x: &[f64]) -> Result<()> {
    let finite = ev.value.is_finite()
        && ev.gradient.iter().all(|g| g.is_finite())
        && ev.constraints.iter().all(|c| c.value.is_finite() && c.gradient.iter().all(|g| g.is_finite()));
    if !finite {
        return Err(Error::Optimizer(format!("non-finite objective or gradient at x = {x:?}")));
    }
    if ev.gradient.len() != x.len() {
        return Err(Error::Optimizer(format!(
            "gradient has {} entries for {} variables",
            ev.gradient.len(),
            x.len()
        )));
    }
    Ok(())
}

/// Objective seen by the inner loop: the oracle plus the augmented-Lagrangian
/// terms of the current outer iteration.
struct Merit<'a, O: Oracle + ?Sized> {
    oracle: &'a O,
    multipliers: Vec<f64>,
    penalty: f64,
}

impl<O: Oracle + ?Sized> Merit<'_, O> {
    fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Evaluation)> {
        let ev = self.oracle.evaluate(x)?;
        check_eval(&ev, x)?;
        let mut f = ev.value;
        let mut g = ev.gradient.clone();
        let mu = self.penalty;
        for (c, &lam) in ev.constraints.iter().zip(&self.multipliers) {
            let s = (lam + mu * c.value).max(0.0);
            f += (s * s - lam * lam) / (2.0 * mu);
            for (gi, ci) in g.iter_mut().zip(&c.gradient) {
                *gi += s * ci;
            }
        }
        Ok((f, g, ev))
    }
}

/// Two-loop recursion restricted to the free variables.
fn lbfgs_direction(g: &[f64], free: &[bool], pairs: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(&a, &f)| if f { a } else { 0.0 }).collect() };
    let mut q = mask(g);
    let mut alpha = Vec::with_capacity(pairs.len());
    let mut rho = Vec::with_capacity(pairs.len());
    for (s, y) in pairs.iter().rev() {
        let (s, y) = (mask(s), mask(y));
        let sy = dot(&s, &y);
        let r = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        let a = r * dot(&s, &q);
        for (qi, yi) in q.iter_mut().zip(&y) {
            *qi -= a * yi;
        }
        alpha.push(a);
        rho.push(r);
    }
    if let Some((s, y)) = pairs.back() {
        let yy = dot(y, y);
        if yy > 0.0 {
            let h0 = dot(s, y) / yy;
            q.iter_mut().for_each(|v| *v *= h0);
        }
    }
    for (k, (s, y)) in pairs.iter().enumerate() {
        let j = pairs.len() - 1 - k;
        let (s, y) = (mask(s), mask(y));
        let b = rho[j] * dot(&y, &q);
        for (qi, si) in q.iter_mut().zip(&s) {
            *qi += (alpha[j] - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

struct Inner {
    x: Vec<f64>,
    ev: Evaluation,
    stop: StopReason,
    iterations: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_inner<O: Oracle + ?Sized>(
    merit: &Merit<'_, O>,
    x0: Vec<f64>,
    start: Option<(f64, Vec<f64>, Evaluation)>,
    config: &OptimizerConfig,
    budget: usize,
    record: &mut RunRecord,
    clock: &Instant,
    solves: &mut usize,
    first_index: usize,
) -> Result<Inner> {
    let (lo, hi) = merit.oracle.bounds();
    let mut x = x0;
    project(&mut x, &lo, &hi);
    let (mut f, mut g, mut ev) = match start {
        Some(s) => s,
        None => {
            let s = merit.eval(&x)?;
            *solves += s.2.primal_solves;
            s
        }
    };
    let range: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
    let max_range = range.iter().cloned().fold(0.0, f64::max);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    let push = |record: &mut RunRecord, it: usize, ev: &Evaluation, x: &[f64], g: &[f64], step: f64, solves: usize| {
        record.iterations.push(IterationRecord {
            iteration: it,
            value: ev.value,
            terms: ev.terms.clone(),
            constraints: ev.constraints.iter().map(|c| (c.name.clone(), c.value)).collect(),
            projected_gradient_norm: projected_gradient_norm(x, g, &lo, &hi),
            step_norm: step,
            primal_solves: solves,
            wall_time: clock.elapsed().as_secs_f64(),
        });
    };
    if record.iterations.is_empty() {
        push(record, 0, &ev, &x, &g, 0.0, *solves);
    }
    let mut it = 0;
    let stop = loop {
        if ev.value <= config.objective_limit && ev.constraints.iter().all(|c| c.value <= config.feasibility_tolerance) {
            break StopReason::ObjectiveLimit;
        }
        if projected_gradient_norm(&x, &g, &lo, &hi) <= config.optimality_tolerance {
            break StopReason::OptimalityTolerance;
        }
        if it >= budget {
            break StopReason::MaxIterations;
        }
        it += 1;
        let free: Vec<bool> = (0..x.len())
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let steepest = || -> Vec<f64> {
            let gmax = g.iter().zip(&free).filter(|p| *p.1).map(|p| p.0.abs()).fold(0.0, f64::max);
            let scale = if gmax > 0.0 { config.initial_step * max_range / gmax } else { 0.0 };
            g.iter().zip(&free).map(|(&gi, &fr)| if fr { -scale * gi } else { 0.0 }).collect()
        };
        let mut attempts: Vec<Vec<f64>> = Vec::new();
        if !pairs.is_empty() {
            let d = lbfgs_direction(&g, &free, &pairs);
            if dot(&d, &g) < 0.0 {
                attempts.push(d);
            }
        }
        attempts.push(steepest());
        let mut accepted = None;
        'dirs: for d in &attempts {
            let mut alpha = 1.0;
            for _ in 0..40 {
                let mut xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
                project(&mut xt, &lo, &hi);
                let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                let dec = dot(&g, &s);
                if !(dec < 0.0) {
                    break;
                }
                let (ft, gt, evt) = merit.eval(&xt)?;
                *solves += evt.primal_solves;
                if ft <= f + 1e-4 * dec {
                    accepted = Some((xt, s, ft, gt, evt));
                    break 'dirs;
                }
                alpha *= 0.5;
            }
            pairs.clear();
        }
        let Some((xt, s, ft, gt, evt)) = accepted else {
            break StopReason::StepTolerance;
        };
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            pairs.push_back((s.clone(), y));
            if pairs.len() > config.history {
                pairs.pop_front();
            }
        }
        let step = norm(&s);
        x = xt;
        f = ft;
        g = gt;
        ev = evt;
        push(record, first_index + it, &ev, &x, &g, step, *solves);
        if step < config.step_tolerance * (1.0 + norm(&x)) {
            break StopReason::StepTolerance;
        }
    };
    Ok(Inner { x, ev, stop, iterations: it })
}

/// Minimize over the oracle's box. Constraints reported by the oracle are
/// ignored here; see [`minimize_constrained`].
pub fn minimize<O: Oracle + ?Sized>(oracle: &O, x0: &[f64], config: &OptimizerConfig) -> Result<OptimizationResult> {
    config.validate()?;
    check_start(oracle, x0)?;
    let merit = Merit { oracle, multipliers: Vec::new(), penalty: 1.0 };
    let clock = Instant::now();
    let mut record = RunRecord::default();
    let mut solves = 0;
    let r = run_inner(&merit, x0.to_vec(), None, config, config.max_iterations, &mut record, &clock, &mut solves, 0)?;
    Ok(OptimizationResult { x: r.x, evaluation: r.ev, record, stop: r.stop })
}

fn check_start<O: Oracle + ?Sized>(oracle: &O, x0: &[f64]) -> Result<()> {
    let (lo, hi) = oracle.bounds();
    if x0.len() != oracle.dim() || lo.len() != x0.len() || hi.len() != x0.len() {
        return Err(Error::Argument(format!(
            "start point has {} entries for {} variables",
            x0.len(),
            oracle.dim()
        )));
    }
    if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
        return Err(Error::Argument("lower bound exceeds upper bound".into()));
    }
    Ok(())
}

/// Minimize subject to the oracle's inequality constraints `g ≤ 0` with a
/// Powell–Hestenes–Rockafellar augmented Lagrangian around [`minimize`]'s
/// inner loop. The iteration budget is shared across outer rounds.
pub fn minimize_constrained<O: Oracle + ?Sized>(
    oracle: &O,
    x0: &[f64],
    config: &OptimizerConfig,
) -> Result<OptimizationResult> {
    config.validate()?;
    check_start(oracle, x0)?;
    let clock = Instant::now();
    let mut record = RunRecord::default();
    let mut solves = 0;
    let mut merit = Merit { oracle, multipliers: Vec::new(), penalty: config.penalty_initial };
    let first = merit.eval(x0)?;
    solves += first.2.primal_solves;
    if first.2.constraints.is_empty() {
        let r = run_inner(&merit, x0.to_vec(), Some(first), config, config.max_iterations, &mut record, &clock, &mut solves, 0)?;
        return Ok(OptimizationResult { x: r.x, evaluation: r.ev, record, stop: r.stop });
    }
    merit.multipliers = vec![0.0; first.2.constraints.len()];
    let violation = |ev: &Evaluation| ev.constraints.iter().map(|c| c.value.max(0.0)).fold(0.0, f64::max);
    let mut last_violation = violation(&first.2);
    let mut x = x0.to_vec();
    let mut used = 0;
    let mut start = Some(first);
    loop {
        let budget = (config.max_iterations - used).min(config.inner_iterations);
        let r = run_inner(&merit, x, start.take(), config, budget, &mut record, &clock, &mut solves, used)?;
        used += r.iterations;
        x = r.x;
        let v = violation(&r.ev);
        // an inner round that stopped on its own criteria at a feasible point
        // has converged; a capped round has not
        if v <= config.feasibility_tolerance && r.stop != StopReason::MaxIterations {
            return Ok(OptimizationResult { x, evaluation: r.ev, record, stop: r.stop });
        }
        for (lam, c) in merit.multipliers.iter_mut().zip(&r.ev.constraints) {
            *lam = (*lam + merit.penalty * c.value).max(0.0);
        }
        if used >= config.max_iterations {
            return Ok(OptimizationResult { x, evaluation: r.ev, record, stop: StopReason::MaxIterations });
        }
        if v > 0.25 * last_violation {
            merit.penalty *= config.penalty_growth;
            if merit.penalty > config.penalty_max {
                if v <= config.feasibility_tolerance {
                    return Ok(OptimizationResult { x, evaluation: r.ev, record, stop: r.stop });
                }
                return Err(Error::Optimizer(format!(
                    "constraints remain violated by {v:e} at the largest penalty; x = {x:?}"
                )));
            }
        }
        last_violation = v;
        // merit changed, so the stored gradient must be rebuilt
        let s = merit.eval(&x)?;
        solves += s.2.primal_solves;
        start = Some(s);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub adjoint: Vec<f64>,
    pub finite_difference: Vec<f64>,
    /// Max relative discrepancy of the objective gradient.
    pub objective: f64,
    /// Same for each constraint, in oracle order.
    pub constraints: Vec<(String, f64)>,
}

impl AuditReport {
    pub fn max_discrepancy(&self) -> f64 {
        self.constraints.iter().map(|c| c.1).fold(self.objective, f64::max)
    }
}

fn discrepancy(adj: &[f64], fd: &[f64]) -> f64 {
    adj.iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / f.abs().max(1e-12))
        .fold(0.0, f64::max)
}

/// Compare adjoint gradients with central differences of step `eps`.
pub fn gradient_audit<O: Oracle + ?Sized>(oracle: &O, x: &[f64], eps: f64) -> Result<AuditReport> {
    check_start(oracle, x)?;
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {eps}")));
    }
    let (lo, hi) = oracle.bounds();
    for i in 0..x.len() {
        if x[i] - eps < lo[i] || x[i] + eps > hi[i] {
            return Err(Error::Argument(format!(
                "variable {i} = {} lies within {eps} of a bound",
                x[i]
            )));
        }
    }
    let base = oracle.evaluate(x)?;
    check_eval(&base, x)?;
    let nc = base.constraints.len();
    let mut fd = vec![0.0; x.len()];
    let mut fd_c = vec![vec![0.0; x.len()]; nc];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + eps;
        let p = oracle.evaluate(&xp)?;
        xp[i] = x[i] - eps;
        let m = oracle.evaluate(&xp)?;
        xp[i] = x[i];
        fd[i] = (p.value - m.value) / (2.0 * eps);
        for k in 0..nc {
            fd_c[k][i] = (p.constraints[k].value - m.constraints[k].value) / (2.0 * eps);
        }
    }
    let constraints = base
        .constraints
        .iter()
        .zip(&fd_c)
        .map(|(c, f)| (c.name.clone(), discrepancy(&c.gradient, f)))
        .collect();
    Ok(AuditReport { objective: discrepancy(&base.gradient, &fd), adjoint: base.gradient, finite_difference: fd, constraints })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Bowl {
        center: Vec<f64>,
        scale: f64,
    }

    impl Oracle for Bowl {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0; self.dim()], vec![1.0; self.dim()])
        }
        fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
            let v = self.scale * x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>();
            let g = x.iter().zip(&self.center).map(|(a, c)| 2.0 * self.scale * (a - c)).collect();
            Ok(Evaluation::plain(v, g))
        }
    }

    #[test]
    fn bowl_interior_minimum() {
        let b = Bowl { center: vec![0.3, 0.3, 0.3, 0.3], scale: 1.0 };
        let r = minimize(&b, &[0.9, 0.1, 0.5, 0.0], &OptimizerConfig::default()).unwrap();
        assert!(r.x.iter().all(|v| (v - 0.3).abs() < 1e-8), "{:?}", r.x);
    }

    #[test]
    fn bowl_active_bound() {
        let b = Bowl { center: vec![1.2; 3], scale: 1.0 };
        let r = minimize(&b, &[0.5; 3], &OptimizerConfig::default()).unwrap();
        assert!(r.x.iter().all(|&v| v == 1.0));
        assert_eq!(r.stop, StopReason::OptimalityTolerance);
    }

    #[test]
    fn monotone_record() {
        let b = Bowl { center: vec![0.7, 0.2], scale: 3.0 };
        let r = minimize(&b, &[0.0, 1.0], &OptimizerConfig::default()).unwrap();
        for w in r.record.iterations.windows(2) {
            assert!(w[1].value <= w[0].value);
        }
    }

    struct Toy;

    impl Oracle for Toy {
        fn dim(&self) -> usize {
            1
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0], vec![1.0])
        }
        fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
            let mut e = Evaluation::plain((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)]);
            e.constraints.push(ConstraintValue { name: "cap".into(), value: x[0] - 0.4, gradient: vec![1.0] });
            Ok(e)
        }
    }

    #[test]
    fn active_inequality() {
        let r = minimize_constrained(&Toy, &[0.9], &OptimizerConfig::default()).unwrap();
        assert!((r.x[0] - 0.4).abs() < 1e-6, "{:?}", r.x);
        assert!(r.evaluation.constraints[0].value <= 1e-6);
    }

    #[test]
    fn audit_of_exact_gradient() {
        let b = Bowl { center: vec![0.3, 0.6], scale: 1.0 };
        let a = gradient_audit(&b, &[0.5, 0.5], 1e-6).unwrap();
        assert!(a.objective < 1e-7);
        assert!(gradient_audit(&b, &[0.0, 0.5], 1e-6).is_err());
    }
}
