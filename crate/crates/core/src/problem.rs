//! A complete design problem: model, density field, materials, boundary
//! scenarios and functional. Implements [`Oracle`] so the optimizer and the
//! gradient audit can drive it.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::assembly::{BoundaryConditions, Discretization, Materials, Nitsche};
use crate::design_field::{DensityField, SymmetryMap};
use crate::error::{Error, Result};
use crate::geometry::MultiPatchModel;
use crate::linsolve::{solve_adjoint, solve_primal, SolvedState};
use crate::materials::MaterialLaw;
use crate::objectives::{self, MaxTemperature, ReferenceFields};
use crate::optimizer::{ConstraintValue, Evaluation, Oracle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    Cloak,
    Concentrator,
    Rotator { theta: f64 },
    CloakedSensor,
    CloakConcentrator,
    /// Concentrator under the first boundary set, cloak under the second.
    Bidirectional,
}

impl ObjectiveKind {
    pub fn scenarios(self) -> usize {
        match self {
            Self::Bidirectional => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Cloak => "cloak",
            Self::Concentrator => "concentrator",
            Self::Rotator { .. } => "rotator",
            Self::CloakedSensor => "cloaked_sensor",
            Self::CloakConcentrator => "cloak_concentrator",
            Self::Bidirectional => "bidirectional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Weight of the intermediate-density penalty; zero disables it.
    pub chi: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub bc: BoundaryConditions,
    pub refs: ReferenceFields,
}

#[derive(Debug)]
pub struct DesignProblem {
    pub model: MultiPatchModel,
    pub disc: Discretization,
    pub field: DensityField,
    pub symmetry: SymmetryMap,
    pub materials: Materials,
    pub nitsche: Nitsche,
    pub objective: ObjectiveSpec,
    pub constraint: Option<MaxTemperature>,
    pub scenarios: Vec<Scenario>,
    solves: AtomicUsize,
}

/// Temperature fields of every scenario at one design.
#[derive(Debug, Clone)]
pub struct DesignState {
    pub coeffs: Vec<f64>,
    pub states: Vec<SolvedState>,
}

impl DesignProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: MultiPatchModel,
        field: DensityField,
        symmetry: SymmetryMap,
        materials: Materials,
        inclusion: &MaterialLaw,
        bcs: Vec<BoundaryConditions>,
        objective: ObjectiveSpec,
        constraint: Option<MaxTemperature>,
        nitsche: Nitsche,
    ) -> Result<Self> {
        nitsche.validate()?;
        if bcs.len() != objective.kind.scenarios() {
            return Err(Error::Argument(format!(
                "{} objective needs {} boundary sets, got {}",
                objective.kind.name(),
                objective.kind.scenarios(),
                bcs.len()
            )));
        }
        if symmetry.n_coeffs() != field.n_coeffs() {
            return Err(Error::Argument("symmetry map does not match the density field".into()));
        }
        if !(objective.chi >= 0.0 && objective.chi.is_finite()) {
            return Err(Error::Argument(format!("penalty weight must be non-negative, got {}", objective.chi)));
        }
        let disc = Discretization::new(&model, Some(&field))?;
        let scenarios = bcs
            .into_iter()
            .map(|bc| {
                let refs = ReferenceFields::compute(&disc, &materials, inclusion, &bc, nitsche)?;
                Ok(Scenario { bc, refs })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            disc,
            field,
            symmetry,
            materials,
            nitsche,
            objective,
            constraint,
            scenarios,
            solves: AtomicUsize::new(0),
        })
    }

    pub fn n_vars(&self) -> usize {
        self.symmetry.n_vars()
    }

    /// Primal solves since construction, reference fields excluded.
    pub fn solve_count(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    pub fn initial_point(&self) -> Vec<f64> {
        vec![self.materials.design.midpoint(); self.n_vars()]
    }

    pub fn solve(&self, vars: &[f64]) -> Result<DesignState> {
        let coeffs = self.symmetry.expand(vars)?;
        let states = self
            .scenarios
            .iter()
            .map(|s| {
                let sys = self.disc.assemble(&self.materials, &coeffs, &s.bc, self.nitsche)?;
                self.solves.fetch_add(1, Ordering::Relaxed);
                solve_primal(&sys)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DesignState { coeffs, states })
    }

    /// Objective loads per scenario, sub-terms, and the value.
    fn objective_terms(&self, st: &DesignState) -> Result<(f64, Vec<Vec<f64>>, Vec<(String, f64)>)> {
        let d = &self.disc;
        let m = &self.materials;
        let s0 = &self.scenarios[0];
        let t0 = &st.states[0].t;
        let mut terms = Vec::new();
        let (value, loads) = match self.objective.kind {
            ObjectiveKind::Cloak => {
                let c = objectives::cloak(d, &s0.refs, t0)?;
                terms.push(("J_cloak".to_string(), c.value));
                (c.value, vec![c.load])
            }
            ObjectiveKind::CloakedSensor => {
                let c = objectives::cloaked_sensor(d, &s0.refs, t0)?;
                terms.push(("J_cloaksen".to_string(), c.value));
                (c.value, vec![c.load])
            }
            ObjectiveKind::Rotator { theta } => {
                let c = objectives::rotator(d, &s0.refs, m, t0, theta)?;
                terms.push(("J_rtr".to_string(), c.value));
                (c.value, vec![c.load])
            }
            ObjectiveKind::Concentrator => {
                let p = objectives::concentration(d, &s0.refs, m, t0)?;
                if p.value == 0.0 {
                    return Err(Error::Objective("concentration function vanishes".into()));
                }
                let j = 1.0 / p.value.abs();
                terms.push(("Psi_cntr".to_string(), p.value));
                terms.push(("J_cntr".to_string(), j));
                let s = -p.value.signum() / (p.value * p.value);
                (j, vec![p.scaled(s)])
            }
            ObjectiveKind::CloakConcentrator | ObjectiveKind::Bidirectional => {
                let (sc, sp) = if self.objective.kind == ObjectiveKind::Bidirectional { (1, 0) } else { (0, 0) };
                let c = objectives::cloak(d, &self.scenarios[sc].refs, &st.states[sc].t)?;
                let p = objectives::concentration(d, &self.scenarios[sp].refs, m, &st.states[sp].t)?;
                if p.value == 0.0 {
                    return Err(Error::Objective("concentration function vanishes".into()));
                }
                terms.push(("J_cloak".to_string(), c.value));
                terms.push(("Psi_cntr".to_string(), p.value));
                let mut loads = vec![vec![0.0; d.n_dofs]; self.scenarios.len()];
                let f = -4.0 * p.value.powi(-5);
                for (l, v) in loads[sc].iter_mut().zip(&c.load) {
                    *l += v;
                }
                for (l, v) in loads[sp].iter_mut().zip(&p.load) {
                    *l += f * v;
                }
                (c.value + p.value.powi(-4), loads)
            }
        };
        Ok((value, loads, terms))
    }

    /// Objective, constraint values and, when asked, their gradients.
    pub fn evaluate_with(&self, vars: &[f64], gradient: bool) -> Result<(Evaluation, DesignState)> {
        let before = self.solve_count();
        let st = self.solve(vars)?;
        let (mut value, loads, mut terms) = self.objective_terms(&st)?;
        let mut coeff_grad = vec![0.0; self.disc.n_coeffs];
        if self.objective.chi > 0.0 {
            let (pv, pg) = objectives::intermediate_penalty(&self.disc, &st.coeffs)?;
            value += self.objective.chi * pv;
            terms.push(("J_intpen".to_string(), pv));
            for (g, p) in coeff_grad.iter_mut().zip(&pg) {
                *g += self.objective.chi * p;
            }
        }
        let mut constraints = Vec::new();
        let tau = match &self.constraint {
            Some(c) => {
                let t = c.tau(&self.disc, &st.states[0].t)?;
                terms.push(("tau_max".to_string(), t.value));
                Some((c, t))
            }
            None => None,
        };
        let mut grad = Vec::new();
        if gradient {
            for (s, load) in st.states.iter().zip(&loads) {
                self.subtract_adjoint_term(&st.coeffs, s, load, &mut coeff_grad)?;
            }
            grad = self.symmetry.reduce_gradient(&coeff_grad)?;
        }
        if let Some((c, t)) = tau {
            let mut cg = Vec::new();
            if gradient {
                let mut g = vec![0.0; self.disc.n_coeffs];
                self.subtract_adjoint_term(&st.coeffs, &st.states[0], &t.load, &mut g)?;
                cg = self.symmetry.reduce_gradient(&g)?;
            }
            constraints.push(ConstraintValue { name: "tau_max".into(), value: t.value - c.t_max, gradient: cg });
        }
        let ev = Evaluation { value, gradient: grad, terms, constraints, primal_solves: self.solve_count() - before };
        Ok((ev, st))
    }

    /// `g -= Pᵀ (dK/dv) T` with `K P = load`.
    fn subtract_adjoint_term(&self, coeffs: &[f64], s: &SolvedState, load: &[f64], g: &mut [f64]) -> Result<()> {
        if load.iter().all(|&l| l == 0.0) {
            return Ok(());
        }
        let adj = solve_adjoint(s, load)?;
        let dk = self.disc.apply_dk_dv(&self.materials, coeffs, &adj.p, &s.t, self.nitsche)?;
        for (gi, d) in g.iter_mut().zip(&dk) {
            *gi -= d;
        }
        Ok(())
    }
}

impl Oracle for DesignProblem {
    fn dim(&self) -> usize {
        self.n_vars()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let l = &self.materials.design;
        (vec![l.v_min; self.n_vars()], vec![l.v_max; self.n_vars()])
    }

    fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        Ok(self.evaluate_with(x, true)?.0)
    }
}
