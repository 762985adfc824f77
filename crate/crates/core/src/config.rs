//! Run configuration: a TOML document with nested sections, parsed strictly
//! (unknown keys rejected) and validated before any computation. Errors carry
//! the line of the offending key.
//!
//! ```toml
//! [geometry]
//! length = 140.0
//! r_in = 10.0
//! r_out = 50.0
//!
//! [materials]
//! inner = "insulator"
//! design = "emt"
//! outer = "iron"
//!
//! [objective]
//! kind = "cloak"
//! ```
//!
//! The README lists every key with its default.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::assembly::{BoundaryConditions, Materials, Nitsche, SideCondition};
use crate::design_field::{DensityField, SymmetryMap, SymmetryMode};
use crate::error::{Error, Result};
use crate::geometry::{build_annulus_model, build_star_model, refine_model, MultiPatchModel, PointSource, StarShape};
use crate::materials::{
    LawModel, MaterialLaw, KAPPA_COPPER, KAPPA_INSULATOR, KAPPA_IRON, KAPPA_PDMS, KAPPA_SENSOR,
};
use crate::objectives::MaxTemperature;
use crate::optimizer::OptimizerConfig;
use crate::problem::{DesignProblem, ObjectiveKind, ObjectiveSpec};
use crate::splines::KnotVector;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    pub materials: MaterialsConfig,
    #[serde(default)]
    pub bc: BcConfig,
    /// Second boundary set, used by the bidirectional objective.
    pub bc2: Option<BcConfig>,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub nitsche: NitscheConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub length: f64,
    pub r_in: f64,
    pub r_out: f64,
    pub inner_star: Option<StarConfig>,
    pub outer_star: Option<StarConfig>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarConfig {
    pub amplitude: f64,
    pub lobes: f64,
    /// Degrees.
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Midpoint refinements of the solution mesh.
    pub level: usize,
    /// Coarsest and finest level of a convergence study.
    pub min_level: usize,
    pub max_level: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { level: 4, min_level: 1, max_level: 5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    pub inner: MaterialSpec,
    pub design: MaterialSpec,
    pub outer: MaterialSpec,
    /// Inclusion of the uncloaked reference field; defaults to `inner`.
    pub reference_inclusion: Option<MaterialSpec>,
}

/// A conductivity in W/(m K), a material name, or a law table.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MaterialSpec {
    Conductivity(f64),
    Named(String),
    Law(LawSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub law: String,
    pub kappa: Option<f64>,
    pub kappa_m: Option<f64>,
    pub kappa_i: Option<f64>,
    pub kappa_p: Option<f64>,
    pub coeffs: Option<Vec<f64>>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
}

impl MaterialSpec {
    pub fn to_law(&self) -> std::result::Result<MaterialLaw, String> {
        match self {
            Self::Conductivity(k) => constant(*k),
            Self::Named(n) => match n.as_str() {
                "copper" => constant(KAPPA_COPPER),
                "pdms" => constant(KAPPA_PDMS),
                "iron" => constant(KAPPA_IRON),
                "insulator" => constant(KAPPA_INSULATOR),
                "sensor" => constant(KAPPA_SENSOR),
                other => MaterialLaw::by_name(other).ok_or_else(|| format!("unknown material `{other}`")),
            },
            Self::Law(l) => l.to_law(),
        }
    }
}

fn constant(kappa: f64) -> std::result::Result<MaterialLaw, String> {
    MaterialLaw::new("constant", LawModel::Constant { kappa }, 0.0, 1.0).map_err(|e| e.to_string())
}

impl LawSpec {
    fn to_law(&self) -> std::result::Result<MaterialLaw, String> {
        let need = |v: Option<f64>, k: &str| v.ok_or_else(|| format!("law `{}` needs `{k}`", self.law));
        let base = match self.law.as_str() {
            "constant" => return constant(need(self.kappa, "kappa")?),
            name => MaterialLaw::by_name(name).ok_or_else(|| format!("unknown law `{name}`"))?,
        };
        let mut model = base.model.clone();
        match &mut model {
            LawModel::Emt { kappa_m, kappa_i } => {
                *kappa_m = self.kappa_m.unwrap_or(*kappa_m);
                *kappa_i = self.kappa_i.unwrap_or(*kappa_i);
            }
            LawModel::Maxwell { kappa_m, kappa_p } => {
                *kappa_m = self.kappa_m.unwrap_or(*kappa_m);
                *kappa_p = self.kappa_p.unwrap_or(*kappa_p);
            }
            LawModel::PorousCu { kappa_m } => *kappa_m = self.kappa_m.unwrap_or(*kappa_m),
            LawModel::CuSnPb { kappa_m, a, b, c, d } => {
                *kappa_m = self.kappa_m.unwrap_or(*kappa_m);
                *a = self.a.unwrap_or(*a);
                *b = self.b.unwrap_or(*b);
                *c = self.c.unwrap_or(*c);
                *d = self.d.unwrap_or(*d);
            }
            LawModel::Polynomial { kappa_m, coeffs } => {
                *kappa_m = self.kappa_m.unwrap_or(*kappa_m);
                if let Some(c) = &self.coeffs {
                    *coeffs = c.clone();
                }
            }
            LawModel::Constant { .. } => unreachable!(),
        }
        let v_min = self.v_min.unwrap_or(base.v_min);
        let v_max = self.v_max.unwrap_or(base.v_max);
        MaterialLaw::new(&self.law, model, v_min, v_max).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    /// `horizontal` (hot left), `vertical` (hot top) or `none` (all adiabatic).
    pub preset: String,
    pub hot: f64,
    pub cold: f64,
    pub left: Option<SideSpec>,
    pub right: Option<SideSpec>,
    pub bottom: Option<SideSpec>,
    pub top: Option<SideSpec>,
    /// Uniform volumetric source, W/m³.
    pub body_source: f64,
    pub point_sources: Vec<SourceSpec>,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            preset: "horizontal".into(),
            hot: 300.0,
            cold: 200.0,
            left: None,
            right: None,
            bottom: None,
            top: None,
            body_source: 0.0,
            point_sources: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum SideSpec {
    /// Temperature in K.
    Dirichlet { value: f64 },
    /// Inward flux in W/m².
    Neumann { flux: f64 },
    /// Film coefficient W/(m² K) and ambient temperature K.
    Robin { h: f64, t_inf: f64 },
}

impl From<SideSpec> for SideCondition {
    fn from(s: SideSpec) -> Self {
        match s {
            SideSpec::Dirichlet { value } => SideCondition::Dirichlet(value),
            SideSpec::Neumann { flux } => SideCondition::Neumann(flux),
            SideSpec::Robin { h, t_inf } => SideCondition::Robin { h, t_inf },
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// mm.
    pub position: [f64; 2],
    pub q: f64,
    /// Kernel half-width Δ in mm.
    pub width: f64,
}

impl BcConfig {
    fn conditions(&self) -> std::result::Result<BoundaryConditions, (&'static str, String)> {
        let mut bc = match self.preset.as_str() {
            "horizontal" => BoundaryConditions::horizontal(self.hot, self.cold),
            "vertical" => BoundaryConditions::vertical(self.hot, self.cold),
            "none" => BoundaryConditions { sides: [SideCondition::Neumann(0.0); 4], body_source: 0.0 },
            p => return Err(("preset", format!("unknown boundary preset `{p}`"))),
        };
        // sides are stored Left, Right, Bottom, Top
        for (k, s) in [self.left, self.right, self.bottom, self.top].into_iter().enumerate() {
            if let Some(s) = s {
                bc.sides[k] = s.into();
            }
        }
        for (k, name) in ["left", "right", "bottom", "top"].into_iter().enumerate() {
            let ok = match bc.sides[k] {
                SideCondition::Dirichlet(v) => v.is_finite(),
                SideCondition::Neumann(q) => q.is_finite(),
                SideCondition::Robin { h, t_inf } => h > 0.0 && h.is_finite() && t_inf.is_finite(),
            };
            if !ok {
                return Err((name, format!("invalid {name} boundary condition")));
            }
        }
        if !self.body_source.is_finite() {
            return Err(("body_source", "body source must be finite".into()));
        }
        bc.body_source = self.body_source;
        if !bc.is_well_posed() {
            return Err(("preset", "boundary conditions leave the temperature undetermined".into()));
        }
        Ok(bc)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Density spans per circumferential quarter.
    pub per_quarter: usize,
    /// Uniform radial density spans; ignored when `radial_knots` is set.
    pub radial: usize,
    /// Radial knot vector as `"1: 0 0 k1 ... 1 1"`.
    pub radial_knots: Option<String>,
    pub symmetry: String,
    pub initial: Option<InitialSpec>,
    /// Density CSV to start from.
    pub restart: Option<PathBuf>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            per_quarter: 3,
            radial: 4,
            radial_knots: None,
            symmetry: "xy".into(),
            initial: None,
            restart: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Constant(f64),
    PerVariable(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: String,
    /// Weight of the intermediate-density penalty.
    pub chi: f64,
    /// Rotation angle of the rotator, degrees.
    pub theta: f64,
    pub constraint: Option<ConstraintConfig>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { kind: "cloak".into(), chi: 0.0, theta: 90.0, constraint: None }
    }
}

impl ObjectiveConfig {
    pub fn kind(&self) -> std::result::Result<ObjectiveKind, String> {
        Ok(match self.kind.as_str() {
            "cloak" => ObjectiveKind::Cloak,
            "concentrator" => ObjectiveKind::Concentrator,
            "rotator" => ObjectiveKind::Rotator { theta: self.theta * PI / 180.0 },
            "cloaked_sensor" => ObjectiveKind::CloakedSensor,
            "cloak_concentrator" => ObjectiveKind::CloakConcentrator,
            "bidirectional" => ObjectiveKind::Bidirectional,
            k => return Err(format!("unknown objective kind `{k}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    /// Upper temperature limit, K.
    pub t_max: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default = "default_base")]
    pub base: f64,
}

fn default_radius() -> f64 {
    15.0
}

fn default_base() -> f64 {
    1.5
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NitscheConfig {
    pub beta: f64,
    pub gamma: f64,
}

impl Default for NitscheConfig {
    fn default() -> Self {
        let n = Nitsche::default();
        Self { beta: n.beta, gamma: n.gamma }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write VTK field exports.
    pub vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), vtk: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    /// Voxel (unit cell) side, mm.
    pub voxel: f64,
    /// Raster pixels per voxel side.
    pub resolution: usize,
    pub density: Option<PathBuf>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self { voxel: 4.0, resolution: 16, density: None }
    }
}

/// 1-based line of a byte offset.
fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of the value at `path`, or of its closest existing ancestor.
fn line_of(text: &str, path: &[&str]) -> Option<usize> {
    let doc = toml_edit::ImDocument::parse(text).ok()?;
    let mut item = doc.as_item();
    let mut line = None;
    for key in path {
        let Some(t) = item.as_table_like() else { break };
        let Some(next) = t.get(key) else { break };
        item = next;
        let span = match item {
            toml_edit::Item::Table(t) => t.span(),
            other => other.span(),
        };
        if let Some(s) = span {
            line = Some(line_at(text, s.start));
        }
    }
    line
}

fn at(text: &str, path: &[&str], msg: impl std::fmt::Display) -> Error {
    match line_of(text, path) {
        Some(l) => Error::Config(format!("line {l}: {}: {msg}", path.join("."))),
        None => Error::Config(format!("{}: {msg}", path.join("."))),
    }
}

impl RunConfig {
    /// Parse and validate a configuration document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim().to_string();
            match e.span() {
                Some(s) => Error::Config(format!("line {}: {msg}", line_at(text, s.start))),
                None => Error::Config(msg),
            }
        })?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(&self, text: &str) -> Result<()> {
        let g = &self.geometry;
        for (k, v) in [("length", g.length), ("r_in", g.r_in), ("r_out", g.r_out)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(at(text, &["geometry", k], format!("must be a positive length, got {v}")));
            }
        }
        if g.r_in >= g.r_out {
            return Err(at(text, &["geometry", "r_in"], format!("R_in = {} must be below R_out = {}", g.r_in, g.r_out)));
        }
        if 2.0 * g.r_out >= g.length {
            return Err(at(text, &["geometry", "r_out"], format!("R_out = {} does not fit in L = {}", g.r_out, g.length)));
        }
        if g.inner_star.is_some() != g.outer_star.is_some() {
            return Err(at(text, &["geometry"], "inner_star and outer_star must be given together"));
        }
        let m = &self.mesh;
        if m.level > 8 || m.max_level > 8 {
            return Err(at(text, &["mesh"], "refinement levels above 8 are not supported"));
        }
        if m.min_level >= m.max_level {
            return Err(at(text, &["mesh", "min_level"], "min_level must be below max_level"));
        }

        let mut laws = Vec::new();
        for key in ["inner", "design", "outer"] {
            let spec = match key {
                "inner" => &self.materials.inner,
                "design" => &self.materials.design,
                _ => &self.materials.outer,
            };
            let law = spec.to_law().map_err(|e| at(text, &["materials", key], e))?;
            if key != "design" && !law.is_constant() {
                return Err(at(text, &["materials", key], "must be a constant material"));
            }
            laws.push(law);
        }
        if let Some(r) = &self.materials.reference_inclusion {
            let law = r.to_law().map_err(|e| at(text, &["materials", "reference_inclusion"], e))?;
            if !law.is_constant() {
                return Err(at(text, &["materials", "reference_inclusion"], "must be a constant material"));
            }
        }

        self.bc.conditions().map_err(|(k, e)| at(text, &["bc", k], e))?;
        for (i, s) in self.bc.point_sources.iter().enumerate() {
            let h = 0.5 * g.length;
            if !(s.width > 0.0 && s.q.is_finite()) || s.position.iter().any(|c| !(c.abs() < h)) {
                return Err(at(text, &["bc", "point_sources"], format!("source {i} is invalid or outside the domain")));
            }
        }
        let kind = self.objective.kind().map_err(|e| at(text, &["objective", "kind"], e))?;
        match (&self.bc2, kind.scenarios()) {
            (None, 2) => return Err(at(text, &["objective", "kind"], "needs a second boundary set [bc2]")),
            (Some(_), 1) => return Err(at(text, &["bc2"], format!("{} uses a single boundary set", kind.name()))),
            (Some(b), _) => {
                b.conditions().map_err(|(k, e)| at(text, &["bc2", k], e))?;
                if !b.point_sources.is_empty() {
                    return Err(at(text, &["bc2", "point_sources"], "point sources belong to [bc]"));
                }
            }
            _ => {}
        }
        if !(self.objective.chi >= 0.0 && self.objective.chi.is_finite()) {
            return Err(at(text, &["objective", "chi"], "must be non-negative"));
        }
        if !self.objective.theta.is_finite() {
            return Err(at(text, &["objective", "theta"], "must be finite"));
        }
        if let Some(c) = &self.objective.constraint {
            if !c.t_max.is_finite() {
                return Err(at(text, &["objective", "constraint", "t_max"], "must be finite"));
            }
            MaxTemperature::new(c.center, c.radius, c.t_max, c.base)
                .map_err(|e| at(text, &["objective", "constraint"], e))?;
        }

        let d = &self.design;
        if d.per_quarter == 0 || d.radial == 0 {
            return Err(at(text, &["design"], "per_quarter and radial must be at least 1"));
        }
        if SymmetryMode::parse(&d.symmetry).is_none() {
            return Err(at(text, &["design", "symmetry"], format!("unknown symmetry `{}`", d.symmetry)));
        }
        if let Some(k) = &d.radial_knots {
            radial_interior(k).map_err(|e| at(text, &["design", "radial_knots"], e))?;
        }
        let design = &laws[1];
        match &d.initial {
            Some(InitialSpec::Constant(v)) if !(*v >= design.v_min && *v <= design.v_max) => {
                return Err(at(text, &["design", "initial"], format!("{v} is outside [{}, {}]", design.v_min, design.v_max)));
            }
            Some(InitialSpec::PerVariable(vs)) if vs.iter().any(|v| !(*v >= design.v_min && *v <= design.v_max)) => {
                return Err(at(text, &["design", "initial"], "values must lie within the design law bounds"));
            }
            _ => {}
        }
        self.optimizer.validate().map_err(|e| at(text, &["optimizer"], e))?;
        Nitsche { beta: self.nitsche.beta, gamma: self.nitsche.gamma }
            .validate()
            .map_err(|e| at(text, &["nitsche"], e))?;
        let r = &self.reconstruct;
        if !(r.voxel > 0.0 && r.voxel.is_finite()) || r.resolution == 0 {
            return Err(at(text, &["reconstruct"], "voxel must be positive and resolution at least 1"));
        }
        Ok(())
    }

    pub fn nitsche(&self) -> Nitsche {
        Nitsche { beta: self.nitsche.beta, gamma: self.nitsche.gamma }
    }

    pub fn objective_kind(&self) -> Result<ObjectiveKind> {
        self.objective.kind().map_err(Error::Config)
    }

    pub fn materials(&self) -> Result<Materials> {
        let law = |s: &MaterialSpec| s.to_law().map_err(Error::Config);
        Materials::new(law(&self.materials.inner)?, law(&self.materials.design)?, law(&self.materials.outer)?)
    }

    pub fn reference_inclusion(&self) -> Result<MaterialLaw> {
        self.materials.reference_inclusion.as_ref().unwrap_or(&self.materials.inner).to_law().map_err(Error::Config)
    }

    pub fn boundary_sets(&self) -> Result<Vec<BoundaryConditions>> {
        let mut out = vec![self.bc.conditions().map_err(|(_, e)| Error::Config(e))?];
        if let Some(b) = &self.bc2 {
            out.push(b.conditions().map_err(|(_, e)| Error::Config(e))?);
        }
        Ok(out)
    }

    /// Unrefined geometry with point sources attached.
    pub fn base_model(&self) -> Result<MultiPatchModel> {
        let g = &self.geometry;
        let model = match (g.inner_star, g.outer_star) {
            (Some(a), Some(b)) => {
                let star = |s: StarConfig| StarShape { amplitude: s.amplitude, lobes: s.lobes, phase: s.phase * PI / 180.0 };
                build_star_model(g.length, g.r_in, g.r_out, star(a), star(b))?
            }
            _ => build_annulus_model(g.length, g.r_in, g.r_out)?,
        };
        let sources = self
            .bc
            .point_sources
            .iter()
            .map(|s| PointSource { position: s.position, magnitude: s.q, width: s.width })
            .collect();
        model.with_point_sources(sources)
    }

    pub fn density_field(&self, base: &MultiPatchModel) -> Result<DensityField> {
        let p = base
            .design_patch()
            .ok_or_else(|| Error::Geometry("model has no design region".into()))?;
        let d = &self.design;
        match &d.radial_knots {
            Some(k) => {
                let eta = radial_interior(k).map_err(Error::Config)?;
                DensityField::design_mesh_with(&base.patches[p], d.per_quarter, &eta)
            }
            None => DensityField::design_mesh(&base.patches[p], d.per_quarter, d.radial),
        }
    }

    pub fn symmetry_mode(&self) -> SymmetryMode {
        SymmetryMode::parse(&self.design.symmetry).unwrap_or(SymmetryMode::None)
    }

    /// The full design problem at solution refinement `level`.
    pub fn build_problem_at(&self, level: usize) -> Result<DesignProblem> {
        let base = self.base_model()?;
        let field = self.density_field(&base)?;
        let model = refine_model(&base, level)?;
        let symmetry = SymmetryMap::build(&field, self.symmetry_mode())?;
        let kind = self.objective_kind()?;
        let constraint = self
            .objective
            .constraint
            .map(|c| MaxTemperature::new(c.center, c.radius, c.t_max, c.base))
            .transpose()?;
        DesignProblem::new(
            model,
            field,
            symmetry,
            self.materials()?,
            &self.reference_inclusion()?,
            self.boundary_sets()?,
            ObjectiveSpec { kind, chi: self.objective.chi },
            constraint,
            self.nitsche(),
        )
    }

    pub fn build_problem(&self) -> Result<DesignProblem> {
        self.build_problem_at(self.mesh.level)
    }

    /// Starting variables: restart file, then `design.initial`, then the
    /// midpoint of the design law.
    pub fn initial_point(&self, problem: &DesignProblem) -> Result<Vec<f64>> {
        if let Some(path) = &self.design.restart {
            let d = crate::io::read_density_csv(path)?;
            return crate::io::variables_from_density(problem, &d);
        }
        match &self.design.initial {
            None => Ok(problem.initial_point()),
            Some(InitialSpec::Constant(v)) => Ok(vec![*v; problem.n_vars()]),
            Some(InitialSpec::PerVariable(vs)) => {
                if vs.len() != problem.n_vars() {
                    return Err(Error::Config(format!(
                        "design.initial has {} values, the problem has {} variables",
                        vs.len(),
                        problem.n_vars()
                    )));
                }
                Ok(vs.clone())
            }
        }
    }
}

/// Interior knots of a degree-1 radial knot vector on [0, 1].
fn radial_interior(text: &str) -> std::result::Result<Vec<f64>, String> {
    let kv = KnotVector::parse(text).map_err(|e| e.to_string())?;
    if kv.degree() != 1 {
        return Err("radial design knots must have degree 1".into());
    }
    let k = kv.knots();
    if k.first() != Some(&0.0) || k.last() != Some(&1.0) {
        return Err("radial design knots must span [0, 1]".into());
    }
    let inner: Vec<f64> = k[2..k.len() - 2].to_vec();
    if inner.windows(2).any(|w| w[0] == w[1]) {
        return Err("repeated interior radial knots are not supported".into());
    }
    Ok(inner)
}
