//! Effective conductivity laws κ(v) for graded cellular materials.

use crate::error::{Error, Result};

pub const KAPPA_COPPER: f64 = 398.0;
pub const KAPPA_PDMS: f64 = 0.27;
pub const KAPPA_IRON: f64 = 67.0;
pub const KAPPA_INSULATOR: f64 = 1e-4;
pub const KAPPA_SENSOR: f64 = 130.0;

const TCOH_COEFFS: [f64; 7] = [0.4231, 0.1236, 0.0933, 0.0902, 0.0899, 0.0899, 0.0899];
const GYROID_COEFFS: [f64; 7] = [0.5934, 0.1119, 0.0631, 0.0583, 0.0578, 0.0577, 0.0577];

#[derive(Debug, Clone, PartialEq)]
pub enum LawModel {
    /// Effective medium theory for a two-phase mixture.
    Emt { kappa_m: f64, kappa_i: f64 },
    /// Maxwell–Eucken with dispersed filler of conductivity `kappa_p`.
    Maxwell { kappa_m: f64, kappa_p: f64 },
    PorousCu { kappa_m: f64 },
    /// Two-exponential fit `κm (a e^{bv} + c e^{dv})`.
    CuSnPb { kappa_m: f64, a: f64, b: f64, c: f64, d: f64 },
    /// `κm Σ C_i v^i`, i starting at 1.
    Polynomial { kappa_m: f64, coeffs: Vec<f64> },
    Constant { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialLaw {
    pub name: String,
    pub model: LawModel,
    pub v_min: f64,
    pub v_max: f64,
}

impl MaterialLaw {
    pub fn new(name: &str, model: LawModel, v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min.is_finite() && v_max.is_finite() && v_min <= v_max) {
            return Err(Error::Argument(format!(
                "material {name}: invalid density interval [{v_min}, {v_max}]"
            )));
        }
        let law = Self { name: name.to_string(), model, v_min, v_max };
        let n = 64;
        for k in 0..=n {
            let v = v_min + (v_max - v_min) * k as f64 / n as f64;
            let kappa = law.eval_unclamped(v).0;
            if !(kappa.is_finite() && kappa > 0.0) {
                return Err(Error::Argument(format!(
                    "material {name}: conductivity {kappa} at v={v} is not positive"
                )));
            }
        }
        Ok(law)
    }

    pub fn emt() -> Self {
        Self::emt_with(KAPPA_COPPER, KAPPA_PDMS)
    }

    pub fn emt_with(kappa_m: f64, kappa_i: f64) -> Self {
        Self {
            name: "emt".into(),
            model: LawModel::Emt { kappa_m, kappa_i },
            v_min: 0.0,
            v_max: 1.0,
        }
    }

    pub fn maxwell() -> Self {
        Self {
            name: "maxwell".into(),
            model: LawModel::Maxwell { kappa_m: KAPPA_COPPER, kappa_p: KAPPA_PDMS },
            v_min: 0.0,
            v_max: 1.0,
        }
    }

    pub fn porous_cu() -> Self {
        Self {
            name: "porous_cu".into(),
            model: LawModel::PorousCu { kappa_m: KAPPA_COPPER },
            v_min: 0.0,
            v_max: 0.7,
        }
    }

    pub fn cusnpb() -> Self {
        Self {
            name: "cusnpb".into(),
            model: LawModel::CuSnPb {
                kappa_m: KAPPA_COPPER,
                a: 0.934008,
                b: -28.14,
                c: 0.0708923,
                d: 0.00114783,
            },
            v_min: 0.0,
            v_max: 0.3,
        }
    }

    pub fn tcoh() -> Self {
        Self {
            name: "tcoh".into(),
            model: LawModel::Polynomial { kappa_m: KAPPA_COPPER, coeffs: TCOH_COEFFS.to_vec() },
            v_min: 0.2,
            v_max: 0.8,
        }
    }

    pub fn gyroid() -> Self {
        Self {
            name: "gyroid".into(),
            model: LawModel::Polynomial { kappa_m: KAPPA_COPPER, coeffs: GYROID_COEFFS.to_vec() },
            v_min: 0.2,
            v_max: 0.9,
        }
    }

    pub fn constant(kappa: f64) -> Self {
        Self {
            name: "constant".into(),
            model: LawModel::Constant { kappa },
            v_min: 0.0,
            v_max: 1.0,
        }
    }

    /// Built-in law by name with default constituents.
    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "emt" => Self::emt(),
            "maxwell" => Self::maxwell(),
            "porous_cu" => Self::porous_cu(),
            "cusnpb" => Self::cusnpb(),
            "tcoh" => Self::tcoh(),
            "gyroid" => Self::gyroid(),
            _ => return None,
        })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.model, LawModel::Constant { .. })
    }

    /// Midpoint of the admissible interval.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.v_min + self.v_max)
    }

    fn clamp(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::Argument(format!("density {v} is not finite")));
        }
        let c = v.clamp(self.v_min, self.v_max);
        if (c - v).abs() > 1e-9 {
            log::warn!("material {}: density {v} clamped to {c}", self.name);
        }
        Ok(c)
    }

    pub fn kappa_eff(&self, v: f64) -> Result<f64> {
        Ok(self.eval_unclamped(self.clamp(v)?).0)
    }

    pub fn dkappa_dv(&self, v: f64) -> Result<f64> {
        Ok(self.eval_unclamped(self.clamp(v)?).1)
    }

    /// Value and derivative together, after clamping.
    pub fn eval(&self, v: f64) -> Result<(f64, f64)> {
        Ok(self.eval_unclamped(self.clamp(v)?))
    }

    fn eval_unclamped(&self, v: f64) -> (f64, f64) {
        match &self.model {
            LawModel::Emt { kappa_m: km, kappa_i: ki } => {
                let tau = (3.0 * v - 1.0) * ki + (3.0 * (1.0 - v) - 1.0) * km;
                let dtau = 3.0 * (ki - km);
                let root = (tau * tau + 8.0 * ki * km).sqrt();
                (0.25 * (tau + root), 0.25 * (dtau + tau * dtau / root))
            }
            LawModel::Maxwell { kappa_m: km, kappa_p: kp } => {
                let a = 2.0 * km + kp;
                let d = km - kp;
                let num = a - 2.0 * v * d;
                let den = a + v * d;
                (km * num / den, -3.0 * km * d * a / (den * den))
            }
            LawModel::PorousCu { kappa_m: km } => {
                (km * (1.0 - v) / (1.0 + v), -2.0 * km / ((1.0 + v) * (1.0 + v)))
            }
            LawModel::CuSnPb { kappa_m: km, a, b, c, d } => {
                let (eb, ed) = ((b * v).exp(), (d * v).exp());
                (km * (a * eb + c * ed), km * (a * b * eb + c * d * ed))
            }
            LawModel::Polynomial { kappa_m: km, coeffs } => {
                let (mut val, mut der) = (0.0, 0.0);
                for (i, c) in coeffs.iter().enumerate().rev() {
                    let k = (i + 1) as f64;
                    val = val * v + c;
                    der = der * v + k * c;
                }
                // val currently Σ C_i v^{i-1}; der Σ i C_i v^{i-1}
                (km * val * v, km * der)
            }
            LawModel::Constant { kappa } => (*kappa, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vec<MaterialLaw> {
        vec![
            MaterialLaw::emt(),
            MaterialLaw::maxwell(),
            MaterialLaw::porous_cu(),
            MaterialLaw::cusnpb(),
            MaterialLaw::tcoh(),
            MaterialLaw::gyroid(),
            MaterialLaw::constant(67.0),
        ]
    }

    #[test]
    fn table_values() {
        assert!((MaterialLaw::porous_cu().kappa_eff(0.7).unwrap() - 70.24).abs() < 0.01);
        assert!((MaterialLaw::cusnpb().kappa_eff(0.3).unwrap() - 28.31).abs() < 0.01);
        assert!((MaterialLaw::cusnpb().kappa_eff(0.0).unwrap() - 399.95).abs() < 0.01);
        assert!((MaterialLaw::tcoh().kappa_eff(0.2).unwrap() - 36.01).abs() < 0.05);
        assert!((MaterialLaw::tcoh().kappa_eff(0.8).unwrap() - 228.52).abs() < 0.05);
        assert!((MaterialLaw::emt().kappa_eff(0.0).unwrap() - 398.0).abs() < 1e-9);
        assert!((MaterialLaw::emt().kappa_eff(1.0).unwrap() - 0.27).abs() < 1e-9);
        assert!((MaterialLaw::maxwell().kappa_eff(0.0).unwrap() - 398.0).abs() < 1e-9);
        assert!((MaterialLaw::maxwell().kappa_eff(1.0).unwrap() - 0.27).abs() < 1e-9);
    }

    #[test]
    fn porous_derivative_closed_form() {
        let law = MaterialLaw::porous_cu();
        assert!((law.dkappa_dv(0.0).unwrap() + 796.0).abs() < 1e-12);
        for &v in &[0.1, 0.35, 0.6] {
            let exact = -2.0 * 398.0 / ((1.0 + v) * (1.0 + v));
            assert!((law.dkappa_dv(v).unwrap() - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn ranges_match_table() {
        let expected = [
            (MaterialLaw::emt(), 0.27, 398.0),
            (MaterialLaw::maxwell(), 0.27, 398.0),
            (MaterialLaw::porous_cu(), 70.24, 398.0),
            (MaterialLaw::cusnpb(), 28.31, 399.95),
            (MaterialLaw::tcoh(), 36.01, 228.52),
        ];
        for (law, lo, hi) in expected {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..=1000 {
                let v = law.v_min + (law.v_max - law.v_min) * k as f64 / 1000.0;
                let kap = law.kappa_eff(v).unwrap();
                mn = mn.min(kap);
                mx = mx.max(kap);
            }
            assert!((mn - lo).abs() <= 0.005 * lo, "{} min {mn}", law.name);
            assert!((mx - hi).abs() <= 0.005 * hi, "{} max {mx}", law.name);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for law in all() {
            let h = 1e-7;
            for k in 1..1000 {
                let v = law.v_min + (law.v_max - law.v_min) * k as f64 / 1000.0;
                if v - h < law.v_min || v + h > law.v_max {
                    continue;
                }
                let fd = (law.kappa_eff(v + h).unwrap() - law.kappa_eff(v - h).unwrap()) / (2.0 * h);
                let d = law.dkappa_dv(v).unwrap();
                let scale = d.abs().max(1e-3 * law.kappa_eff(v).unwrap());
                assert!((fd - d).abs() <= 1e-5 * scale, "{} at {v}: {fd} vs {d}", law.name);
            }
        }
    }

    #[test]
    fn clamping_and_errors() {
        let law = MaterialLaw::porous_cu();
        assert_eq!(law.kappa_eff(0.9).unwrap(), law.kappa_eff(0.7).unwrap());
        assert!(law.kappa_eff(f64::NAN).is_err());
        assert_eq!(MaterialLaw::constant(5.0).dkappa_dv(0.3).unwrap(), 0.0);
        assert!(MaterialLaw::new("bad", LawModel::Constant { kappa: -1.0 }, 0.0, 1.0).is_err());
    }

    #[test]
    fn gyroid_polynomial_verbatim() {
        let g = MaterialLaw::gyroid();
        let direct: f64 = GYROID_COEFFS
            .iter()
            .enumerate()
            .map(|(i, c)| c * 0.5f64.powi(i as i32 + 1))
            .sum::<f64>()
            * 398.0;
        assert!((g.kappa_eff(0.5).unwrap() - direct).abs() < 1e-10);
    }
}
