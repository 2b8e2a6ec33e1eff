//! Simplified low/high-frequency harmonic formulas and the parameter laws
//! used to tune CgLp elements.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reset_elements::{CgLpDesign, CgLpShape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApproxError {
    #[error("gamma = {0} is outside (-1, 1]")]
    Gamma(f64),
    #[error("kappa must be positive, got {0}")]
    Kappa(f64),
    #[error("no feasible reset gain for a phase lead of {0} deg (must lie in (0, {max:.4}) deg)", max = max_fore_lead_deg())]
    NoFeasibleGamma(f64),
    #[error("no simplified formula for {kind:?} in regime {regime:?} at order {n}")]
    Unsupported { kind: ElementKind, regime: Regime, n: u32 },
    #[error("design is order {design}, formula needs order {needed}")]
    OrderMismatch { design: u8, needed: u8 },
    #[error("invalid design: {0}")]
    Design(String),
}

/// `F = 4/pi * (1 - gamma) / (1 + gamma)`.
pub fn factor_f(gamma: f64) -> Result<f64, ApproxError> {
    if !(gamma > -1.0 && gamma <= 1.0) {
        return Err(ApproxError::Gamma(gamma));
    }
    Ok(4.0 / PI * (1.0 - gamma) / (1.0 + gamma))
}

/// First-order gain correction `1 / sqrt(1 + F^2)`.
pub fn alpha_choice(gamma: f64) -> Result<f64, ApproxError> {
    let f = factor_f(gamma)?;
    Ok(1.0 / (1.0 + f * f).sqrt())
}

/// Second-order gain correction `1 / (1 + F^2)^(1/4)`.
pub fn kappa_choice(gamma: f64) -> Result<f64, ApproxError> {
    let f = factor_f(gamma)?;
    Ok((1.0 + f * f).powf(-0.25))
}

/// Damping that cancels the low-frequency odd harmonics of GSORE.
pub fn beta_choice(kappa: f64) -> Result<f64, ApproxError> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(ApproxError::Kappa(kappa));
    }
    Ok(1.0 / (2.0 * kappa))
}

fn max_fore_lead_deg() -> f64 {
    (4.0 / PI).atan().to_degrees()
}

/// Largest reset gain of a first-order CgLp that still reaches `phi_deg`
/// of asymptotic lead.
pub fn gamma_max(phi_deg: f64) -> Result<f64, ApproxError> {
    if !(phi_deg > 0.0 && phi_deg < max_fore_lead_deg()) {
        return Err(ApproxError::NoFeasibleGamma(phi_deg));
    }
    let t = phi_deg.to_radians().tan();
    Ok((4.0 / PI - t) / (4.0 / PI + t))
}

/// Low-frequency harmonic proxy `(1 - gamma) / (c omega_r)^2`, with `c`
/// the design's alpha or kappa.
pub fn sigma(design: &CgLpDesign) -> Result<f64, ApproxError> {
    design.validate().map_err(|e| ApproxError::Design(e.to_string()))?;
    let c = design.gain_correction();
    Ok((1.0 - design.gamma) / (c * design.omega_r).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Gfore,
    Gsore,
    CglpFore,
    CglpSore,
}

impl ElementKind {
    pub fn order(self) -> u8 {
        match self {
            ElementKind::Gfore | ElementKind::CglpFore => 1,
            ElementKind::Gsore | ElementKind::CglpSore => 2,
        }
    }

    pub fn is_cglp(self) -> bool {
        matches!(self, ElementKind::CglpFore | ElementKind::CglpSore)
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Gfore => "gfore",
            ElementKind::Gsore => "gsore",
            ElementKind::CglpFore => "cglp-fore",
            ElementKind::CglpSore => "cglp-sore",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Lf,
    Hf,
}

/// Default regime boundaries relative to `omega_r`.
pub const LF_LIMIT: f64 = 0.1;
pub const HF_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    pub kind: ElementKind,
    pub regime: Regime,
    pub n: u32,
    pub omega: f64,
    pub magnitude: f64,
    /// Degrees, when the simplified form defines a phase.
    pub phase_deg: Option<f64>,
    pub formula_id: &'static str,
}

impl ApproxReport {
    /// True when `omega` lies inside the default regime boundaries.
    pub fn in_regime(&self, omega_r: f64) -> bool {
        match self.regime {
            Regime::Lf => self.omega <= LF_LIMIT * omega_r,
            Regime::Hf => self.omega >= HF_LIMIT * omega_r,
        }
    }
}

/// Simplified prediction of `|G_n|` (and phase where defined) for `kind`.
///
/// The plain reset elements use the reset part of `design` only.
pub fn approx_eval(
    kind: ElementKind,
    regime: Regime,
    n: u32,
    design: &CgLpDesign,
    omega: f64,
) -> Result<ApproxReport, ApproxError> {
    if n == 0 || (n > 1 && n % 2 == 0) {
        return Err(ApproxError::Unsupported { kind, regime, n });
    }
    if design.order() != kind.order() {
        return Err(ApproxError::OrderMismatch {
            design: design.order(),
            needed: kind.order(),
        });
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(ApproxError::Design(format!("omega must be positive, got {omega}")));
    }
    let gamma = design.gamma;
    let f = factor_f(gamma)?;
    let wr = design.omega_r;
    let nf = n as f64;
    let lf_gain_n = |c: f64, beta_term: f64| 2.0 * (1.0 - gamma) / PI * (beta_term / (c * wr).powi(2) * omega * omega).abs();
    let (magnitude, phase_deg, formula_id) = match (design.shape, kind, regime, n) {
        (_, ElementKind::Gfore, Regime::Lf, 1) => (1.0, Some(0.0), "gfore.lf.n1"),
        (_, ElementKind::Gsore, Regime::Lf, 1) => (1.0, Some(0.0), "gsore.lf.n1"),
        (_, ElementKind::CglpFore, Regime::Lf, 1) => (1.0, Some(0.0), "cglp-fore.lf.n1"),
        (_, ElementKind::CglpSore, Regime::Lf, 1) => (1.0, Some(0.0), "cglp-sore.lf.n1"),
        (CgLpShape::First { alpha }, ElementKind::Gfore, Regime::Lf, _) => (lf_gain_n(alpha, 1.0), None, "gfore.lf.odd"),
        (CgLpShape::First { alpha }, ElementKind::CglpFore, Regime::Lf, _) => {
            (lf_gain_n(alpha, 1.0), None, "cglp-fore.lf.odd")
        }
        (CgLpShape::Second { kappa, beta, .. }, ElementKind::Gsore, Regime::Lf, _) => {
            (lf_gain_n(kappa, 4.0 * kappa * kappa * beta * beta - 1.0), None, "gsore.lf.odd")
        }
        (CgLpShape::Second { kappa, beta, .. }, ElementKind::CglpSore, Regime::Lf, _) => {
            (lf_gain_n(kappa, 4.0 * kappa * kappa * beta * beta - 1.0), None, "cglp-sore.lf.odd")
        }
        (CgLpShape::First { alpha }, ElementKind::Gfore, Regime::Hf, 1) => (
            (1.0 + f * f).sqrt() * alpha * wr / omega,
            Some((-PI / 2.0 + f.atan()).to_degrees()),
            "gfore.hf.n1",
        ),
        (CgLpShape::First { alpha }, ElementKind::Gfore, Regime::Hf, _) => (f * alpha * wr / (nf * omega), None, "gfore.hf.odd"),
        (CgLpShape::First { alpha }, ElementKind::CglpFore, Regime::Hf, 1) => {
            (alpha * (1.0 + f * f).sqrt(), Some(f.atan().to_degrees()), "cglp-fore.hf.n1")
        }
        (CgLpShape::First { alpha }, ElementKind::CglpFore, Regime::Hf, _) => (alpha * f, None, "cglp-fore.hf.odd"),
        (CgLpShape::Second { kappa, .. }, ElementKind::Gsore, Regime::Hf, 1) => (
            (1.0 + f * f).sqrt() * (kappa * wr / omega).powi(2),
            Some(f.atan().to_degrees()),
            "gsore.hf.n1",
        ),
        (CgLpShape::Second { kappa, .. }, ElementKind::Gsore, Regime::Hf, _) => {
            ((kappa * wr / (nf * omega)).powi(2) * f, None, "gsore.hf.odd")
        }
        (CgLpShape::Second { kappa, .. }, ElementKind::CglpSore, Regime::Hf, 1) => (
            kappa * kappa * (1.0 + f * f).sqrt(),
            Some((PI + f.atan()).to_degrees()),
            "cglp-sore.hf.n1",
        ),
        (CgLpShape::Second { kappa, .. }, ElementKind::CglpSore, Regime::Hf, _) => {
            (kappa * kappa * f, None, "cglp-sore.hf.odd")
        }
        _ => return Err(ApproxError::Unsupported { kind, regime, n }),
    };
    Ok(ApproxReport {
        kind,
        regime,
        n,
        omega,
        magnitude,
        phase_deg,
        formula_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_values() {
        assert_eq!(factor_f(1.0).unwrap(), 0.0);
        assert!((factor_f(0.0).unwrap() - 1.27324).abs() < 1e-5);
        assert!((factor_f(-0.2).unwrap() - 1.90986).abs() < 1e-5);
        assert_eq!(factor_f(-1.0), Err(ApproxError::Gamma(-1.0)));
        assert!(factor_f(1.2).is_err());
    }

    #[test]
    fn gain_laws() {
        assert_eq!(alpha_choice(1.0).unwrap(), 1.0);
        assert_eq!(kappa_choice(1.0).unwrap(), 1.0);
        assert!((alpha_choice(0.0).unwrap() - 0.6177).abs() < 1e-4);
        assert!((kappa_choice(0.0).unwrap() - 0.7856).abs() < 5e-4);
        assert!((beta_choice(0.7856).unwrap() - 0.6365).abs() < 1e-4);
        assert_eq!(beta_choice(0.5).unwrap(), 1.0);
        assert!(beta_choice(0.0).is_err());
        let k = 0.7856;
        let b = beta_choice(k).unwrap();
        assert!((4.0 * k * k * b * b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_max_values() {
        assert!((gamma_max(40.0).unwrap() - 0.2055).abs() < 5e-4);
        assert!(gamma_max(1e-6).unwrap() > 0.99999);
        assert!(matches!(gamma_max(60.0), Err(ApproxError::NoFeasibleGamma(_))));
        assert!(gamma_max(0.0).is_err());
    }

    #[test]
    fn sigma_matches_definition() {
        let wc = 2.0 * PI * 100.0;
        let d = CgLpDesign::first(0.0, wc / 4.3, 1e7, alpha_choice(0.0).unwrap());
        assert!((sigma(&d).unwrap() - 1.23e-4).abs() < 0.005e-4);
        let lin = CgLpDesign::first(1.0, 10.0, 1e4, 1.0);
        assert_eq!(sigma(&lin).unwrap(), 0.0);
    }

    #[test]
    fn cglp_fore_hf_is_unity_with_alpha_choice() {
        let g = -0.1;
        let d = CgLpDesign::first(g, 1.0, 1e6, alpha_choice(g).unwrap());
        let r = approx_eval(ElementKind::CglpFore, Regime::Hf, 1, &d, 100.0).unwrap();
        assert!((r.magnitude - 1.0).abs() < 1e-12);
        assert!((r.phase_deg.unwrap() - factor_f(g).unwrap().atan().to_degrees()).abs() < 1e-12);
        let r3 = approx_eval(ElementKind::CglpSore, Regime::Hf, 3, &CgLpDesign::second(0.0, 1.0, 1e6, 0.7856, 0.6365, 1.0), 100.0)
            .unwrap();
        assert!((r3.magnitude - 0.7856f64.powi(2) * 4.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn unsupported_combinations() {
        let d = CgLpDesign::first(0.0, 1.0, 1e3, 0.6);
        assert!(matches!(
            approx_eval(ElementKind::Gfore, Regime::Lf, 2, &d, 0.01),
            Err(ApproxError::Unsupported { .. })
        ));
        assert!(matches!(
            approx_eval(ElementKind::Gsore, Regime::Lf, 1, &d, 0.01),
            Err(ApproxError::OrderMismatch { .. })
        ));
    }
}
