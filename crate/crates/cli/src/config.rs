//! TOML run configurations. Every frequency in a config file is in Hz.

use std::path::Path;

use resetdf::approx;
use resetdf::hosidf::{DEFAULT_GRID_POINTS, DEFAULT_ORDERS};
use resetdf::reset_elements::{
    hz_to_rad, make_clegg, make_gfore, make_gsore, make_cglp, make_pid, CgLpDesign, Element, LinearElement,
    ResetController, SeriesChain,
};
use resetdf::simulator::make_plant;
use resetdf::tuner::{self, GainLaw, TuningProblem};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Reads and parses a config file. Parse failures keep the line/column
/// diagnostics produced by the TOML parser.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path, e.to_string()))?;
    toml::from_str(&text).map_err(|e| CliError::config(path, e.to_string()))
}

/// A reset element, optionally with its CgLp lead filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ElementConfig {
    Clegg,
    Gfore {
        omega_r_hz: f64,
        gamma: f64,
        /// Defaults to 1.
        #[serde(default)]
        alpha: Option<f64>,
    },
    Gsore {
        omega_r_hz: f64,
        gamma: f64,
        /// Defaults to 1.
        #[serde(default)]
        kappa: Option<f64>,
        /// Defaults to `1 / (2 kappa)`.
        #[serde(default)]
        beta: Option<f64>,
    },
    CglpFore {
        gamma: f64,
        omega_r_hz: f64,
        omega_f_hz: f64,
        /// Used when `alpha` is absent; defaults to `formula`.
        #[serde(default)]
        gain_law: Option<GainLaw>,
        #[serde(default)]
        alpha: Option<f64>,
    },
    CglpSore {
        gamma: f64,
        omega_r_hz: f64,
        omega_f_hz: f64,
        /// Used when `kappa` is absent; defaults to `unity-high-frequency`.
        #[serde(default)]
        gain_law: Option<GainLaw>,
        #[serde(default)]
        kappa: Option<f64>,
        /// Defaults to `1 / (2 kappa)`.
        #[serde(default)]
        beta: Option<f64>,
        /// Defaults to 1.
        #[serde(default)]
        zeta: Option<f64>,
    },
    /// Arbitrary reset controller; `a` is row-major, `reset` the diagonal
    /// of the reset matrix.
    StateSpace {
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        #[serde(default)]
        d: f64,
        reset: Vec<f64>,
    },
}

fn gain_corr(law: GainLaw, order: u8, gamma: f64) -> Result<f64, String> {
    match (law, order) {
        (GainLaw::Formula, 1) => approx::alpha_choice(gamma).map_err(|e| e.to_string()),
        (GainLaw::Formula, _) => approx::kappa_choice(gamma).map_err(|e| e.to_string()),
        (GainLaw::UnityHighFrequency, o) => tuner::unity_gain_correction(o, gamma).map_err(|e| e.to_string()),
    }
}

impl ElementConfig {
    /// Same element with every optional parameter filled in.
    pub fn resolve(&self) -> Result<Self, String> {
        Ok(match self.clone() {
            Self::Gfore { omega_r_hz, gamma, alpha } => Self::Gfore {
                omega_r_hz,
                gamma,
                alpha: Some(alpha.unwrap_or(1.0)),
            },
            Self::Gsore {
                omega_r_hz,
                gamma,
                kappa,
                beta,
            } => {
                let kappa = kappa.unwrap_or(1.0);
                Self::Gsore {
                    omega_r_hz,
                    gamma,
                    kappa: Some(kappa),
                    beta: Some(beta.unwrap_or(1.0 / (2.0 * kappa))),
                }
            }
            Self::CglpFore {
                gamma,
                omega_r_hz,
                omega_f_hz,
                gain_law,
                alpha,
            } => {
                let law = gain_law.unwrap_or(GainLaw::Formula);
                let alpha = match alpha {
                    Some(a) => a,
                    None => gain_corr(law, 1, gamma)?,
                };
                Self::CglpFore {
                    gamma,
                    omega_r_hz,
                    omega_f_hz,
                    gain_law: Some(law),
                    alpha: Some(alpha),
                }
            }
            Self::CglpSore {
                gamma,
                omega_r_hz,
                omega_f_hz,
                gain_law,
                kappa,
                beta,
                zeta,
            } => {
                let law = gain_law.unwrap_or(GainLaw::UnityHighFrequency);
                let kappa = match kappa {
                    Some(k) => k,
                    None => gain_corr(law, 2, gamma)?,
                };
                Self::CglpSore {
                    gamma,
                    omega_r_hz,
                    omega_f_hz,
                    gain_law: Some(law),
                    kappa: Some(kappa),
                    beta: Some(beta.unwrap_or(1.0 / (2.0 * kappa))),
                    zeta: Some(zeta.unwrap_or(1.0)),
                }
            }
            other => other,
        })
    }

    /// CgLp design of a resolved `cglp-*` element.
    pub fn design(&self) -> Option<CgLpDesign> {
        match *self {
            Self::CglpFore {
                gamma,
                omega_r_hz,
                omega_f_hz,
                alpha: Some(alpha),
                ..
            } => Some(CgLpDesign::first(gamma, hz_to_rad(omega_r_hz), hz_to_rad(omega_f_hz), alpha)),
            Self::CglpSore {
                gamma,
                omega_r_hz,
                omega_f_hz,
                kappa: Some(kappa),
                beta: Some(beta),
                zeta: Some(zeta),
                ..
            } => Some(CgLpDesign::second(
                gamma,
                hz_to_rad(omega_r_hz),
                hz_to_rad(omega_f_hz),
                kappa,
                beta,
                zeta,
            )),
            _ => None,
        }
    }

    fn controller(&self) -> Result<ResetController, String> {
        let r = match self.resolve()? {
            Self::Clegg => Ok(make_clegg()),
            Self::Gfore {
                omega_r_hz,
                gamma,
                alpha,
            } => make_gfore(hz_to_rad(omega_r_hz), gamma, alpha.unwrap_or(1.0)),
            Self::Gsore {
                omega_r_hz,
                gamma,
                kappa,
                beta,
            } => make_gsore(
                hz_to_rad(omega_r_hz),
                gamma,
                kappa.unwrap_or(1.0),
                beta.unwrap_or(0.5),
            ),
            Self::StateSpace { a, b, c, d, reset } => ResetController::new(a, b, c, d, reset),
            _ => unreachable!("cglp handled by chain()"),
        };
        r.map_err(|e| e.to_string())
    }

    /// The element as a series chain (CgLp includes its lead filter).
    pub fn chain(&self) -> Result<SeriesChain, String> {
        let resolved = self.resolve()?;
        match resolved.design() {
            Some(d) => make_cglp(&d).map_err(|e| e.to_string()),
            None => Ok(SeriesChain::single(resolved.controller()?)),
        }
    }
}

/// Series PID `kp (1 + omega_i/s) / (s/omega_f + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidConfig {
    /// When absent, chosen so the open loop has unit first-harmonic gain at
    /// `omega_c_hz`.
    #[serde(default)]
    pub kp: Option<f64>,
    #[serde(default = "default_omega_i_hz")]
    pub omega_i_hz: f64,
    #[serde(default = "default_pid_omega_f_hz")]
    pub omega_f_hz: f64,
    #[serde(default = "default_omega_c_hz")]
    pub omega_c_hz: f64,
}

fn default_omega_i_hz() -> f64 {
    10.0
}

fn default_pid_omega_f_hz() -> f64 {
    500.0
}

fn default_omega_c_hz() -> f64 {
    100.0
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            kp: None,
            omega_i_hz: default_omega_i_hz(),
            omega_f_hz: default_pid_omega_f_hz(),
            omega_c_hz: default_omega_c_hz(),
        }
    }
}

impl PidConfig {
    pub fn element(&self, kp: f64) -> Result<LinearElement, String> {
        make_pid(kp, hz_to_rad(self.omega_i_hz), hz_to_rad(self.omega_f_hz)).map_err(|e| e.to_string())
    }
}

/// Linear plant; the identified positioning stage when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl PlantConfig {
    pub fn stage() -> Self {
        let p = make_plant();
        Self {
            num: p.numerator().to_vec(),
            den: p.denominator().to_vec(),
        }
    }

    pub fn element(&self) -> Result<LinearElement, String> {
        LinearElement::new(self.num.clone(), self.den.clone()).map_err(|e| e.to_string())
    }
}

/// Reset element, optional PID and plant in series. Returns the chain and
/// the proportional gain actually used.
pub fn build_loop(
    element: &ElementConfig,
    pid: Option<&PidConfig>,
    plant: Option<&PlantConfig>,
) -> Result<(SeriesChain, Option<f64>), String> {
    let base = element.chain()?;
    let Some(pid) = pid else {
        let chain = match plant {
            Some(p) => base.then([Element::Linear(p.element()?)]).map_err(|e| e.to_string())?,
            None => base,
        };
        return Ok((chain, None));
    };
    let with_pid = |kp: f64| -> Result<SeriesChain, String> {
        let mut more = vec![Element::Linear(pid.element(kp)?)];
        if let Some(p) = plant {
            more.push(Element::Linear(p.element()?));
        }
        base.then(more).map_err(|e| e.to_string())
    };
    let kp = match pid.kp {
        Some(kp) => kp,
        None => {
            if plant.is_none() {
                return Err("pid.kp is required when no plant is included".into());
            }
            tuner::normalize_loop_gain(&with_pid(1.0)?, hz_to_rad(pid.omega_c_hz)).map_err(|e| e.to_string())?
        }
    };
    Ok((with_pid(kp)?, Some(kp)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default)]
    pub orders: Option<Vec<u32>>,
}

impl SweepConfig {
    pub fn resolve(&self) -> Self {
        Self {
            points: Some(self.points.unwrap_or(DEFAULT_GRID_POINTS)),
            orders: Some(self.orders.clone().unwrap_or_else(|| DEFAULT_ORDERS.to_vec())),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub element: ElementConfig,
    #[serde(default)]
    pub pid: Option<PidConfig>,
    /// Append the plant (`[plant]` table or the stage model) to the chain.
    #[serde(default)]
    pub include_plant: bool,
    #[serde(default)]
    pub plant: Option<PlantConfig>,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub problem: TuningProblem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Amplitude of the sinusoidal reference (plant output units).
    pub amplitude: f64,
    pub frequency_hz: f64,
    #[serde(default = "default_settle")]
    pub settle_periods: u32,
    #[serde(default = "default_analysis")]
    pub analysis_periods: u32,
    /// Integration step in seconds; derived from the dynamics when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Encoder resolution applied to the fed-back output.
    #[serde(default)]
    pub quantizer: Option<f64>,
    #[serde(default = "default_record_stride")]
    pub record_stride: usize,
}

fn default_settle() -> u32 {
    4
}

fn default_analysis() -> u32 {
    4
}

fn default_record_stride() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub element: ElementConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub pid: PidConfig,
    #[serde(default)]
    pub plant: Option<PlantConfig>,
    pub run: Vec<RunConfig>,
}
