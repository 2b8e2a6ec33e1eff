//! Exact describing function (DF) and higher-order sinusoidal-input
//! describing functions (HOSIDF) of reset controllers.
//!
//! For a controller `(A, B, C, D, A_rho)` driven by `sin(wt)`:
//!
//! ```text
//! Lambda  = w^2 I + A^2
//! Delta   = I + exp(pi/w A)
//! Delta_r = I + A_rho exp(pi/w A)
//! Gamma_r = Delta_r^-1 A_rho Delta Lambda^-1
//! Theta_D = -2 w^2 / pi * Delta (Gamma_r - Lambda^-1)
//!
//! G_1(w) = C (jwI - A)^-1 (I + j Theta_D) B + D
//! G_n(w) = C (jnwI - A)^-1 j Theta_D B      odd n > 1
//! G_n(w) = 0                                even n
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::numkit::{self, CMatrix, NumError};
use crate::reset_elements::{Element, ElementError, ResetController, SeriesChain};

const J: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Harmonic orders evaluated when none are requested.
pub const DEFAULT_ORDERS: [u32; 5] = [1, 3, 5, 7, 9];
/// Number of points of the default log-spaced sweep grid.
pub const DEFAULT_GRID_POINTS: usize = 1000;
/// `|1 + L1|` below which the sensitivity is treated as undefined.
pub const MARGINAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HosidfError {
    #[error("frequency must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("harmonic order must be at least 1")]
    BadOrder,
    #[error("describing function undefined at omega = {omega} rad/s: {source}")]
    Undefined { omega: f64, source: NumError },
    #[error("open loop passes through -1 at omega = {omega} rad/s (|1 + L1| = {distance:.3e})")]
    Marginal { omega: f64, distance: f64 },
    #[error("invalid frequency grid: {0}")]
    BadGrid(String),
    #[error(transparent)]
    Element(#[from] ElementError),
}

fn undefined(omega: f64) -> impl Fn(NumError) -> HosidfError {
    move |e| HosidfError::Undefined {
        omega,
        source: e.at_omega(omega),
    }
}

fn check_omega(omega: f64) -> Result<(), HosidfError> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(HosidfError::BadFrequency(omega))
    }
}

/// Kernel matrices of the analytic harmonic formula at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct HosidfKernels {
    pub omega: f64,
    pub lambda: CMatrix,
    pub delta: CMatrix,
    pub delta_r: CMatrix,
    pub gamma_r: CMatrix,
    pub theta_d: CMatrix,
}

pub fn kernels(ctrl: &ResetController, omega: f64) -> Result<HosidfKernels, HosidfError> {
    check_omega(omega)?;
    let n = ctrl.order();
    let a = ctrl.a_matrix();
    let id = CMatrix::identity(n);
    let rho = ctrl.reset_matrix();
    let lambda = &id.scale_real(omega * omega) + &(&a * &a);
    let lambda_inv = numkit::mat_inv(&lambda).map_err(undefined(omega))?;
    let e = numkit::mat_exp(&a.scale_real(PI / omega)).map_err(undefined(omega))?;
    let delta = &id + &e;
    let delta_r = &id + &(&rho * &e);
    let delta_r_inv = numkit::mat_inv(&delta_r).map_err(undefined(omega))?;
    let gamma_r = &(&(&delta_r_inv * &rho) * &delta) * &lambda_inv;
    let theta_d = if ctrl.is_linear() {
        CMatrix::zeros(n, n)
    } else {
        (&delta * &(&gamma_r - &lambda_inv)).scale_real(-2.0 * omega * omega / PI)
    };
    Ok(HosidfKernels {
        omega,
        lambda,
        delta,
        delta_r,
        gamma_r,
        theta_d,
    })
}

/// `G_n(omega)` of a single reset controller.
pub fn describing_function(ctrl: &ResetController, omega: f64, n: u32) -> Result<Complex64, HosidfError> {
    describing_function_perturbed(ctrl, omega, n, 1.0)
}

/// Same as [`describing_function`] with `Theta_D` multiplied by
/// `theta_scale`. Only meant for mutation checks of validation harnesses.
#[doc(hidden)]
pub fn describing_function_perturbed(
    ctrl: &ResetController,
    omega: f64,
    n: u32,
    theta_scale: f64,
) -> Result<Complex64, HosidfError> {
    if n == 0 {
        return Err(HosidfError::BadOrder);
    }
    check_omega(omega)?;
    if n > 1 && n % 2 == 0 {
        return Ok(ZERO);
    }
    if n > 1 && ctrl.is_linear() {
        return Ok(ZERO);
    }
    let k = kernels(ctrl, omega)?;
    let dim = ctrl.order();
    let id = CMatrix::identity(dim);
    let jtheta = k.theta_d.scale(J * theta_scale);
    let nw = n as f64 * omega;
    let resolvent = &id.scale(J * nw) - &ctrl.a_matrix();
    let b = ctrl.b_matrix();
    let rhs = if n == 1 { &(&id + &jtheta) * &b } else { &jtheta * &b };
    let x = numkit::solve(&resolvent, &rhs).map_err(undefined(omega))?;
    let g = (&ctrl.c_matrix() * &x).scalar();
    Ok(if n == 1 { g + ctrl.d() } else { g })
}

/// Harmonic `n` of a series chain driven by `sin(omega t)`.
///
/// Elements after the reset element act on harmonic `n` at `j n omega`.
/// Elements before it only scale and shift the sinusoid reaching the reset
/// element; since the reset response is homogeneous and time invariant, a
/// pre-filter `P` contributes `|P(jw)| exp(j n arg P(jw))` to harmonic `n`.
pub fn chain_harmonic(chain: &SeriesChain, omega: f64, n: u32) -> Result<Complex64, HosidfError> {
    chain_harmonic_perturbed(chain, omega, n, 1.0)
}

#[doc(hidden)]
pub fn chain_harmonic_perturbed(
    chain: &SeriesChain,
    omega: f64,
    n: u32,
    theta_scale: f64,
) -> Result<Complex64, HosidfError> {
    if n == 0 {
        return Err(HosidfError::BadOrder);
    }
    check_omega(omega)?;
    let Some(idx) = chain.reset_index() else {
        return Ok(if n == 1 {
            chain.base_linear_response(omega)?
        } else {
            ZERO
        });
    };
    let elements = chain.elements();
    let linear_at = |range: &[Element], w: f64| -> Complex64 {
        range.iter().fold(Complex64::new(1.0, 0.0), |acc, e| match e {
            Element::Linear(l) => acc * l.response(w),
            Element::Reset(_) => unreachable!("single reset element"),
        })
    };
    let pre = linear_at(&elements[..idx], omega);
    let Element::Reset(ctrl) = &elements[idx] else {
        unreachable!()
    };
    let g = describing_function_perturbed(ctrl, omega, n, theta_scale)?;
    if g == ZERO {
        return Ok(ZERO);
    }
    let post = linear_at(&elements[idx + 1..], n as f64 * omega);
    let pre_n = Complex64::from_polar(pre.norm(), n as f64 * pre.arg());
    Ok(pre_n * g * post)
}

/// First-harmonic sensitivity `1 / (1 + L1(j omega))`.
pub fn sensitivity_df(open_loop: &SeriesChain, omega: f64) -> Result<Complex64, HosidfError> {
    let l1 = chain_harmonic(open_loop, omega, 1)?;
    let distance = (l1 + 1.0).norm();
    if distance < MARGINAL_TOL {
        return Err(HosidfError::Marginal { omega, distance });
    }
    Ok(1.0 / (l1 + 1.0))
}

/// Anything whose harmonic responses can be evaluated.
pub trait HarmonicSource: Sync {
    fn harmonic(&self, omega: f64, n: u32) -> Result<Complex64, HosidfError>;
}

impl HarmonicSource for ResetController {
    fn harmonic(&self, omega: f64, n: u32) -> Result<Complex64, HosidfError> {
        describing_function(self, omega, n)
    }
}

impl HarmonicSource for SeriesChain {
    fn harmonic(&self, omega: f64, n: u32) -> Result<Complex64, HosidfError> {
        chain_harmonic(self, omega, n)
    }
}

/// `G_n` over a frequency grid. `values[i][k]` belongs to `omega[i]` and
/// `orders[k]`; failures are kept per point.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicResponse {
    pub omega: Vec<f64>,
    pub orders: Vec<u32>,
    pub values: Vec<Vec<Result<Complex64, HosidfError>>>,
}

impl HarmonicResponse {
    pub fn get(&self, i: usize, order: u32) -> Option<&Result<Complex64, HosidfError>> {
        let k = self.orders.iter().position(|&o| o == order)?;
        self.values.get(i).map(|row| &row[k])
    }

    pub fn error_count(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_err()).count()
    }
}

/// `points` log-spaced frequencies from `min` to `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>, HosidfError> {
    if !(min > 0.0 && max > min && max.is_finite()) {
        return Err(HosidfError::BadGrid(format!("need 0 < min < max, got [{min}, {max}]")));
    }
    if points < 2 {
        return Err(HosidfError::BadGrid(format!("need at least 2 points, got {points}")));
    }
    let (l0, l1) = (min.ln(), max.ln());
    let step = (l1 - l0) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| (l0 + step * i as f64).exp()).collect();
    grid[0] = min;
    grid[points - 1] = max;
    Ok(grid)
}

pub fn sweep(src: &dyn HarmonicSource, grid: &[f64], orders: &[u32]) -> Result<HarmonicResponse, HosidfError> {
    if grid.is_empty() {
        return Err(HosidfError::BadGrid("empty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(HosidfError::BadGrid("grid must be strictly ascending".into()));
    }
    if orders.is_empty() || orders.contains(&0) {
        return Err(HosidfError::BadOrder);
    }
    let values = grid
        .par_iter()
        .map(|&w| orders.iter().map(|&n| src.harmonic(w, n)).collect())
        .collect();
    Ok(HarmonicResponse {
        omega: grid.to_vec(),
        orders: orders.to_vec(),
        values,
    })
}
