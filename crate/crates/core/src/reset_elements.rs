//! Reset controllers, linear transfer functions and their series composition.
//!
//! All frequencies are in rad/s. Conversion from Hz happens at the
//! configuration boundary (see [`hz_to_rad`]).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{self, CMatrix, NumError};

pub fn hz_to_rad(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

pub fn rad_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElementError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("inconsistent state-space dimensions: {0}")]
    Shape(String),
    #[error("chain contains {0} reset elements; at most one is supported")]
    TooManyResets(usize),
    #[error("empty chain")]
    EmptyChain,
    #[error("improper transfer function (numerator degree {num} > denominator degree {den})")]
    Improper { num: usize, den: usize },
    #[error(transparent)]
    Numeric(#[from] NumError),
}

fn check(name: &'static str, value: f64, ok: bool, reason: &'static str) -> Result<(), ElementError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ElementError::Parameter { name, value, reason })
    }
}

fn check_gamma(gamma: f64) -> Result<(), ElementError> {
    check("gamma", gamma, (-1.0..=1.0).contains(&gamma), "must lie in [-1, 1]")
}

/// SISO reset controller: linear flow `x' = A x + B e`, jump `x+ = A_rho x`
/// whenever `e` crosses zero, output `u = C x + D e`.
///
/// `A_rho` is diagonal and stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetController {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: f64,
    reset: Vec<f64>,
}

impl ResetController {
    /// `a` is row-major n×n; `b` and `c` have length n; `reset` holds the
    /// diagonal of `A_rho`.
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>, d: f64, reset: Vec<f64>) -> Result<Self, ElementError> {
        let n = b.len();
        if n == 0 {
            return Err(ElementError::Shape("controller needs at least one state".into()));
        }
        if a.len() != n * n || c.len() != n || reset.len() != n {
            return Err(ElementError::Shape(format!(
                "A has {} entries, B {}, C {}, A_rho {}",
                a.len(),
                b.len(),
                c.len(),
                reset.len()
            )));
        }
        if a.iter().chain(&b).chain(&c).chain(std::iter::once(&d)).any(|v| !v.is_finite()) {
            return Err(ElementError::Numeric(NumError::NonFinite));
        }
        for &g in &reset {
            check_gamma(g)?;
        }
        Ok(Self { n, a, b, c, d, reset })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Diagonal of the reset matrix.
    pub fn reset_gains(&self) -> &[f64] {
        &self.reset
    }

    /// True when `A_rho = I`, i.e. the controller never actually resets.
    pub fn is_linear(&self) -> bool {
        self.reset.iter().all(|&g| g == 1.0)
    }

    pub fn a_matrix(&self) -> CMatrix {
        CMatrix::from_real(self.n, self.n, &self.a)
    }

    pub fn b_matrix(&self) -> CMatrix {
        CMatrix::from_real(self.n, 1, &self.b)
    }

    pub fn c_matrix(&self) -> CMatrix {
        CMatrix::from_real(1, self.n, &self.c)
    }

    pub fn reset_matrix(&self) -> CMatrix {
        CMatrix::diag_real(&self.reset)
    }

    /// Same controller with every reset gain replaced by `gamma`.
    pub fn with_reset_gain(&self, gamma: f64) -> Result<Self, ElementError> {
        check_gamma(gamma)?;
        let mut out = self.clone();
        out.reset.iter_mut().for_each(|g| *g = gamma);
        Ok(out)
    }

    /// Base-linear transfer `C (sI - A)^-1 B + D`.
    pub fn base_linear_response(&self, s: Complex64) -> Result<Complex64, ElementError> {
        let m = &CMatrix::identity(self.n).scale(s) - &self.a_matrix();
        let x = numkit::solve(&m, &self.b_matrix())?;
        Ok((&self.c_matrix() * &x).scalar() + self.d)
    }
}

/// Generalized first-order reset element with corner `omega_r`.
pub fn make_gfore(omega_r: f64, gamma: f64, alpha: f64) -> Result<ResetController, ElementError> {
    check("omega_r", omega_r, omega_r > 0.0, "must be positive")?;
    check("alpha", alpha, alpha > 0.0, "must be positive")?;
    check_gamma(gamma)?;
    let p = alpha * omega_r;
    ResetController::new(vec![-p], vec![p], vec![1.0], 0.0, vec![gamma])
}

/// Generalized second-order reset element.
pub fn make_gsore(omega_r: f64, gamma: f64, kappa: f64, beta: f64) -> Result<ResetController, ElementError> {
    check("omega_r", omega_r, omega_r > 0.0, "must be positive")?;
    check("kappa", kappa, kappa > 0.0, "must be positive")?;
    check("beta", beta, beta > 0.0, "must be positive")?;
    check_gamma(gamma)?;
    let k2 = (kappa * omega_r).powi(2);
    ResetController::new(
        vec![0.0, 1.0, -k2, -2.0 * beta * kappa * kappa * omega_r],
        vec![0.0, k2],
        vec![1.0, 0.0],
        0.0,
        vec![gamma, gamma],
    )
}

/// Clegg integrator: an integrator whose state is zeroed at every zero crossing.
pub fn make_clegg() -> ResetController {
    ResetController::new(vec![0.0], vec![1.0], vec![1.0], 0.0, vec![0.0]).expect("constant parameters")
}

/// Rational transfer function `num(s) / den(s)`, coefficients in descending
/// powers of `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearElement {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl LinearElement {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, ElementError> {
        let num = trim_leading_zeros(num);
        let den = trim_leading_zeros(den);
        if den.is_empty() {
            return Err(ElementError::Parameter {
                name: "den",
                value: 0.0,
                reason: "denominator must be nonzero",
            });
        }
        if num.iter().chain(&den).any(|v| !v.is_finite()) {
            return Err(ElementError::Numeric(NumError::NonFinite));
        }
        let num = if num.is_empty() { vec![0.0] } else { num };
        if num.len() > den.len() {
            return Err(ElementError::Improper {
                num: num.len() - 1,
                den: den.len() - 1,
            });
        }
        Ok(Self { num, den })
    }

    pub fn gain(k: f64) -> Self {
        Self {
            num: vec![k],
            den: vec![1.0],
        }
    }

    pub fn numerator(&self) -> &[f64] {
        &self.num
    }

    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    pub fn degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.len() < self.den.len() || self.num.iter().all(|&v| v == 0.0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        horner(&self.num, s) / horner(&self.den, s)
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            num: self.num.iter().map(|v| v * k).collect(),
            den: self.den.clone(),
        }
    }

    /// State-space realization `(A, B, C, D)` in a frequency-scaled
    /// controllable canonical form. Row-major `A`.
    ///
    /// With `z_k = sigma^(k-1) x_k` the companion entries become
    /// `a_k / sigma^(k-1)`, where sigma is the characteristic frequency of
    /// the denominator; this keeps entries commensurate for stiff elements.
    pub fn realize(&self) -> StateSpace {
        let lead = self.den[0];
        let den: Vec<f64> = self.den.iter().map(|v| v / lead).collect();
        let n = den.len() - 1;
        let mut num = vec![0.0; n + 1 - self.num.len()];
        num.extend(self.num.iter().map(|v| v / lead));
        let d = num[0];
        if n == 0 {
            return StateSpace {
                n: 0,
                a: vec![],
                b: vec![],
                c: vec![],
                d,
            };
        }
        let sigma = (1..=n)
            .map(|k| den[k].abs().powf(1.0 / k as f64))
            .fold(0.0, f64::max);
        let sigma = if sigma > 0.0 { sigma } else { 1.0 };
        let mut a = vec![0.0; n * n];
        for k in 0..n {
            a[k] = -den[k + 1] / sigma.powi(k as i32);
        }
        for k in 1..n {
            a[k * n + (k - 1)] = sigma;
        }
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let c = (0..n)
            .map(|k| (num[k + 1] - d * den[k + 1]) / sigma.powi(k as i32))
            .collect();
        StateSpace { n, a, b, c, d }
    }
}

fn trim_leading_zeros(mut v: Vec<f64>) -> Vec<f64> {
    let first = v.iter().position(|&x| x != 0.0).unwrap_or(v.len());
    v.drain(..first);
    v
}

fn horner(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Real SISO state-space block (row-major `A`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn eval(&self, s: Complex64) -> Complex64 {
        if self.n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let m = &CMatrix::identity(self.n).scale(s) - &CMatrix::from_real(self.n, self.n, &self.a);
        let x = numkit::solve(&m, &CMatrix::from_real(self.n, 1, &self.b)).expect("s is not a pole");
        (&CMatrix::from_real(1, self.n, &self.c) * &x).scalar() + self.d
    }
}

/// Linear lead filter of order 1 or 2 with zero(s) at `omega_r` and
/// pole(s) at `omega_f`. The second-order denominator has unit damping.
pub fn make_lead(order: u8, omega_r: f64, omega_f: f64, zeta: f64) -> Result<LinearElement, ElementError> {
    check("omega_r", omega_r, omega_r > 0.0, "must be positive")?;
    check("omega_f", omega_f, omega_f >= omega_r, "must be at least omega_r")?;
    match order {
        1 => LinearElement::new(vec![1.0 / omega_r, 1.0], vec![1.0 / omega_f, 1.0]),
        2 => {
            check("zeta", zeta, zeta > 0.0, "must be positive")?;
            LinearElement::new(
                vec![1.0 / (omega_r * omega_r), 2.0 * zeta / omega_r, 1.0],
                vec![1.0 / (omega_f * omega_f), 2.0 / omega_f, 1.0],
            )
        }
        _ => Err(ElementError::Parameter {
            name: "order",
            value: order as f64,
            reason: "must be 1 or 2",
        }),
    }
}

/// PI with first-order low-pass: `kp (1 + omega_i/s) / (s/omega_f + 1)`.
pub fn make_pid(kp: f64, omega_i: f64, omega_f: f64) -> Result<LinearElement, ElementError> {
    check("kp", kp, kp > 0.0, "must be positive")?;
    check("omega_i", omega_i, omega_i > 0.0, "must be positive")?;
    check("omega_f", omega_f, omega_f > 0.0, "must be positive")?;
    LinearElement::new(vec![kp, kp * omega_i], vec![1.0 / omega_f, 1.0, 0.0])
}

/// Reset gain correction of a CgLp design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "order", rename_all = "snake_case")]
pub enum CgLpShape {
    /// GFORE + first-order lead.
    First { alpha: f64 },
    /// GSORE + second-order lead.
    Second { kappa: f64, beta: f64, zeta: f64 },
}

/// One CgLp configuration. Frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgLpDesign {
    pub gamma: f64,
    pub omega_r: f64,
    pub omega_f: f64,
    pub shape: CgLpShape,
}

impl CgLpDesign {
    pub fn first(gamma: f64, omega_r: f64, omega_f: f64, alpha: f64) -> Self {
        Self {
            gamma,
            omega_r,
            omega_f,
            shape: CgLpShape::First { alpha },
        }
    }

    pub fn second(gamma: f64, omega_r: f64, omega_f: f64, kappa: f64, beta: f64, zeta: f64) -> Self {
        Self {
            gamma,
            omega_r,
            omega_f,
            shape: CgLpShape::Second { kappa, beta, zeta },
        }
    }

    pub fn order(&self) -> u8 {
        match self.shape {
            CgLpShape::First { .. } => 1,
            CgLpShape::Second { .. } => 2,
        }
    }

    /// alpha for first order, kappa for second.
    pub fn gain_correction(&self) -> f64 {
        match self.shape {
            CgLpShape::First { alpha } => alpha,
            CgLpShape::Second { kappa, .. } => kappa,
        }
    }

    pub fn with_omega_r(self, omega_r: f64) -> Self {
        Self { omega_r, ..self }
    }

    pub fn validate(&self) -> Result<(), ElementError> {
        check_gamma(self.gamma)?;
        check("omega_r", self.omega_r, self.omega_r > 0.0, "must be positive")?;
        check("omega_f", self.omega_f, self.omega_f > self.omega_r, "must exceed omega_r")?;
        match self.shape {
            CgLpShape::First { alpha } => check("alpha", alpha, alpha > 0.0, "must be positive"),
            CgLpShape::Second { kappa, beta, zeta } => {
                check("kappa", kappa, kappa > 0.0, "must be positive")?;
                check("beta", beta, beta > 0.0, "must be positive")?;
                check("zeta", zeta, zeta > 0.0, "must be positive")
            }
        }
    }

    pub fn reset_element(&self) -> Result<ResetController, ElementError> {
        match self.shape {
            CgLpShape::First { alpha } => make_gfore(self.omega_r, self.gamma, alpha),
            CgLpShape::Second { kappa, beta, .. } => make_gsore(self.omega_r, self.gamma, kappa, beta),
        }
    }

    pub fn lead(&self) -> Result<LinearElement, ElementError> {
        match self.shape {
            CgLpShape::First { .. } => make_lead(1, self.omega_r, self.omega_f, 1.0),
            CgLpShape::Second { zeta, .. } => make_lead(2, self.omega_r, self.omega_f, zeta),
        }
    }
}

/// Series CgLp: reset element followed by the matching lead filter.
pub fn make_cglp(design: &CgLpDesign) -> Result<SeriesChain, ElementError> {
    design.validate()?;
    SeriesChain::new(vec![
        Element::Reset(design.reset_element()?),
        Element::Linear(design.lead()?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Element {
    Reset(ResetController),
    Linear(LinearElement),
}

/// Ordered series connection with at most one reset element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesChain {
    elements: Vec<Element>,
}

impl SeriesChain {
    pub fn new(elements: Vec<Element>) -> Result<Self, ElementError> {
        if elements.is_empty() {
            return Err(ElementError::EmptyChain);
        }
        let resets = elements.iter().filter(|e| matches!(e, Element::Reset(_))).count();
        if resets > 1 {
            return Err(ElementError::TooManyResets(resets));
        }
        Ok(Self { elements })
    }

    pub fn single(ctrl: ResetController) -> Self {
        Self {
            elements: vec![Element::Reset(ctrl)],
        }
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Index of the reset element, if any.
    pub fn reset_index(&self) -> Option<usize> {
        self.elements.iter().position(|e| matches!(e, Element::Reset(_)))
    }

    pub fn reset_element(&self) -> Option<&ResetController> {
        self.elements.iter().find_map(|e| match e {
            Element::Reset(r) => Some(r),
            Element::Linear(_) => None,
        })
    }

    /// Append elements, keeping the one-reset invariant.
    pub fn then(&self, more: impl IntoIterator<Item = Element>) -> Result<Self, ElementError> {
        let mut elements = self.elements.clone();
        elements.extend(more);
        Self::new(elements)
    }

    /// Same chain with a linear gain stage appended.
    pub fn with_gain(&self, k: f64) -> Self {
        let mut elements = self.elements.clone();
        elements.push(Element::Linear(LinearElement::gain(k)));
        Self { elements }
    }

    /// Frequency response with the reset element replaced by its base-linear
    /// counterpart.
    pub fn base_linear_response(&self, omega: f64) -> Result<Complex64, ElementError> {
        let s = Complex64::new(0.0, omega);
        self.elements.iter().try_fold(Complex64::new(1.0, 0.0), |acc, e| {
            Ok(acc
                * match e {
                    Element::Reset(r) => r.base_linear_response(s)?,
                    Element::Linear(l) => l.eval(s),
                })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gfore_matrices() {
        let c = make_gfore(hz_to_rad(100.0), 0.0, 0.6177).unwrap();
        assert!((c.a()[0] + 388.1).abs() < 0.05);
        assert_eq!(c.b()[0], -c.a()[0]);
        assert_eq!(c.c(), &[1.0]);
        assert_eq!(c.d(), 0.0);
        assert_eq!(c.reset_gains(), &[0.0]);
    }

    #[test]
    fn gfore_rejects_bad_gamma() {
        assert!(matches!(
            make_gfore(1.0, 1.5, 1.0),
            Err(ElementError::Parameter { name: "gamma", .. })
        ));
        assert!(make_gfore(-1.0, 0.0, 1.0).is_err());
        assert!(make_gfore(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn gsore_matrices() {
        let (wr, g, k, b) = (3.0, 0.2, 0.8, 0.7);
        let c = make_gsore(wr, g, k, b).unwrap();
        assert_eq!(c.a(), &[0.0, 1.0, -(k * wr) * (k * wr), -2.0 * b * k * k * wr]);
        assert_eq!(c.b(), &[0.0, (k * wr) * (k * wr)]);
        assert_eq!(c.c(), &[1.0, 0.0]);
        assert_eq!(c.reset_gains(), &[g, g]);
        assert!(make_gsore(1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn gsore_linear_case_is_second_order_lowpass() {
        let c = make_gsore(1.0, 1.0, 1.0, 0.5).unwrap();
        for w in [0.1, 1.0, 7.0] {
            let s = Complex64::new(0.0, w);
            let expected = 1.0 / (s * s + s + 1.0);
            assert!((c.base_linear_response(s).unwrap() - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn lead_limits() {
        let l = make_lead(1, 10.0, 1e6, 1.0).unwrap();
        let low = l.response(1e-4);
        assert!((low.norm() - 1.0).abs() < 1e-8 && low.arg().abs() < 1e-4);
        let flat = make_lead(1, 10.0, 10.0, 1.0).unwrap();
        for w in [0.1, 10.0, 1e4] {
            assert!((flat.response(w) - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn second_order_lead_direct_evaluation() {
        let (wr, wf, z) = (20.0, 2000.0, 0.8);
        let l = make_lead(2, wr, wf, z).unwrap();
        let w: f64 = (wr * wf).sqrt();
        let s = Complex64::new(0.0, w);
        let expected = ((s / wr) * (s / wr) + 2.0 * z * s / wr + 1.0) / ((s / wf) * (s / wf) + 2.0 * s / wf + 1.0);
        assert!((l.eval(s) - expected).norm() < 1e-12 * expected.norm());
        assert!(make_lead(2, 20.0, 10.0, 1.0).is_err());
        assert!(make_lead(3, 1.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn pid_values() {
        let (kp, wi, wf) = (3.0, 10.0, 500.0);
        let p = make_pid(kp, wi, wf).unwrap();
        let at_wi = p.response(wi);
        let expected = kp * 2f64.sqrt() / Complex64::new(1.0, wi / wf).norm();
        assert!((at_wi.norm() - expected).abs() < 1e-12);
        // Proper: s * PID / (kp * wf) stays bounded.
        let big = 1e9;
        let v = p.response(big) * Complex64::new(0.0, big) / (kp * wf);
        assert!(v.norm() < 2.0);
        let wide = make_pid(kp, 1.0, 1e4).unwrap();
        assert!(wide.response(100.0).arg().to_degrees().abs() < 1.5);
    }

    #[test]
    fn improper_rejected() {
        assert!(matches!(
            LinearElement::new(vec![1.0, 0.0, 0.0], vec![1.0, 1.0]),
            Err(ElementError::Improper { .. })
        ));
    }

    #[test]
    fn realization_matches_transfer_function() {
        let elems = [
            make_lead(2, 50.0, 6e5, 1.0).unwrap(),
            make_pid(40.0, 62.8, 3141.6).unwrap(),
            LinearElement::new(vec![9602.5], vec![1.0, 4.2676, 7627.3]).unwrap(),
            make_lead(1, 3.0, 300.0, 1.0).unwrap(),
        ];
        for e in &elems {
            let ss = e.realize();
            for w in [0.3, 10.0, 400.0, 1e5] {
                let s = Complex64::new(0.0, w);
                let (a, b) = (e.eval(s), ss.eval(s));
                // Biproper leads cancel against a large feedthrough term.
                let scale = a.norm() + ss.d.abs();
                assert!((a - b).norm() <= 1e-14 * scale.max(1.0), "{e:?} at {w}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn chain_rejects_two_resets() {
        let r = Element::Reset(make_clegg());
        assert_eq!(
            SeriesChain::new(vec![r.clone(), r]).unwrap_err(),
            ElementError::TooManyResets(2)
        );
        assert_eq!(SeriesChain::new(vec![]).unwrap_err(), ElementError::EmptyChain);
    }

    #[test]
    fn cglp_chain_layout() {
        let d = CgLpDesign::first(0.0, 100.0, 1e5, 0.6177);
        let chain = make_cglp(&d).unwrap();
        assert_eq!(chain.reset_index(), Some(0));
        assert!(matches!(chain.elements()[1], Element::Linear(_)));
        let bad = CgLpDesign::first(0.0, 100.0, 50.0, 0.6);
        assert!(make_cglp(&bad).is_err());
    }
}
