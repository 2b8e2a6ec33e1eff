//! CgLp tuning: for every candidate reset gain find the highest corner
//! frequency that still delivers the requested phase lead at the bandwidth,
//! then rank the candidates by the low-frequency harmonic proxy sigma.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{self, ApproxError};
use crate::hosidf::{self, HosidfError};
use crate::reset_elements::{
    hz_to_rad, make_cglp, make_gfore, make_gsore, CgLpDesign, CgLpShape, ElementError, SeriesChain,
};

/// Default damping candidates of the second-order lead.
pub const DEFAULT_ZETAS: [f64; 10] = [0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5];
/// Range of `a = omega_c / omega_r` scanned for the phase target.
pub const A_RANGE: (f64, f64) = (0.1, 1000.0);
const SCAN_POINTS: usize = 301;
const BISECT_REL_TOL: f64 = 1e-4;
/// `a` used to probe the asymptotic lead of second-order designs.
pub const SORE_PROBE_A: f64 = 50.0;
/// Frequency (relative to `omega_r`) at which the numeric gain law
/// enforces unity first-harmonic gain.
pub const UNITY_GAIN_PROBE: f64 = 1e4;
const MIN_IMPROVEMENT: f64 = 0.01;
const REFINE_POINTS: usize = 5;
const FLATNESS_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TunerError {
    #[error("invalid tuning problem: {0}")]
    Problem(String),
    #[error("gamma = {gamma} cannot reach the target lead: {reason} (best lead {max_lead_deg:.3} deg)")]
    Infeasible {
        gamma: f64,
        max_lead_deg: f64,
        reason: String,
    },
    #[error("every candidate is infeasible: {}", summarize(.0))]
    AllInfeasible(Vec<InfeasibleCandidate>),
    #[error("chain response is zero or not finite at omega = {0} rad/s")]
    ZeroResponse(f64),
    #[error("gain-law root not bracketed for gamma = {0}")]
    NotBracketed(f64),
    #[error(transparent)]
    Hosidf(#[from] HosidfError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Element(#[from] ElementError),
}

fn summarize(list: &[InfeasibleCandidate]) -> String {
    list.iter()
        .map(|c| format!("gamma {} ({})", c.gamma, c.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

/// How the gain correction (alpha or kappa) is obtained for a gamma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainLaw {
    /// Closed-form `alpha_choice` / `kappa_choice`.
    Formula,
    /// Numeric value giving unity high-frequency gain of the exact first
    /// harmonic (with `beta = 1/(2 kappa)` for second order).
    UnityHighFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningProblem {
    pub order: u8,
    pub phi_target_deg: f64,
    pub omega_c_hz: f64,
    pub omega_f_hz: f64,
    pub gamma_candidates: Vec<f64>,
    #[serde(default)]
    pub refinement_rounds: u32,
    #[serde(default = "default_phase_tol")]
    pub phase_tol_deg: f64,
    /// Defaults to `Formula` for order 1 and `UnityHighFrequency` for order 2.
    #[serde(default)]
    pub gain_law: Option<GainLaw>,
    /// Fixed lead damping (order 2). When absent the flatness search picks it.
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub zeta_candidates: Option<Vec<f64>>,
}

fn default_phase_tol() -> f64 {
    0.1
}

impl TuningProblem {
    pub fn new(order: u8, phi_target_deg: f64, omega_c_hz: f64, omega_f_hz: f64, gammas: Vec<f64>) -> Self {
        Self {
            order,
            phi_target_deg,
            omega_c_hz,
            omega_f_hz,
            gamma_candidates: gammas,
            refinement_rounds: 0,
            phase_tol_deg: default_phase_tol(),
            gain_law: None,
            zeta: None,
            zeta_candidates: None,
        }
    }

    pub fn omega_c(&self) -> f64 {
        hz_to_rad(self.omega_c_hz)
    }

    pub fn omega_f(&self) -> f64 {
        hz_to_rad(self.omega_f_hz)
    }

    pub fn gain_law(&self) -> GainLaw {
        self.gain_law.unwrap_or(match self.order {
            1 => GainLaw::Formula,
            _ => GainLaw::UnityHighFrequency,
        })
    }

    pub fn zeta_candidates(&self) -> Vec<f64> {
        self.zeta_candidates.clone().unwrap_or_else(|| DEFAULT_ZETAS.to_vec())
    }

    pub fn validate(&self) -> Result<(), TunerError> {
        let bad = |m: String| Err(TunerError::Problem(m));
        if self.order != 1 && self.order != 2 {
            return bad(format!("order must be 1 or 2, got {}", self.order));
        }
        if !(self.phi_target_deg > 0.0 && self.phi_target_deg < 180.0) {
            return bad(format!("phi_target_deg must lie in (0, 180), got {}", self.phi_target_deg));
        }
        if !(self.omega_c_hz > 0.0 && self.omega_c_hz.is_finite()) {
            return bad(format!("omega_c_hz must be positive, got {}", self.omega_c_hz));
        }
        if !(self.omega_f_hz > self.omega_c_hz && self.omega_f_hz.is_finite()) {
            return bad(format!(
                "omega_f_hz ({}) must exceed omega_c_hz ({})",
                self.omega_f_hz, self.omega_c_hz
            ));
        }
        if self.gamma_candidates.is_empty() {
            return bad("gamma_candidates is empty".into());
        }
        if let Some(g) = self.gamma_candidates.iter().find(|g| !(**g > -1.0 && **g <= 1.0)) {
            return bad(format!("gamma candidate {g} outside (-1, 1]"));
        }
        if !(self.phase_tol_deg > 0.0) {
            return bad(format!("phase_tol_deg must be positive, got {}", self.phase_tol_deg));
        }
        if let Some(z) = self.zeta {
            if !(z > 0.0 && z.is_finite()) {
                return bad(format!("zeta must be positive, got {z}"));
            }
        }
        if let Some(zs) = &self.zeta_candidates {
            if zs.is_empty() || zs.iter().any(|z| !(*z > 0.0 && z.is_finite())) {
                return bad("zeta_candidates must be a nonempty list of positive values".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateResult {
    pub gamma: f64,
    /// rad/s
    pub omega_r: f64,
    /// `omega_c / omega_r`
    pub a: f64,
    /// alpha (order 1) or kappa (order 2).
    pub gain_corr: f64,
    pub beta: Option<f64>,
    pub zeta: Option<f64>,
    pub achieved_phase_deg: f64,
    pub sigma: f64,
    pub design: CgLpDesign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibleCandidate {
    pub gamma: f64,
    pub max_lead_deg: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningTable {
    /// Feasible candidates, ascending by sigma.
    pub candidates: Vec<CandidateResult>,
    pub infeasible: Vec<InfeasibleCandidate>,
    /// Reset gains evaluated in the latest round.
    pub gammas: Vec<f64>,
}

impl TuningTable {
    pub fn best(&self) -> Option<&CandidateResult> {
        self.candidates.first()
    }
}

/// Phase of the exact CgLp first harmonic at `omega_c` (rad/s), degrees.
pub fn phase_at(design: &CgLpDesign, omega_c: f64) -> Result<f64, TunerError> {
    let chain = make_cglp(design)?;
    Ok(hosidf::chain_harmonic(&chain, omega_c, 1)?.arg().to_degrees())
}

fn bisect(mut lo: f64, mut hi: f64, tol: f64, mut positive: impl FnMut(f64) -> Result<bool, TunerError>) -> Result<f64, TunerError> {
    // Invariant: positive(lo) == false, positive(hi) == true.
    while (hi - lo).abs() > tol * lo.abs().max(hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if positive(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Unity high-frequency gain value of alpha (order 1) or kappa (order 2,
/// with `beta = 1/(2 kappa)`).
pub fn unity_gain_correction(order: u8, gamma: f64) -> Result<f64, TunerError> {
    approx::factor_f(gamma)?;
    let w = UNITY_GAIN_PROBE;
    let s = crate::Complex64::new(0.0, w);
    let excess = |c: f64| -> Result<f64, TunerError> {
        let g = match order {
            1 => hosidf::describing_function(&make_gfore(1.0, gamma, c)?, w, 1)? * (s + 1.0),
            _ => {
                let beta = approx::beta_choice(c)?;
                hosidf::describing_function(&make_gsore(1.0, gamma, c, beta)?, w, 1)? * (s * s + 2.0 * s + 1.0)
            }
        };
        Ok(g.norm() - 1.0)
    };
    let (lo, hi) = (0.05, 5.0);
    if excess(lo)? >= 0.0 || excess(hi)? <= 0.0 {
        return Err(TunerError::NotBracketed(gamma));
    }
    bisect(lo, hi, 1e-12, |c| Ok(excess(c)? > 0.0))
}

fn gain_correction(problem: &TuningProblem, gamma: f64) -> Result<f64, TunerError> {
    match (problem.gain_law(), problem.order) {
        (GainLaw::Formula, 1) => Ok(approx::alpha_choice(gamma)?),
        (GainLaw::Formula, _) => Ok(approx::kappa_choice(gamma)?),
        (GainLaw::UnityHighFrequency, order) => unity_gain_correction(order, gamma),
    }
}

fn design_for(problem: &TuningProblem, gamma: f64, corr: f64, zeta: f64, omega_r: f64) -> CgLpDesign {
    match problem.order {
        1 => CgLpDesign::first(gamma, omega_r, problem.omega_f(), corr),
        _ => CgLpDesign::second(gamma, omega_r, problem.omega_f(), corr, 1.0 / (2.0 * corr), zeta),
    }
}

fn infeasible(gamma: f64, max_lead_deg: f64, reason: impl Into<String>) -> TunerError {
    TunerError::Infeasible {
        gamma,
        max_lead_deg,
        reason: reason.into(),
    }
}

/// Largest `omega_r` (rad/s) at which the CgLp built from `template`
/// (only its `omega_r` is replaced) reaches `phi_deg` at `omega_c`.
pub fn find_omega_r_for(template: &CgLpDesign, phi_deg: f64, omega_c: f64) -> Result<f64, TunerError> {
    let gamma = template.gamma;
    let a_min = A_RANGE.0.max(2.0 * omega_c / template.omega_f);
    if a_min >= A_RANGE.1 {
        return Err(TunerError::Problem("omega_f too close to omega_c".into()));
    }
    let phase = |a: f64| phase_at(&template.with_omega_r(omega_c / a), omega_c);
    match template.shape {
        CgLpShape::First { .. } => {
            let gmax = approx::gamma_max(phi_deg).map_err(|_| {
                infeasible(gamma, approx::factor_f(gamma).map(f64::atan).unwrap_or(0.0).to_degrees(), "target exceeds the first-order lead limit")
            })?;
            if gamma > gmax {
                let lead = approx::factor_f(gamma)?.atan().to_degrees();
                return Err(infeasible(gamma, lead, format!("gamma exceeds gamma_max = {gmax:.4}")));
            }
        }
        CgLpShape::Second { .. } => {
            let lead = phase(SORE_PROBE_A)?;
            if lead < phi_deg {
                return Err(infeasible(gamma, lead, format!("probe lead at a = {SORE_PROBE_A} below target")));
            }
        }
    }
    let (l0, l1) = (a_min.ln(), A_RANGE.1.ln());
    let mut prev: Option<f64> = None;
    let mut best = f64::NEG_INFINITY;
    for i in 0..SCAN_POINTS {
        let a = (l0 + (l1 - l0) * i as f64 / (SCAN_POINTS - 1) as f64).exp();
        let p = phase(a)?;
        best = best.max(p);
        if p >= phi_deg {
            let Some(a_prev) = prev else {
                return Ok(omega_c / a);
            };
            // Bisect on omega_r between the bracketing scan points.
            let w = bisect(omega_c / a, omega_c / a_prev, BISECT_REL_TOL, |wr| {
                Ok(phase_at(&template.with_omega_r(wr), omega_c)? < phi_deg)
            })?;
            return Ok(w);
        }
        prev = Some(a);
    }
    Err(infeasible(gamma, best, "phase target not reached over the scanned omega_r range"))
}

/// Largest `omega_r` (rad/s) for `gamma` under `problem`.
pub fn find_omega_r(gamma: f64, problem: &TuningProblem) -> Result<f64, TunerError> {
    problem.validate()?;
    let corr = gain_correction(problem, gamma)?;
    let template = design_for(problem, gamma, corr, problem.zeta.unwrap_or(1.0), problem.omega_c());
    find_omega_r_for(&template, problem.phi_target_deg, problem.omega_c())
}

fn tune_candidate(problem: &TuningProblem, gamma: f64) -> Result<CandidateResult, TunerError> {
    let wc = problem.omega_c();
    let corr = gain_correction(problem, gamma)?;
    let mut zeta = problem.zeta.unwrap_or(1.0);
    let mut design = design_for(problem, gamma, corr, zeta, wc);
    let mut wr = find_omega_r_for(&design, problem.phi_target_deg, wc)?;
    design = design.with_omega_r(wr);
    if problem.order == 2 && problem.zeta.is_none() {
        let picked = zeta_flatness_search(&design, &problem.zeta_candidates())?;
        if picked != zeta {
            zeta = picked;
            design = design_for(problem, gamma, corr, zeta, wc);
            wr = find_omega_r_for(&design, problem.phi_target_deg, wc)?;
            design = design.with_omega_r(wr);
        }
    }
    let achieved = phase_at(&design, wc)?;
    if (achieved - problem.phi_target_deg).abs() > problem.phase_tol_deg {
        return Err(infeasible(
            gamma,
            achieved,
            format!("achieved {achieved:.4} deg outside tolerance {}", problem.phase_tol_deg),
        ));
    }
    let (beta, zeta) = match design.shape {
        CgLpShape::First { .. } => (None, None),
        CgLpShape::Second { beta, zeta, .. } => (Some(beta), Some(zeta)),
    };
    Ok(CandidateResult {
        gamma,
        omega_r: wr,
        a: wc / wr,
        gain_corr: corr,
        beta,
        zeta,
        achieved_phase_deg: achieved,
        sigma: approx::sigma(&design)?,
        design,
    })
}

fn by_sigma(a: &CandidateResult, b: &CandidateResult) -> Ordering {
    a.sigma.total_cmp(&b.sigma).then(a.gamma.total_cmp(&b.gamma))
}

fn evaluate(problem: &TuningProblem, gammas: &[f64]) -> Result<(Vec<CandidateResult>, Vec<InfeasibleCandidate>), TunerError> {
    let results: Vec<_> = gammas.par_iter().map(|&g| (g, tune_candidate(problem, g))).collect();
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (gamma, r) in results {
        match r {
            Ok(c) => ok.push(c),
            Err(TunerError::Infeasible {
                gamma,
                max_lead_deg,
                reason,
            }) => bad.push(InfeasibleCandidate {
                gamma,
                max_lead_deg,
                reason,
            }),
            Err(TunerError::NotBracketed(_)) => bad.push(InfeasibleCandidate {
                gamma,
                max_lead_deg: f64::NAN,
                reason: "gain correction not found".into(),
            }),
            Err(e) => return Err(e),
        }
    }
    ok.sort_by(by_sigma);
    Ok((ok, bad))
}

/// Tune every candidate gamma and sort the feasible ones by sigma.
pub fn enumerate(problem: &TuningProblem) -> Result<TuningTable, TunerError> {
    problem.validate()?;
    let (candidates, infeasible) = evaluate(problem, &problem.gamma_candidates)?;
    if candidates.is_empty() {
        return Err(TunerError::AllInfeasible(infeasible));
    }
    Ok(TuningTable {
        candidates,
        infeasible,
        gammas: problem.gamma_candidates.clone(),
    })
}

/// Grid of `REFINE_POINTS` reset gains around `center`, clipped to the
/// admissible range.
pub fn refinement_grid(center: f64, previous: &[f64], upper: f64) -> Vec<f64> {
    let mut sorted: Vec<f64> = previous.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let spacing = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let delta = if spacing.is_finite() { spacing / 2.0 } else { 0.05 };
    let lo = (center - delta).max(-1.0 + 1e-6);
    let hi = (center + delta).min(upper);
    if hi <= lo {
        return vec![center.min(upper)];
    }
    (0..REFINE_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (REFINE_POINTS - 1) as f64)
        .collect()
}

/// Iterated local refinement of the best reset gain. Returns the merged
/// table of every feasible candidate evaluated so far.
pub fn refine(problem: &TuningProblem, previous: &TuningTable) -> Result<TuningTable, TunerError> {
    problem.validate()?;
    let mut table = previous.clone();
    let upper = match problem.order {
        1 => approx::gamma_max(problem.phi_target_deg).unwrap_or(1.0).min(1.0),
        _ => 1.0,
    };
    for _ in 0..problem.refinement_rounds {
        let Some(best) = table.best().cloned() else {
            break;
        };
        let grid: Vec<f64> = refinement_grid(best.gamma, &table.gammas, upper)
            .into_iter()
            .filter(|g| !table.candidates.iter().any(|c| c.gamma == *g))
            .collect();
        if grid.is_empty() {
            break;
        }
        let (found, rejected) = evaluate(problem, &grid)?;
        table.candidates.extend(found);
        table.candidates.sort_by(by_sigma);
        table.infeasible.extend(rejected);
        table.gammas = grid;
        let new_best = table.best().map(|c| c.sigma).unwrap_or(best.sigma);
        if (best.sigma - new_best) < MIN_IMPROVEMENT * best.sigma {
            break;
        }
    }
    Ok(table)
}

/// Worst and mean-square first-harmonic gain deviation (dB) of an
/// order-2 CgLp over `[omega_r/10, omega_f/2]`.
pub fn flatness_objective(design: &CgLpDesign) -> Result<(f64, f64), TunerError> {
    let chain = make_cglp(design)?;
    let grid = hosidf::log_grid(design.omega_r / 10.0, design.omega_f / 2.0, FLATNESS_POINTS)?;
    let mut worst: f64 = 0.0;
    let mut sq = 0.0;
    for &w in &grid {
        let db = 20.0 * hosidf::chain_harmonic(&chain, w, 1)?.norm().log10();
        worst = worst.max(db.abs());
        sq += db * db;
    }
    Ok((worst, sq / grid.len() as f64))
}

/// Lead damping from `candidates` giving the flattest first-harmonic gain.
/// Ties on the worst deviation are broken by the mean-square deviation,
/// then by candidate order.
pub fn zeta_flatness_search(design: &CgLpDesign, candidates: &[f64]) -> Result<f64, TunerError> {
    let CgLpShape::Second { kappa, beta, .. } = design.shape else {
        return Err(TunerError::Problem("zeta search needs a second-order design".into()));
    };
    if candidates.is_empty() {
        return Err(TunerError::Problem("empty zeta candidate list".into()));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for &z in candidates {
        let d = CgLpDesign::second(design.gamma, design.omega_r, design.omega_f, kappa, beta, z);
        let (worst, ms) = flatness_objective(&d)?;
        let better = match best {
            None => true,
            Some((_, bw, bms)) => {
                let tol = 1e-9 * bw.max(1e-12);
                worst < bw - tol || ((worst - bw).abs() <= tol && ms < bms)
            }
        };
        if better {
            best = Some((z, worst, ms));
        }
    }
    Ok(best.map(|b| b.0).expect("nonempty candidates"))
}

/// Gain `kp` such that `|L1(j omega_c)| = 1` for `chain` scaled by `kp`.
pub fn normalize_loop_gain(chain: &SeriesChain, omega_c: f64) -> Result<f64, TunerError> {
    let r = hosidf::chain_harmonic(chain, omega_c, 1)?.norm();
    if !(r > 0.0) || !r.is_finite() {
        return Err(TunerError::ZeroResponse(omega_c));
    }
    Ok(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_order_problem() -> TuningProblem {
        TuningProblem::new(1, 40.0, 100.0, 1e5, vec![0.17, 0.0, -0.1, -0.2, -0.3])
    }

    #[test]
    fn linear_cglp_has_no_lead() {
        let d = CgLpDesign::first(1.0, 100.0, 1e7, 1.0);
        assert!(phase_at(&d, 1000.0).unwrap().abs() < 0.1);
    }

    #[test]
    fn gamma_above_limit_is_infeasible() {
        match find_omega_r(0.3, &first_order_problem()) {
            Err(TunerError::Infeasible { gamma, .. }) => assert_eq!(gamma, 0.3),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unity_gamma_only_is_all_infeasible() {
        let p = TuningProblem::new(1, 40.0, 100.0, 1e5, vec![1.0]);
        assert!(matches!(enumerate(&p), Err(TunerError::AllInfeasible(_))));
    }

    #[test]
    fn empty_candidates_rejected() {
        let p = TuningProblem::new(1, 40.0, 100.0, 1e5, vec![]);
        assert!(matches!(enumerate(&p), Err(TunerError::Problem(_))));
    }

    #[test]
    fn found_omega_r_hits_target() {
        let p = first_order_problem();
        let wr = find_omega_r(0.0, &p).unwrap();
        let d = CgLpDesign::first(0.0, wr, p.omega_f(), approx::alpha_choice(0.0).unwrap());
        assert!((phase_at(&d, p.omega_c()).unwrap() - 40.0).abs() < 0.01);
        // Slightly higher omega_r must fall short of the target.
        assert!(phase_at(&d.with_omega_r(wr * 1.01), p.omega_c()).unwrap() < 40.0);
    }

    #[test]
    fn unity_gain_formula_close_for_first_order() {
        for g in [0.0, -0.2, 0.3] {
            let numeric = unity_gain_correction(1, g).unwrap();
            let formula = approx::alpha_choice(g).unwrap();
            assert!((numeric - formula).abs() < 1e-3, "{g}: {numeric} vs {formula}");
        }
    }

    #[test]
    fn refinement_grid_bounds() {
        let g = refinement_grid(-0.2, &[0.17, 0.0, -0.1, -0.2, -0.3], 0.2055);
        assert_eq!(g.len(), REFINE_POINTS);
        assert!(g.iter().all(|v| (-0.3..=-0.1).contains(v)));
        let clipped = refinement_grid(0.2, &[0.0, 0.2], 0.2055);
        assert!(clipped.iter().all(|v| *v <= 0.2055));
    }

    #[test]
    fn zero_rounds_returns_previous() {
        let p = first_order_problem();
        let t = enumerate(&p).unwrap();
        assert_eq!(refine(&p, &t).unwrap(), t);
    }

    #[test]
    fn single_zeta_is_returned() {
        let d = CgLpDesign::second(0.1, 300.0, 6e5, 0.95, 0.5 / 0.95, 1.0);
        assert_eq!(zeta_flatness_search(&d, &[1.3]).unwrap(), 1.3);
        assert!(zeta_flatness_search(&d, &[]).is_err());
    }
}
