//! Built-in cross-check of analytic harmonics against the simulator.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use resetdf::approx;
use resetdf::hosidf::{self, chain_harmonic_perturbed};
use resetdf::reset_elements::{make_cglp, make_clegg, make_gfore, make_gsore, CgLpDesign, SeriesChain};
use resetdf::simulator::{extract_harmonics, simulate_chain_open_loop, SimConfig, MIN_STEPS_PER_PERIOD};
use serde::Serialize;

/// Odd orders compared against the simulator.
pub const ODD_ORDERS: [u32; 3] = [1, 3, 5];
/// Even orders that must vanish.
pub const EVEN_ORDERS: [u32; 2] = [2, 4];
pub const POINTS: usize = 12;
pub const MAG_TOL: f64 = 0.02;
pub const PHASE_TOL_DEG: f64 = 2.0;
/// Analytic magnitudes below this are not compared.
pub const MAG_FLOOR: f64 = 1e-8;
pub const EVEN_TOL: f64 = 1e-6;
/// Settling time in units of `1/omega_r`.
const SETTLE_TIME: f64 = 40.0;
/// Step times the fastest mode.
const RESOLUTION: f64 = 0.02;
const ANALYSIS_PERIODS: u32 = 4;

pub struct SuiteElement {
    pub name: &'static str,
    pub chain: SeriesChain,
    /// Reset corner (rad/s); the grid spans a decade either side.
    pub omega_r: f64,
    /// Fastest linear mode (rad/s). Reset jumps excite it, so the step has
    /// to resolve it for the DFT to see the right transient area.
    pub fastest: f64,
}

pub fn elements() -> Vec<SuiteElement> {
    let wr = 1.0;
    let gfore = |g: f64| make_gfore(wr, g, approx::alpha_choice(g).expect("valid gamma")).expect("valid gfore");
    let gsore = |g: f64| {
        let k = approx::kappa_choice(g).expect("valid gamma");
        make_gsore(wr, g, k, 1.0 / (2.0 * k)).expect("valid gsore")
    };
    let fore = CgLpDesign::first(0.0, wr, 100.0 * wr, approx::alpha_choice(0.0).expect("gamma 0"));
    let k = approx::kappa_choice(0.1).expect("gamma 0.1");
    let sore = CgLpDesign::second(0.1, wr, 100.0 * wr, k, 1.0 / (2.0 * k), 1.0);
    vec![
        SuiteElement {
            name: "clegg",
            chain: SeriesChain::single(make_clegg()),
            omega_r: wr,
            fastest: wr,
        },
        SuiteElement {
            name: "gfore(gamma=-0.3)",
            chain: SeriesChain::single(gfore(-0.3)),
            omega_r: wr,
            fastest: wr,
        },
        SuiteElement {
            name: "gfore(gamma=0)",
            chain: SeriesChain::single(gfore(0.0)),
            omega_r: wr,
            fastest: wr,
        },
        SuiteElement {
            name: "gfore(gamma=0.3)",
            chain: SeriesChain::single(gfore(0.3)),
            omega_r: wr,
            fastest: wr,
        },
        SuiteElement {
            name: "gsore(gamma=0)",
            chain: SeriesChain::single(gsore(0.0)),
            omega_r: wr,
            fastest: wr,
        },
        SuiteElement {
            name: "gsore(gamma=0.2)",
            chain: SeriesChain::single(gsore(0.2)),
            omega_r: wr,
            fastest: wr,
        },
        SuiteElement {
            name: "cglp-fore(gamma=0)",
            chain: make_cglp(&fore).expect("valid design"),
            omega_r: wr,
            fastest: 100.0 * wr,
        },
        SuiteElement {
            name: "cglp-sore(gamma=0.1)",
            chain: make_cglp(&sore).expect("valid design"),
            omega_r: wr,
            fastest: 100.0 * wr,
        },
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub element: String,
    pub omega: f64,
    pub order: u32,
    pub analytic: Complex64,
    pub simulated: Complex64,
    /// Relative magnitude error; absolute simulated magnitude for even
    /// orders.
    pub mag_err: f64,
    pub phase_err_deg: f64,
    /// False when the analytic magnitude is below the comparison floor.
    pub checked: bool,
    pub pass: bool,
    pub note: String,
}

fn wrap_deg(d: f64) -> f64 {
    let r = (d + 180.0).rem_euclid(360.0) - 180.0;
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

fn compare(element: &str, omega: f64, order: u32, analytic: Complex64, simulated: Complex64) -> OracleRow {
    let mut row = OracleRow {
        element: element.into(),
        omega,
        order,
        analytic,
        simulated,
        mag_err: 0.0,
        phase_err_deg: 0.0,
        checked: true,
        pass: true,
        note: String::new(),
    };
    if order % 2 == 0 {
        row.mag_err = simulated.norm();
        row.pass = row.mag_err < EVEN_TOL;
        return row;
    }
    let a = analytic.norm();
    if a <= MAG_FLOOR {
        row.checked = false;
        row.note = "below magnitude floor".into();
        return row;
    }
    row.mag_err = (simulated.norm() - a).abs() / a;
    row.phase_err_deg = wrap_deg((simulated.arg() - analytic.arg()).to_degrees());
    row.pass = row.mag_err <= MAG_TOL && row.phase_err_deg.abs() <= PHASE_TOL_DEG;
    row
}

fn error_row(element: &str, omega: f64, order: u32, note: String) -> OracleRow {
    OracleRow {
        element: element.into(),
        omega,
        order,
        analytic: Complex64::new(f64::NAN, f64::NAN),
        simulated: Complex64::new(f64::NAN, f64::NAN),
        mag_err: f64::NAN,
        phase_err_deg: f64::NAN,
        checked: true,
        pass: false,
        note,
    }
}

/// Simulation settings for one grid point.
pub fn sim_config(omega: f64, el: &SuiteElement) -> SimConfig {
    let period = 2.0 * PI / omega;
    let settle = ((SETTLE_TIME / el.omega_r) / period).ceil().max(4.0) as u32;
    let dt = (period / MIN_STEPS_PER_PERIOD).min(RESOLUTION / el.fastest);
    SimConfig::new(omega / (2.0 * PI), 1.0, settle, ANALYSIS_PERIODS).with_dt(dt)
}

fn check_point(el: &SuiteElement, omega: f64, orders: &[u32], theta_scale: f64) -> Vec<OracleRow> {
    let cfg = sim_config(omega, el);
    let sim = simulate_chain_open_loop(&el.chain, &cfg)
        .map_err(|e| e.to_string())
        .and_then(|r| extract_harmonics(&r, cfg.frequency_hz, orders).map_err(|e| e.to_string()));
    let sim = match sim {
        Ok(s) => s,
        Err(e) => return orders.iter().map(|&n| error_row(el.name, omega, n, e.clone())).collect(),
    };
    orders
        .iter()
        .zip(sim)
        .map(|(&n, s)| match chain_harmonic_perturbed(&el.chain, omega, n, theta_scale) {
            Ok(g) => compare(el.name, omega, n, g, s),
            Err(e) => error_row(el.name, omega, n, e.to_string()),
        })
        .collect()
}

/// Every element over `POINTS` log-spaced frequencies in
/// `[omega_r/10, 10 omega_r]`. `theta_scale` multiplies the analytic
/// reset kernel (1 for the real check).
pub fn run(orders: &[u32], theta_scale: f64) -> Vec<OracleRow> {
    let els = elements();
    let jobs: Vec<(usize, f64)> = els
        .iter()
        .enumerate()
        .flat_map(|(i, e)| {
            hosidf::log_grid(e.omega_r / 10.0, 10.0 * e.omega_r, POINTS)
                .expect("valid grid")
                .into_iter()
                .map(move |w| (i, w))
        })
        .collect();
    jobs.par_iter()
        .flat_map_iter(|&(i, w)| check_point(&els[i], w, orders, theta_scale))
        .collect()
}

/// Odd orders followed by the even orders that must vanish.
pub fn default_orders() -> Vec<u32> {
    ODD_ORDERS.iter().chain(EVEN_ORDERS.iter()).copied().collect()
}
