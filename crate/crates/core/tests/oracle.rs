use std::f64::consts::PI;

use proptest::prelude::*;
use resetdf::approx::{alpha_choice, kappa_choice};
use resetdf::hosidf::{chain_harmonic, describing_function, log_grid, sweep, HarmonicSource};
use resetdf::reset_elements::{make_cglp, make_gfore, make_gsore, CgLpDesign, ResetController, SeriesChain};
use resetdf::simulator::{extract_harmonics, simulate_chain_open_loop, simulate_element, SimConfig};
use resetdf::Complex64;

fn config(omega: f64, settle: u32) -> SimConfig {
    SimConfig::new(omega / (2.0 * PI), 1.0, settle, 4)
}

fn assert_close(analytic: Complex64, sim: Complex64, what: &str) {
    let rel = (sim.norm() - analytic.norm()).abs() / analytic.norm();
    let dphi = ((sim.arg() - analytic.arg()).to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    assert!(rel <= 0.02 && dphi.abs() <= 2.0, "{what}: analytic {analytic}, simulated {sim}");
}

#[test]
fn gfore_first_harmonic_matches_simulation() {
    let ctrl = make_gfore(1.0, 0.0, 1.0).unwrap();
    for w in [0.1, 0.5, 1.0, 3.0, 10.0] {
        let cfg = config(w, 30);
        let r = simulate_element(&ctrl, &cfg).unwrap();
        let h = extract_harmonics(&r, cfg.frequency_hz, &[1, 3, 5]).unwrap();
        for (k, n) in [1, 3, 5].into_iter().enumerate() {
            let g = describing_function(&ctrl, w, n).unwrap();
            assert_close(g, h[k], &format!("n = {n}, w = {w}"));
        }
    }
}

#[test]
fn cglp_sore_with_resolved_lead_matches_simulation() {
    let k = kappa_choice(0.0).unwrap();
    let chain = make_cglp(&CgLpDesign::second(0.0, 1.0, 50.0, k, 1.0 / (2.0 * k), 1.0)).unwrap();
    for w in [0.3, 2.0] {
        // The step has to resolve the lead pole excited by each jump.
        let cfg = config(w, 20).with_dt(0.02 / 50.0);
        let r = simulate_chain_open_loop(&chain, &cfg).unwrap();
        let h = extract_harmonics(&r, cfg.frequency_hz, &[1, 3]).unwrap();
        assert_close(chain_harmonic(&chain, w, 1).unwrap(), h[0], "n = 1");
        assert_close(chain_harmonic(&chain, w, 3).unwrap(), h[1], "n = 3");
    }
}

#[test]
fn resets_happen_at_input_zero_crossings() {
    let w = 2.5;
    let ctrls: Vec<ResetController> = vec![
        make_gfore(1.0, 0.3, 0.9).unwrap(),
        make_gsore(1.0, 0.0, 0.7856, 0.6365).unwrap(),
    ];
    for ctrl in ctrls {
        let cfg = config(w, 2);
        let r = simulate_element(&ctrl, &cfg).unwrap();
        assert!(r.reset_times.windows(2).all(|p| p[1] > p[0]));
        assert!(r.reset_count() >= 11);
        for t in &r.reset_times {
            let k = (t * w / PI).round();
            assert!(k >= 1.0);
            assert!((t - k * PI / w).abs() <= r.dt, "reset at {t}");
        }
    }
}

#[test]
fn extraction_is_amplitude_invariant() {
    let ctrl = make_gfore(1.0, -0.2, alpha_choice(-0.2).unwrap()).unwrap();
    let w = 1.7;
    let mut cfg = config(w, 20);
    let one = simulate_element(&ctrl, &cfg).unwrap();
    cfg.amplitude = 2.0;
    let two = simulate_element(&ctrl, &cfg).unwrap();
    let orders = [1, 2, 3, 4, 5];
    let a = extract_harmonics(&one, cfg.frequency_hz, &orders).unwrap();
    let b = extract_harmonics(&two, cfg.frequency_hz, &orders).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).norm() <= 1e-9 * (1.0 + x.norm()));
    }
}

#[test]
fn linear_element_has_no_third_harmonic() {
    let ctrl = make_gsore(1.0, 1.0, 0.9, 0.7).unwrap();
    let cfg = config(1.2, 30);
    let r = simulate_element(&ctrl, &cfg).unwrap();
    let h = extract_harmonics(&r, cfg.frequency_hz, &[3]).unwrap();
    assert!(h[0].norm() < 1e-6);
}

#[test]
fn sweep_matches_pointwise_evaluation() {
    let k = kappa_choice(0.1).unwrap();
    let chain = make_cglp(&CgLpDesign::second(0.1, 10.0, 1e4, k, 1.0 / (2.0 * k), 1.2)).unwrap();
    let grid = log_grid(0.1, 1e5, 97).unwrap();
    let orders = [1, 2, 3, 5, 9];
    let a = sweep(&chain, &grid, &orders).unwrap();
    let b = sweep(&chain, &grid, &orders).unwrap();
    for (i, w) in grid.iter().enumerate() {
        for &n in &orders {
            let fresh = chain.harmonic(*w, n).unwrap();
            assert_eq!(a.get(i, n).unwrap().as_ref().unwrap(), &fresh);
            assert_eq!(b.get(i, n).unwrap().as_ref().unwrap(), &fresh);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gfore_harmonics_agree_with_simulator(gamma in -0.6f64..0.8, log_w in -1.0f64..1.0) {
        let w = 10f64.powf(log_w);
        let ctrl = make_gfore(1.0, gamma, alpha_choice(gamma).unwrap()).unwrap();
        let cfg = config(w, (40.0 * w / (2.0 * PI)).ceil().max(4.0) as u32);
        let r = simulate_element(&ctrl, &cfg).unwrap();
        let h = extract_harmonics(&r, cfg.frequency_hz, &[1, 2, 3, 4, 5]).unwrap();
        for (k, n) in [1u32, 2, 3, 4, 5].into_iter().enumerate() {
            if n % 2 == 0 {
                prop_assert!(h[k].norm() < 1e-6, "even order {n}: {}", h[k].norm());
                continue;
            }
            let g = describing_function(&ctrl, w, n).unwrap();
            if g.norm() > 1e-8 {
                let rel = (h[k].norm() - g.norm()).abs() / g.norm();
                let dphi = ((h[k].arg() - g.arg()).to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
                prop_assert!(rel <= 0.02 && dphi.abs() <= 2.0, "n = {n}: {g} vs {}", h[k]);
            }
        }
    }

    #[test]
    fn gsore_even_harmonics_vanish(gamma in -0.5f64..0.9, log_w in -1.0f64..1.0) {
        let w = 10f64.powf(log_w);
        let ctrl = make_gsore(1.0, gamma, 0.8, 0.625).unwrap();
        let cfg = config(w, (60.0 * w / (2.0 * PI)).ceil().max(4.0) as u32);
        let r = simulate_chain_open_loop(&SeriesChain::single(ctrl), &cfg).unwrap();
        let h = extract_harmonics(&r, cfg.frequency_hz, &[2, 4, 6]).unwrap();
        for z in h {
            prop_assert!(z.norm() < 1e-6);
        }
    }
}
