use std::f64::consts::PI;

use proptest::prelude::*;
use resetdf::approx::{alpha_choice, sigma};
use resetdf::hosidf::{chain_harmonic, sensitivity_df};
use resetdf::reset_elements::{hz_to_rad, make_cglp, make_pid, CgLpDesign, Element, LinearElement};
use resetdf::simulator::make_plant;
use resetdf::tuner::{enumerate, find_omega_r, normalize_loop_gain, phase_at, refine, TuningProblem};

fn first_order_problem() -> TuningProblem {
    TuningProblem::new(1, 40.0, 100.0, 1e5, vec![0.17, 0.0, -0.1, -0.2, -0.3])
}

fn second_order_problem() -> TuningProblem {
    let mut p = TuningProblem::new(2, 60.0, 100.0, 1e5, vec![0.28, 0.2, 0.1, 0.0]);
    p.zeta = Some(1.0);
    p
}

#[test]
fn first_order_problem_rows_reconstruct() {
    let t = enumerate(&first_order_problem()).unwrap();
    let expected = [(0.0, 4.3, 1.23e-4), (-0.1, 3.0, 8.58e-5), (-0.2, 2.4, 8.14e-5), (-0.3, 2.0, 8.68e-5)];
    for (g, a, s) in expected {
        let c = t.candidates.iter().find(|c| c.gamma == g).unwrap();
        assert!((c.a - a).abs() <= 0.1 * a, "gamma {g}: a = {}", c.a);
        let wc = hz_to_rad(100.0);
        let d = CgLpDesign::first(g, wc / a, hz_to_rad(1e5), alpha_choice(g).unwrap());
        let from_a = sigma(&d).unwrap();
        assert!((from_a - s).abs() <= 0.01 * s, "gamma {g}: sigma {from_a}");
    }
    assert_eq!(t.best().unwrap().gamma, -0.2);
}

#[test]
fn second_order_problem_best_is_gamma_point_one() {
    let t = enumerate(&second_order_problem()).unwrap();
    assert_eq!(t.best().unwrap().gamma, 0.1);
}

#[test]
fn achieved_phase_within_tolerance_and_deterministic() {
    for p in [first_order_problem(), second_order_problem()] {
        let a = enumerate(&p).unwrap();
        let b = enumerate(&p).unwrap();
        assert_eq!(a, b);
        for c in &a.candidates {
            assert!((c.achieved_phase_deg - p.phi_target_deg).abs() <= p.phase_tol_deg);
        }
        assert!(a.candidates.windows(2).all(|w| w[0].sigma <= w[1].sigma));
    }
}

#[test]
fn refinement_never_worsens_best_sigma() {
    let mut p = first_order_problem();
    p.refinement_rounds = 3;
    let base = enumerate(&p).unwrap();
    let refined = refine(&p, &base).unwrap();
    assert!(refined.best().unwrap().sigma <= base.best().unwrap().sigma);
    for c in &refined.candidates {
        assert!((c.achieved_phase_deg - 40.0).abs() <= 0.1);
    }
}

#[test]
fn infeasible_gamma_is_reported_not_dropped() {
    let mut p = first_order_problem();
    p.gamma_candidates.push(0.3);
    let t = enumerate(&p).unwrap();
    assert_eq!(t.infeasible.len(), 1);
    assert_eq!(t.infeasible[0].gamma, 0.3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fore_phase_decreases_with_reset_corner(gamma in -0.4f64..0.2) {
        let wc = hz_to_rad(100.0);
        let mut last = f64::INFINITY;
        for i in 0..=40 {
            let wr = wc * 10f64.powf(-3.0 + 3.0 * i as f64 / 40.0);
            let d = CgLpDesign::first(gamma, wr, hz_to_rad(1e5), alpha_choice(gamma).unwrap());
            let p = phase_at(&d, wc).unwrap();
            prop_assert!(p <= last + 1e-9, "phase rose at wr = {wr}");
            last = p;
        }
    }

    #[test]
    fn tuned_phase_hits_target(gamma in -0.4f64..0.15, phi in 20.0f64..38.0) {
        let mut p = first_order_problem();
        p.phi_target_deg = phi;
        let wr = find_omega_r(gamma, &p).unwrap();
        let d = CgLpDesign::first(gamma, wr, p.omega_f(), alpha_choice(gamma).unwrap());
        prop_assert!((phase_at(&d, p.omega_c()).unwrap() - phi).abs() <= 0.1);
    }
}

fn loop_with(plant: &LinearElement, kp: f64) -> resetdf::reset_elements::SeriesChain {
    let wc = hz_to_rad(100.0);
    let d = CgLpDesign::first(0.0, wc / 4.3, hz_to_rad(1e5), alpha_choice(0.0).unwrap());
    make_cglp(&d)
        .unwrap()
        .then([
            Element::Linear(make_pid(kp, hz_to_rad(10.0), hz_to_rad(500.0)).unwrap()),
            Element::Linear(plant.clone()),
        ])
        .unwrap()
}

#[test]
fn loop_gain_normalization_scales_inversely_with_plant() {
    let wc = hz_to_rad(100.0);
    let plant = make_plant();
    let doubled = plant.scaled(2.0);
    let k1 = normalize_loop_gain(&loop_with(&plant, 1.0), wc).unwrap();
    let k2 = normalize_loop_gain(&loop_with(&doubled, 1.0), wc).unwrap();
    assert!((k2 / k1 - 0.5).abs() < 1e-12);
    let l1 = chain_harmonic(&loop_with(&plant, k1), wc, 1).unwrap();
    assert!((l1.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn crossover_sensitivity_follows_phase_margin() {
    let wc = hz_to_rad(100.0);
    let plant = make_plant();
    let k = normalize_loop_gain(&loop_with(&plant, 1.0), wc).unwrap();
    let open = loop_with(&plant, k);
    let l1 = chain_harmonic(&open, wc, 1).unwrap();
    let pm = PI + l1.arg();
    let s = sensitivity_df(&open, wc).unwrap();
    assert!((s.norm() - 1.0 / (2.0 * (pm / 2.0).sin())).abs() < 1e-12);
}
