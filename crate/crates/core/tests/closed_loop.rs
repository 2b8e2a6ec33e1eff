use num_complex::Complex64;
use resetdf::approx::alpha_choice;
use resetdf::reset_elements::{hz_to_rad, make_cglp, make_pid, CgLpDesign, Element, LinearElement, SeriesChain};
use resetdf::simulator::{
    deviation_ratio, expected_rms_error, make_plant, simulate_closed_loop, SimConfig, SimError,
};
use resetdf::tuner::normalize_loop_gain;

const WC_HZ: f64 = 100.0;
const REF_HZ: f64 = 10.0;

/// CgLp-FORE with a 1 kHz lead corner, PID, normalized so |L1| = 1 at crossover.
fn controller(gamma: f64) -> SeriesChain {
    controller_at(gamma, WC_HZ)
}

fn controller_at(gamma: f64, wc_hz: f64) -> SeriesChain {
    controller_with(gamma, wc_hz, &make_plant())
}

fn controller_with(gamma: f64, wc_hz: f64, plant: &LinearElement) -> SeriesChain {
    let wc = hz_to_rad(wc_hz);
    let d = CgLpDesign::first(gamma, wc / 4.3, 10.0 * wc, alpha_choice(gamma.min(0.9)).unwrap());
    let build = |kp: f64| {
        make_cglp(&d)
            .unwrap()
            .then([Element::Linear(make_pid(kp, hz_to_rad(10.0), hz_to_rad(500.0)).unwrap())])
            .unwrap()
    };
    let with_plant = build(1.0).then([Element::Linear(plant.clone())]).unwrap();
    build(normalize_loop_gain(&with_plant, wc).unwrap())
}

fn cfg(amp: f64, dt: f64) -> SimConfig {
    SimConfig::new(REF_HZ, amp, 4, 4).with_dt(dt)
}

fn fast_dt() -> f64 {
    0.02 / (10.0 * hz_to_rad(WC_HZ))
}

/// Polynomial in `s`, highest power first.
fn poly(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * s + k)
}

#[test]
fn zero_reference_stays_at_rest() {
    let r = simulate_closed_loop(&controller(0.0), &make_plant(), &cfg(0.0, fast_dt())).unwrap();
    assert_eq!(r.rms_error, 0.0);
    assert_eq!(r.reset_count(), 0);
    assert!(r.error.iter().chain(&r.output).all(|&v| v == 0.0));
    assert!(matches!(
        deviation_ratio(r.rms_error, expected_rms_error(&controller(0.0), &make_plant(), 0.0, REF_HZ).unwrap()),
        Err(SimError::DeviationUndefined { .. })
    ));
}

#[test]
fn linear_limit_matches_closed_form_sensitivity() {
    // Without reset the lead is cancelled and PI alone cannot stabilize the
    // resonant plant, so use a first-order one.
    let plant = LinearElement::new(vec![500.0], vec![1.0, 50.0]).unwrap();
    let chain = controller_with(1.0, WC_HZ, &plant);
    let amp = 1e-3;
    let ref_hz = REF_HZ;
    let r = simulate_closed_loop(&chain, &plant, &SimConfig::new(ref_hz, amp, 4, 4).with_dt(fast_dt())).unwrap();

    // Loop transfer from the raw coefficient lists, no harmonic machinery.
    let s = Complex64::new(0.0, hz_to_rad(ref_hz));
    let mut l = plant.eval(s);
    for e in chain.elements() {
        l *= match e {
            Element::Linear(lin) => poly(lin.numerator(), s) / poly(lin.denominator(), s),
            Element::Reset(ctrl) => ctrl.base_linear_response(s).unwrap(),
        };
    }
    let expected = amp / 2f64.sqrt() / (1.0 + l).norm();
    assert!((r.rms_error - expected).abs() / expected < 5e-3, "{} vs {expected}", r.rms_error);
    let df = expected_rms_error(&chain, &plant, amp, ref_hz).unwrap();
    assert!((df - expected).abs() / expected < 1e-9);
}

#[test]
fn expected_rms_scales_with_amplitude() {
    let chain = controller(0.0);
    let plant = make_plant();
    let e1 = expected_rms_error(&chain, &plant, 1.0, REF_HZ).unwrap();
    let e3 = expected_rms_error(&chain, &plant, 3.0, REF_HZ).unwrap();
    assert!((e3 / e1 - 3.0).abs() < 1e-12);
    // Negligible loop gain leaves the reference untouched.
    let weak = chain.with_gain(1e-12);
    let e = expected_rms_error(&weak, &plant, 2.0, REF_HZ).unwrap();
    assert!((e - 2.0 / 2f64.sqrt()).abs() < 1e-9);
}

#[test]
fn reset_loop_error_converges_in_step_size() {
    let chain = controller(0.0);
    let plant = make_plant();
    let a = simulate_closed_loop(&chain, &plant, &cfg(1e-3, fast_dt())).unwrap();
    let b = simulate_closed_loop(&chain, &plant, &cfg(1e-3, fast_dt() / 2.0)).unwrap();
    assert!((a.rms_error - b.rms_error).abs() / b.rms_error < 5e-3);
    assert!(a.reset_count() > 0);
}

#[test]
fn positive_feedback_diverges() {
    let chain = controller(0.0).with_gain(-20.0);
    let cfg = SimConfig::new(REF_HZ, 1e-3, 20, 4).with_dt(fast_dt());
    match simulate_closed_loop(&chain, &make_plant(), &cfg) {
        Err(SimError::Diverged { time, last_stable_time }) => {
            assert!(last_stable_time <= time && time < 2.4 * 1.0 / REF_HZ * 10.0);
        }
        other => panic!("expected divergence, got {:?}", other.map(|r| r.rms_error)),
    }
}

#[test]
fn resets_recur_within_every_reference_period() {
    let r = simulate_closed_loop(&controller(0.0), &make_plant(), &cfg(1e-3, fast_dt())).unwrap();
    let period = 1.0 / REF_HZ;
    let start = r.analysis_start;
    for w in r.reset_times.windows(2).filter(|w| w[0] > start) {
        assert!(w[1] - w[0] < period, "gap {}", w[1] - w[0]);
    }
}
