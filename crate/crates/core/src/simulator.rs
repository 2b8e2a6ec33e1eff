//! Time-domain simulation of reset systems.
//!
//! Flow dynamics are integrated with fixed-step RK4. When the input of the
//! reset element changes sign within a step, the crossing time is refined
//! by bisection to `dt * 1e-6`, the reset `x+ = A_rho x` is applied there
//! and integration resumes from the crossing.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hosidf::{self, HosidfError};
use crate::numkit::{self, NumError, Signal};
use crate::reset_elements::{Element, ElementError, LinearElement, ResetController, SeriesChain, StateSpace};

/// State norm above which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Magnitude below which the reset input counts as zero.
pub const ZERO_BAND: f64 = 1e-15;
/// Crossing-time resolution relative to the step.
pub const CROSSING_REL_TOL: f64 = 1e-6;
/// Minimum number of RK4 steps per reference period for automatic steps.
pub const MIN_STEPS_PER_PERIOD: f64 = 2000.0;
/// Automatic steps satisfy `dt * max ||A_block||_inf <= STABILITY_FACTOR`,
/// inside the RK4 stability region.
pub const STABILITY_FACTOR: f64 = 2.0;
/// Largest admissible step relative to the reference period.
pub const MAX_DT_FRACTION: f64 = 1.0 / 200.0;
/// Minimum number of whole analysis periods after settling.
pub const MIN_ANALYSIS_PERIODS: f64 = 4.0;
/// Resets closer than this fraction of a step to a sample node are
/// recorded at the node as the midpoint of the jump.
const NODE_TOL: f64 = 1e-3;
/// Orders extracted into [`SimResult::harmonics`].
pub const RESULT_ORDERS: [u32; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("simulation diverged at t = {time:.6e} s (last stable t = {last_stable_time:.6e} s)")]
    Diverged { time: f64, last_stable_time: f64 },
    #[error("plant must be strictly proper for a well-posed loop")]
    ImproperPlant,
    #[error("deviation ratio undefined: measured {measured:.3e}, expected {expected:.3e}")]
    DeviationUndefined { measured: f64, expected: f64 },
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Numeric(#[from] NumError),
    #[error(transparent)]
    Hosidf(#[from] HosidfError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step in seconds; chosen from the dynamics when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    pub duration: f64,
    pub settle_periods: u32,
    pub amplitude: f64,
    pub frequency_hz: f64,
    /// Output quantization step (feedback path only).
    #[serde(default)]
    pub quantizer: Option<f64>,
    /// Keep every `record_stride`-th sample of the time series.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl SimConfig {
    /// Sinusoidal excitation running `settle_periods + analysis_periods`
    /// periods.
    pub fn new(frequency_hz: f64, amplitude: f64, settle_periods: u32, analysis_periods: u32) -> Self {
        Self {
            dt: None,
            duration: (settle_periods + analysis_periods) as f64 / frequency_hz,
            settle_periods,
            amplitude,
            frequency_hz,
            quantizer: None,
            record_stride: 1,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    pub fn analysis_start(&self) -> f64 {
        self.settle_periods as f64 * self.period()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return bad(format!("frequency_hz must be positive, got {}", self.frequency_hz));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude must be non-negative, got {}", self.amplitude));
        }
        let needed = (self.settle_periods as f64 + MIN_ANALYSIS_PERIODS) * self.period();
        if !(self.duration >= needed * (1.0 - 1e-12)) {
            return bad(format!(
                "duration {} s must cover {} settle periods plus {} analysis periods ({needed} s)",
                self.duration, self.settle_periods, MIN_ANALYSIS_PERIODS
            ));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt must be positive, got {dt}"));
            }
            if dt > MAX_DT_FRACTION * self.period() * (1.0 + 1e-12) {
                return bad(format!("dt {dt} exceeds 1/200 of the reference period"));
            }
        }
        if let Some(q) = self.quantizer {
            if !(q > 0.0 && q.is_finite()) {
                return bad(format!("quantizer step must be positive, got {q}"));
            }
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    /// Integration step.
    pub dt: f64,
    /// Spacing of the recorded series (`dt * record_stride`).
    pub record_dt: f64,
    pub time: Vec<f64>,
    pub reference: Vec<f64>,
    pub error: Vec<f64>,
    pub control: Vec<f64>,
    pub output: Vec<f64>,
    pub reset_times: Vec<f64>,
    /// RMS of the error over the analysis window.
    pub rms_error: f64,
    pub analysis_start: f64,
    pub amplitude: f64,
    pub frequency_hz: f64,
    /// Output harmonics normalized by the amplitude (empty for zero input).
    pub harmonics: Vec<(u32, Complex64)>,
}

impl SimResult {
    pub fn reset_count(&self) -> usize {
        self.reset_times.len()
    }

    pub fn output_signal(&self) -> Result<Signal, SimError> {
        Ok(Signal::new(self.record_dt, self.output.clone())?)
    }
}

/// Output harmonics at `n * base_f`, normalized by the input amplitude so
/// they compare directly with `G_n`.
pub fn extract_harmonics(result: &SimResult, base_f: f64, orders: &[u32]) -> Result<Vec<Complex64>, SimError> {
    if !(result.amplitude > 0.0) {
        return Err(SimError::Config("harmonic extraction needs a nonzero amplitude".into()));
    }
    let s = result.output_signal()?;
    orders
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(SimError::Config("harmonic order must be at least 1".into()));
            }
            Ok(numkit::single_bin_dft(&s, n as f64 * base_f, result.analysis_start)? / result.amplitude)
        })
        .collect()
}

pub fn make_plant() -> LinearElement {
    LinearElement::new(vec![9602.5], vec![1.0, 4.2676, 7627.3]).expect("constant coefficients")
}

struct Block {
    ss: StateSpace,
    offset: usize,
}

impl Block {
    fn output(&self, x: &[f64], u: f64) -> f64 {
        let xs = &x[self.offset..self.offset + self.ss.n];
        self.ss.c.iter().zip(xs).map(|(c, v)| c * v).sum::<f64>() + self.ss.d * u
    }

    fn derivative(&self, x: &[f64], u: f64, dx: &mut [f64]) {
        let n = self.ss.n;
        let xs = &x[self.offset..self.offset + n];
        for i in 0..n {
            let row = &self.ss.a[i * n..(i + 1) * n];
            dx[self.offset + i] = row.iter().zip(xs).map(|(a, v)| a * v).sum::<f64>() + self.ss.b[i] * u;
        }
    }
}

#[derive(Clone, Copy)]
struct Signals {
    /// Loop error (closed loop) or input (open loop), unquantized.
    error: f64,
    /// Input of the reset element computed from the unquantized error.
    reset_input: f64,
    /// Input of the last block.
    control: f64,
    output: f64,
}

/// Series blocks with an optional unity negative feedback from the last
/// block's output.
struct Engine {
    blocks: Vec<Block>,
    n: usize,
    reset_block: Option<usize>,
    reset_gains: Vec<f64>,
    feedback: bool,
    quantizer: Option<f64>,
}

fn reset_state_space(r: &ResetController) -> StateSpace {
    StateSpace {
        n: r.order(),
        a: r.a().to_vec(),
        b: r.b().to_vec(),
        c: r.c().to_vec(),
        d: r.d(),
    }
}

impl Engine {
    fn new(elements: &[Element], feedback: bool, quantizer: Option<f64>) -> Self {
        let mut blocks = Vec::with_capacity(elements.len());
        let mut offset = 0;
        let mut reset_block = None;
        let mut reset_gains = Vec::new();
        for (i, e) in elements.iter().enumerate() {
            let ss = match e {
                Element::Reset(r) => {
                    reset_block = Some(i);
                    reset_gains = r.reset_gains().to_vec();
                    reset_state_space(r)
                }
                Element::Linear(l) => l.realize(),
            };
            let n = ss.n;
            blocks.push(Block { ss, offset });
            offset += n;
        }
        Self {
            blocks,
            n: offset,
            reset_block,
            reset_gains,
            feedback,
            quantizer,
        }
    }

    /// Largest infinity norm among the block dynamics matrices.
    fn stiffness(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let n = b.ss.n;
                (0..n)
                    .map(|i| b.ss.a[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    fn eval(&self, r: f64, x: &[f64], mut dx: Option<&mut [f64]>) -> Signals {
        let (error, fed) = if self.feedback {
            let last = self.blocks.last().expect("nonempty");
            let y = last.output(x, 0.0);
            let measured = match self.quantizer {
                Some(q) => q * (y / q).round(),
                None => y,
            };
            (r - y, r - measured)
        } else {
            (r, r)
        };
        let mut sig = fed;
        let mut reset_input = fed;
        let mut control = fed;
        let last_idx = self.blocks.len() - 1;
        for (i, b) in self.blocks.iter().enumerate() {
            if Some(i) == self.reset_block {
                reset_input = sig;
            }
            if i == last_idx {
                control = sig;
            }
            if let Some(dx) = dx.as_deref_mut() {
                b.derivative(x, sig, dx);
            }
            sig = b.output(x, sig);
        }
        if self.quantizer.is_some() && fed != error {
            if let Some(k) = self.reset_block {
                let mut s = error;
                for b in &self.blocks[..k] {
                    s = b.output(x, s);
                }
                reset_input = s;
            }
        }
        Signals {
            error,
            reset_input,
            control,
            output: sig,
        }
    }

    fn apply_reset(&self, x: &mut [f64]) {
        if let Some(k) = self.reset_block {
            let off = self.blocks[k].offset;
            for (i, g) in self.reset_gains.iter().enumerate() {
                x[off + i] *= g;
            }
        }
    }
}

#[derive(Default)]
struct Recorder {
    time: Vec<f64>,
    reference: Vec<f64>,
    error: Vec<f64>,
    control: Vec<f64>,
    output: Vec<f64>,
}

impl Recorder {
    fn with_capacity(n: usize) -> Self {
        Self {
            time: Vec::with_capacity(n),
            reference: Vec::with_capacity(n),
            error: Vec::with_capacity(n),
            control: Vec::with_capacity(n),
            output: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, r: f64, s: &Signals) {
        self.time.push(t);
        self.reference.push(r);
        self.error.push(s.error);
        self.control.push(s.control);
        self.output.push(s.output);
    }

    /// Replace the jumping signals of the last sample by the midpoint with `post`.
    fn average_last(&mut self, post: &Signals) {
        if let (Some(o), Some(c)) = (self.output.last_mut(), self.control.last_mut()) {
            *o = 0.5 * (*o + post.output);
            *c = 0.5 * (*c + post.control);
        }
    }
}

struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, eng: &Engine, input: &dyn Fn(f64) -> f64, t: f64, x: &[f64], h: f64, out: &mut [f64]) {
        let n = x.len();
        let [k1, k2, k3, k4] = &mut self.k;
        eng.eval(input(t), x, Some(k1));
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        eng.eval(input(t + 0.5 * h), &self.tmp, Some(k2));
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        eng.eval(input(t + 0.5 * h), &self.tmp, Some(k3));
        for i in 0..n {
            self.tmp[i] = x[i] + h * k3[i];
        }
        eng.eval(input(t + h), &self.tmp, Some(k4));
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else {
        -1
    }
}

/// Step size actually used for `cfg` with the given dynamics.
fn choose_dt(cfg: &SimConfig, eng: &Engine) -> f64 {
    let period = cfg.period();
    let cap = match cfg.dt {
        Some(dt) => dt,
        None => {
            let s = eng.stiffness();
            let stable = if s > 0.0 { STABILITY_FACTOR / s } else { f64::INFINITY };
            stable.min(period / MIN_STEPS_PER_PERIOD)
        }
    };
    // An even number of steps per period puts the zero crossings of the
    // reference on sample nodes and keeps analysis windows aligned.
    let mut per = (period / cap * (1.0 - 1e-12)).ceil().max(2.0);
    if per % 2.0 != 0.0 {
        per += 1.0;
    }
    period / per
}

fn run(eng: &Engine, input: &dyn Fn(f64) -> f64, cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let h = choose_dt(cfg, eng);
    let steps = (cfg.duration / h).round() as usize;
    let start = cfg.analysis_start();
    let first_analysis = (start / h - 1e-9).ceil() as usize;
    let stride = cfg.record_stride;
    let mut rec = Recorder::with_capacity(steps / stride + 2);
    let mut reset_times = Vec::new();

    let n = eng.n;
    let mut x = vec![0.0; n];
    let mut x1 = vec![0.0; n];
    let mut xm = vec![0.0; n];
    let mut rk = Rk4::new(n);

    let s0 = eng.eval(input(0.0), &x, None);
    let mut in_band = s0.reset_input.abs() < ZERO_BAND;
    let mut last_sign = sign(s0.reset_input);
    rec.push(0.0, input(0.0), &s0);
    let (mut sum_sq, mut count) = (0.0, 0usize);
    if first_analysis == 0 {
        sum_sq += s0.error * s0.error;
        count += 1;
    }
    let has_reset = eng.reset_block.is_some();

    for k in 0..steps {
        let t0 = k as f64 * h;
        let t_end = (k + 1) as f64 * h;
        let mut t = t0;
        // Signals just before a reset that coincides with the node t_end.
        let mut jump_at_end: Option<Signals> = None;
        loop {
            let rem = t_end - t;
            rk.step(eng, input, t, &x, rem, &mut x1);
            if !has_reset {
                x.copy_from_slice(&x1);
                break;
            }
            let v1 = eng.eval(input(t_end), &x1, None).reset_input;
            if v1.abs() < ZERO_BAND {
                if !in_band {
                    in_band = true;
                    jump_at_end = Some(eng.eval(input(t_end), &x1, None));
                    eng.apply_reset(&mut x1);
                    reset_times.push(t_end);
                }
                x.copy_from_slice(&x1);
                break;
            }
            let s1 = sign(v1);
            if in_band {
                in_band = false;
                last_sign = s1;
                x.copy_from_slice(&x1);
                break;
            }
            if s1 == last_sign {
                x.copy_from_slice(&x1);
                break;
            }
            // Sign change within [t, t_end]: locate it.
            let (mut lo, mut hi) = (0.0, rem);
            while hi - lo > h * CROSSING_REL_TOL {
                let mid = 0.5 * (lo + hi);
                rk.step(eng, input, t, &x, mid, &mut xm);
                let vm = eng.eval(input(t + mid), &xm, None).reset_input;
                if vm.abs() >= ZERO_BAND && sign(vm) == last_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            rk.step(eng, input, t, &x, hi, &mut xm);
            let pre = eng.eval(input(t + hi), &xm, None);
            eng.apply_reset(&mut xm);
            x.copy_from_slice(&xm);
            if t == t0 && hi <= NODE_TOL * h && k % stride == 0 {
                // Jump at the node just recorded: store the midpoint.
                let post = eng.eval(input(t + hi), &xm, None);
                rec.average_last(&post);
            } else if t_end - (t + hi) <= NODE_TOL * h {
                jump_at_end = Some(pre);
            }
            t += hi;
            reset_times.push(t);
            last_sign = s1;
            if t_end - t <= h * 1e-12 {
                break;
            }
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(SimError::Diverged {
                time: t_end,
                last_stable_time: t0,
            });
        }
        let r = input(t_end);
        let mut s = eng.eval(r, &x, None);
        if let Some(pre) = jump_at_end {
            s.output = 0.5 * (s.output + pre.output);
            s.control = 0.5 * (s.control + pre.control);
        }
        if k + 1 >= first_analysis {
            sum_sq += s.error * s.error;
            count += 1;
        }
        if (k + 1) % stride == 0 {
            rec.push(t_end, r, &s);
        }
    }

    let rms_error = if count > 0 { (sum_sq / count as f64).sqrt() } else { 0.0 };
    let mut result = SimResult {
        dt: h,
        record_dt: h * stride as f64,
        time: rec.time,
        reference: rec.reference,
        error: rec.error,
        control: rec.control,
        output: rec.output,
        reset_times,
        rms_error,
        analysis_start: start,
        amplitude: cfg.amplitude,
        frequency_hz: cfg.frequency_hz,
        harmonics: Vec::new(),
    };
    if cfg.amplitude > 0.0 {
        if let Ok(h) = extract_harmonics(&result, cfg.frequency_hz, &RESULT_ORDERS) {
            result.harmonics = RESULT_ORDERS.iter().copied().zip(h).collect();
        }
    }
    Ok(result)
}

fn sine(cfg: &SimConfig) -> impl Fn(f64) -> f64 {
    let (amp, w) = (cfg.amplitude, 2.0 * PI * cfg.frequency_hz);
    move |t| amp * (w * t).sin()
}

/// Open-loop response of `ctrl` to `amplitude * sin(2 pi f t)`.
pub fn simulate_element(ctrl: &ResetController, cfg: &SimConfig) -> Result<SimResult, SimError> {
    simulate_chain_open_loop(&SeriesChain::single(ctrl.clone()), cfg)
}

/// Open-loop response of `ctrl` to an arbitrary input signal. The config
/// still fixes the step, duration and analysis window.
pub fn simulate_element_with(ctrl: &ResetController, input: &dyn Fn(f64) -> f64, cfg: &SimConfig) -> Result<SimResult, SimError> {
    simulate_chain_with(&SeriesChain::single(ctrl.clone()), input, cfg)
}

pub fn simulate_chain_open_loop(chain: &SeriesChain, cfg: &SimConfig) -> Result<SimResult, SimError> {
    let input = sine(cfg);
    simulate_chain_with(chain, &input, cfg)
}

pub fn simulate_chain_with(chain: &SeriesChain, input: &dyn Fn(f64) -> f64, cfg: &SimConfig) -> Result<SimResult, SimError> {
    let eng = Engine::new(chain.elements(), false, None);
    run(&eng, input, cfg)
}

/// Unity negative feedback around `chain` followed by `plant`, tracking
/// `amplitude * sin(2 pi f t)`.
pub fn simulate_closed_loop(chain: &SeriesChain, plant: &LinearElement, cfg: &SimConfig) -> Result<SimResult, SimError> {
    if !plant.is_strictly_proper() {
        return Err(SimError::ImproperPlant);
    }
    let mut elements = chain.elements().to_vec();
    elements.push(Element::Linear(plant.clone()));
    let eng = Engine::new(&elements, true, cfg.quantizer);
    let input = sine(cfg);
    run(&eng, &input, cfg)
}

/// Describing-function prediction of the RMS tracking error,
/// `|S(j w)| * amplitude / sqrt(2)`.
pub fn expected_rms_error(chain: &SeriesChain, plant: &LinearElement, ref_amp: f64, ref_f_hz: f64) -> Result<f64, SimError> {
    let open = chain.then([Element::Linear(plant.clone())])?;
    let s = hosidf::sensitivity_df(&open, 2.0 * PI * ref_f_hz)?;
    Ok(s.norm() * ref_amp / 2f64.sqrt())
}

/// Measured over expected RMS error.
pub fn deviation_ratio(measured_rms: f64, expected_rms: f64) -> Result<f64, SimError> {
    if expected_rms > 0.0 && expected_rms.is_finite() && measured_rms >= 0.0 {
        Ok(measured_rms / expected_rms)
    } else {
        Err(SimError::DeviationUndefined {
            measured: measured_rms,
            expected: expected_rms,
        })
    }
}
