//! Frequency-domain analysis, tuning and time-domain simulation of reset
//! controllers: the Clegg integrator, generalized first- and second-order
//! reset elements (GFORE, GSORE) and "constant in gain, lead in phase"
//! (CgLp) compensators.
//!
//! * [`numkit`]: small dense complex linear algebra and single-bin DFT.
//! * [`reset_elements`]: controller and transfer-function constructors.
//! * [`hosidf`]: exact describing function and higher-order harmonics.
//! * [`approx`]: simplified low/high-frequency formulas and parameter laws.
//! * [`tuner`]: phase-lead targeting with harmonic minimization.
//! * [`simulator`]: RK4 reset simulation used as an independent oracle.
//!
//! All frequencies inside the library are in rad/s unless a name ends in
//! `_hz`.

pub mod approx;
pub mod hosidf;
pub mod numkit;
pub mod reset_elements;
pub mod simulator;
pub mod tuner;

pub use num_complex::Complex64;
