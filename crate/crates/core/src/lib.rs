//! Desk-scale ultrasonic array characterization toolkit.
//!
//! The crate covers the full pulse-echo measurement chain for a linear
//! phased array in an attenuating pin-target phantom:
//!
//! * [`waveform`] — PWM drive pulses, Golay-coded BPSK trains, energy and
//!   band-limited resampling.
//! * [`transducer`] — two-way electromechanical transfer functions: parametric
//!   synthesis, filtering, and spectral-division estimation.
//! * [`propagation`] — cylindrical spreading, reflection, frequency-dependent
//!   attenuation, and pin-target scattering.
//! * [`acquisition`] — the scanner model: array geometry, single-element and
//!   diverging-wave transmits, receive gain/TGC, quantization, and noise.
//! * [`processing`] — correlation reception with unit-energy references,
//!   complementary-code combining, and delay-and-sum beamforming.
//! * [`metrics`] — periodograms, fractional bandwidth, line-spread and range
//!   resolution extraction, beamwidth profiles, and SNR gain.
//! * [`io`] — a bit-exact binary container plus plot-ready CSV writers.
//!
//! All values are immutable after construction and safe to share across
//! threads; the heavy loops (simulation, beamforming) parallelize internally
//! with deterministic reduction order, so results are reproducible bit for
//! bit given the same seed.

// validation guards use `!(x > 0.0)` so NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod codes;
pub mod error;
pub mod fft;
pub mod io;
pub mod metrics;
pub mod processing;
pub mod propagation;
pub mod transducer;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::{AmplitudeUnit, SampledWaveform};
