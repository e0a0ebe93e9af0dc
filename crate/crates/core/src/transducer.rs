//! Element-level electromechanical transfer functions.
//!
//! Pulse-echo data only exposes the two-way response `H2 = H_TX * H_RX`, so
//! that is what gets modeled and estimated here. The parametric stand-in is a
//! Gaussian bandpass whose -3 dB (half-power) band spans `fbw * fc`, with
//! minimum phase so the impulse response is causal and compact. When a
//! one-way response is needed, `H2` is factored symmetrically
//! (`H_TX = H_RX = sqrt(H2)`: magnitude split, half phase).

use crate::error::{Error, Result};
use crate::fft::{fft_in_place, ifft_in_place, irfft, rfft, rfft_freqs};
use crate::waveform::SampledWaveform;
use num_complex::Complex64;

/// Complex frequency response on a uniform grid from 0 to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    /// Frequencies in Hz, uniform, starting at 0.
    pub freqs: Vec<f64>,
    /// Complex response at each frequency.
    pub values: Vec<Complex64>,
}

impl TransferFunction {
    pub fn new(freqs: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if freqs.len() != values.len() {
            return Err(Error::LengthMismatch(freqs.len(), values.len()));
        }
        if freqs.len() < 2 {
            return Err(Error::InvalidArgument(
                "transfer function needs >= 2 bins".into(),
            ));
        }
        if freqs[0].abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "frequency grid must start at 0".into(),
            ));
        }
        let df = freqs[1] - freqs[0];
        if df <= 0.0 {
            return Err(Error::InvalidArgument(
                "frequencies must be increasing".into(),
            ));
        }
        for (k, w) in freqs.windows(2).enumerate() {
            if ((w[1] - w[0]) - df).abs() > 1e-6 * df {
                return Err(Error::InvalidArgument(format!(
                    "frequency grid is not uniform at bin {k}"
                )));
            }
        }
        Ok(Self { freqs, values })
    }

    /// Grid spacing in Hz.
    pub fn df(&self) -> f64 {
        self.freqs[1] - self.freqs[0]
    }

    /// Highest grid frequency (the Nyquist rate of the implied time grid).
    pub fn nyquist(&self) -> f64 {
        *self.freqs.last().unwrap()
    }

    /// Span of the implied time-domain impulse response, seconds.
    pub fn impulse_duration(&self) -> f64 {
        (self.freqs.len() - 1) as f64 / self.nyquist()
    }

    /// All-ones response on an `n_fft`-point grid at `sample_rate`.
    pub fn all_pass(n_fft: usize, sample_rate: f64) -> Result<Self> {
        let freqs = rfft_freqs(n_fft, sample_rate);
        let n = freqs.len();
        Self::new(freqs, vec![Complex64::new(1.0, 0.0); n])
    }

    /// Linear interpolation of the response at `f`; zero outside the grid.
    pub fn sample_at(&self, f: f64) -> Complex64 {
        if f < 0.0 || f > self.nyquist() {
            return Complex64::default();
        }
        let s = f / self.df();
        let i = s.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.values[i.min(self.values.len() - 1)];
        }
        let frac = s - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Magnitude at each grid frequency.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Symmetric one-way factor `sqrt(H2)`: square-root magnitude, half the
    /// unwrapped phase.
    pub fn one_way(&self) -> TransferFunction {
        let mut phases: Vec<f64> = self.values.iter().map(|v| v.arg()).collect();
        unwrap_phases(&mut phases);
        let values = self
            .values
            .iter()
            .zip(&phases)
            .map(|(v, &p)| Complex64::from_polar(v.norm().sqrt(), p / 2.0))
            .collect();
        TransferFunction {
            freqs: self.freqs.clone(),
            values,
        }
    }
}

/// Remove 2-pi jumps from a phase sequence, in place.
pub fn unwrap_phases(phases: &mut [f64]) {
    use std::f64::consts::PI;
    let mut offset = 0.0;
    for i in 1..phases.len() {
        let mut d = phases[i] + offset - phases[i - 1];
        while d > PI {
            offset -= 2.0 * PI;
            d -= 2.0 * PI;
        }
        while d < -PI {
            offset += 2.0 * PI;
            d += 2.0 * PI;
        }
        phases[i] += offset;
    }
}

/// Minimum-phase spectrum with the given half-grid magnitude, via the real
/// cepstrum: fold the cepstrum of `ln|H|` onto positive quefrencies and
/// exponentiate.
fn minimum_phase_from_magnitude(mag: &[f64]) -> Vec<Complex64> {
    let half = mag.len();
    let n = 2 * (half - 1);
    let mut buf: Vec<Complex64> = Vec::with_capacity(n);
    for &m in mag {
        buf.push(Complex64::new(m.max(1e-12).ln(), 0.0));
    }
    for k in half..n {
        buf.push(buf[n - k]);
    }
    ifft_in_place(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let w = if k == 0 || k == n / 2 {
            1.0
        } else if k < n / 2 {
            2.0
        } else {
            0.0
        };
        *v = Complex64::new(v.re * w, 0.0);
    }
    fft_in_place(&mut buf);
    buf.truncate(half);
    buf.into_iter().map(|v| v.exp()).collect()
}

/// Synthesize a two-way response: Gaussian bandpass with unit peak magnitude
/// whose half-power (-3 dB) band has width `fbw * fc`, minimum phase, on an
/// `n_fft`-point grid at `sample_rate`.
pub fn synth_two_way_response(
    fc: f64,
    fbw: f64,
    n_fft: usize,
    sample_rate: f64,
) -> Result<TransferFunction> {
    if !(fc > 0.0) {
        return Err(Error::InvalidArgument(
            "center frequency must be positive".into(),
        ));
    }
    if !(fbw > 0.0 && fbw < 2.0) {
        return Err(Error::InvalidArgument(format!(
            "fractional bandwidth must be in (0, 2), got {fbw}"
        )));
    }
    if n_fft < 4 || !n_fft.is_multiple_of(2) {
        return Err(Error::InvalidArgument("n_fft must be even and >= 4".into()));
    }
    let nyquist = sample_rate / 2.0;
    if nyquist < fc * (1.0 + fbw) {
        return Err(Error::InvalidArgument(format!(
            "grid Nyquist {nyquist:.3e} Hz below fc*(1+fbw) = {:.3e} Hz",
            fc * (1.0 + fbw)
        )));
    }
    let freqs = rfft_freqs(n_fft, sample_rate);
    // |H|^2 = exp(-(f-fc)^2/(2 sp^2)) with FWHM(|H|^2) = fbw*fc
    let sp = fbw * fc / (2.0 * (2.0 * 2.0f64.ln()).sqrt());
    let mag: Vec<f64> = freqs
        .iter()
        .map(|&f| (-(f - fc).powi(2) / (4.0 * sp * sp)).exp())
        .collect();
    let values = minimum_phase_from_magnitude(&mag);
    TransferFunction::new(freqs, values)
}

/// Per-element sensitivity spread: independent gain and delay perturbations
/// drawn from a seeded stream, for studying uncorrected element variation.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementVariation {
    /// RMS gain perturbation in dB.
    pub gain_db_rms: f64,
    /// RMS firing/receive delay perturbation in seconds.
    pub delay_rms_s: f64,
    pub seed: u64,
}

impl ElementVariation {
    /// Draw `(linear_gain, delay_s)` for each of `n` elements.
    pub fn per_element(&self, n: usize) -> Vec<(f64, f64)> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|_| {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                let d: f64 = rng.sample(rand_distr::StandardNormal);
                (
                    10f64.powf(g * self.gain_db_rms / 20.0),
                    d * self.delay_rms_s,
                )
            })
            .collect()
    }
}

/// One array element's electromechanical model.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementModel {
    pub center_freq: f64,
    pub fractional_bandwidth: f64,
    pub two_way: TransferFunction,
    pub element_index: usize,
}

impl ElementModel {
    pub fn new(
        center_freq: f64,
        fractional_bandwidth: f64,
        two_way: TransferFunction,
        element_index: usize,
    ) -> Result<Self> {
        if !(fractional_bandwidth > 0.0 && fractional_bandwidth < 2.0) {
            return Err(Error::InvalidArgument(
                "fractional bandwidth must be in (0, 2)".into(),
            ));
        }
        let mags = two_way.magnitudes();
        let peak_bin = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let peak_freq = two_way.freqs[peak_bin];
        if (peak_freq - center_freq).abs() > 0.05 * center_freq {
            return Err(Error::InvalidArgument(format!(
                "two-way magnitude peaks at {peak_freq:.3e} Hz, more than 5% from fc {center_freq:.3e} Hz"
            )));
        }
        Ok(Self {
            center_freq,
            fractional_bandwidth,
            two_way,
            element_index,
        })
    }

    /// Uniform-array element with a synthetic Gaussian two-way response.
    pub fn uniform(
        center_freq: f64,
        fractional_bandwidth: f64,
        n_fft: usize,
        sample_rate: f64,
        element_index: usize,
    ) -> Result<Self> {
        let tf = synth_two_way_response(center_freq, fractional_bandwidth, n_fft, sample_rate)?;
        Self::new(center_freq, fractional_bandwidth, tf, element_index)
    }
}

/// Filter a waveform through a transfer function.
///
/// The waveform is zero-padded past the impulse-response span before the
/// frequency-domain multiply, so the tail never wraps circularly. Output
/// keeps the input's rate, start time, and unit.
pub fn apply_transfer(w: &SampledWaveform, tf: &TransferFunction) -> Result<SampledWaveform> {
    if w.sample_rate / 2.0 < tf.nyquist() * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "waveform Nyquist {:.3e} Hz does not cover the transfer grid up to {:.3e} Hz",
            w.sample_rate / 2.0,
            tf.nyquist()
        )));
    }
    let pad = (tf.impulse_duration() * w.sample_rate).ceil() as usize;
    let n_out = w.len() + pad;
    let mut x = w.samples.clone();
    x.resize(n_out, 0.0);
    let mut spec = rfft(&x);
    let df = w.sample_rate / n_out as f64;
    for (k, v) in spec.iter_mut().enumerate() {
        *v *= tf.sample_at(k as f64 * df);
    }
    let y = irfft(&spec, n_out);
    SampledWaveform::new(y, w.sample_rate, w.t0, w.unit)
}

/// Spectral-division estimate of a two-way transfer function, with the bins
/// outside the regularized support flagged invalid rather than extrapolated.
#[derive(Debug, Clone)]
pub struct TfEstimate {
    pub tf: TransferFunction,
    /// True where `|TX|` met the regularization floor.
    pub valid: Vec<bool>,
}

impl TfEstimate {
    /// Iterator over the valid (frequency, value) estimates.
    pub fn valid_bins(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.tf
            .freqs
            .iter()
            .zip(&self.tf.values)
            .zip(&self.valid)
            .filter(|(_, &v)| v)
            .map(|((f, val), _)| (*f, *val))
    }
}

/// Estimate `H2(f) = RX(f) / TX(f)` where `|TX(f)| >= reg * max|TX|`.
///
/// Both records must share one sample rate; any bulk delay between them shows
/// up as linear phase and leaves the magnitude untouched.
pub fn estimate_two_way_tf(
    tx: &SampledWaveform,
    rx: &SampledWaveform,
    reg: f64,
) -> Result<TfEstimate> {
    if tx.sample_rate != rx.sample_rate {
        return Err(Error::RateMismatch(tx.sample_rate, rx.sample_rate));
    }
    if !(reg > 0.0 && reg < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization floor must be in (0, 1), got {reg}"
        )));
    }
    let n = tx.len().max(rx.len());
    let mut a = tx.samples.clone();
    a.resize(n, 0.0);
    let mut b = rx.samples.clone();
    b.resize(n, 0.0);
    let tx_spec = rfft(&a);
    let rx_spec = rfft(&b);
    let peak = tx_spec.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
    if peak == 0.0 {
        return Err(Error::InvalidArgument("transmit record is all zero".into()));
    }
    let floor = reg * peak;
    let mut values = Vec::with_capacity(tx_spec.len());
    let mut valid = Vec::with_capacity(tx_spec.len());
    for (t, r) in tx_spec.iter().zip(&rx_spec) {
        if t.norm() >= floor {
            values.push(r / t);
            valid.push(true);
        } else {
            values.push(Complex64::default());
            valid.push(false);
        }
    }
    let tf = TransferFunction::new(rfft_freqs(n, tx.sample_rate), values)?;
    Ok(TfEstimate { tf, valid })
}
