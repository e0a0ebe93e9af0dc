//! Sampled waveforms and electrical drive-signal synthesis.
//!
//! The scanner's output stage produces 3-level PWM pulses on a 480 MHz symbol
//! grid; coded transmissions are BPSK chip trains built from those pulses.
//! Everything downstream (filtering, propagation, reception) consumes the
//! [`SampledWaveform`] type defined here.

use crate::error::{Error, Result};
use crate::fft::rfft;

/// Physical unit of the sample amplitudes.
///
/// Electrical drive signals are in volts; digitized receive data is in ADC
/// least-significant bits. Mixing the two in arithmetic is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeUnit {
    Volts,
    Lsb,
}

/// A uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    /// Sample values in `unit`.
    pub samples: Vec<f64>,
    /// Sampling rate in Hz.
    pub sample_rate: f64,
    /// Time of the first sample in seconds.
    pub t0: f64,
    /// Amplitude unit of `samples`.
    pub unit: AmplitudeUnit,
}

impl SampledWaveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64, t0: f64, unit: AmplitudeUnit) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("waveform must be non-empty".into()));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            t0,
            unit,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sampling interval in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Total duration `len / sample_rate`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Time of sample `i`.
    pub fn time_at(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate
    }

    /// Largest absolute sample value.
    pub fn peak_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Linear interpolation at time `t`; zero outside the sampled span.
    pub fn value_at(&self, t: f64) -> f64 {
        let s = (t - self.t0) * self.sample_rate;
        if s < 0.0 || s > (self.samples.len() - 1) as f64 {
            return 0.0;
        }
        let i = s.floor() as usize;
        if i + 1 >= self.samples.len() {
            return self.samples[i];
        }
        let frac = s - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }
}

/// Shape of one PWM half-cycle: a zero guard, a flat-top high level, and a
/// trailing zero guard, together spanning exactly half a carrier period.
#[derive(Debug, Clone, PartialEq)]
pub struct PwmSpec {
    /// Output-stage symbol rate in Hz.
    pub symbol_rate: f64,
    /// Zero-level guard at each end of the half-cycle, seconds.
    pub zero_guard: f64,
    /// Flat-top duration at `+-amplitude`, seconds.
    pub high_time: f64,
    /// Excitation voltage.
    pub amplitude: f64,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
}

impl Default for PwmSpec {
    /// The scanner's recommended drive: 480 MHz symbols, 12.5 ns guards and a
    /// 1/(24 MHz) = 41.67 ns flat top at 70 V around a 7.5 MHz carrier, which
    /// makes every half-cycle exactly 32 symbols (6 / 20 / 6).
    fn default() -> Self {
        PwmSpec {
            symbol_rate: 480.0e6,
            zero_guard: 12.5e-9,
            high_time: 1.0 / 24.0e6,
            amplitude: 70.0,
            carrier_freq: 7.5e6,
        }
    }
}

fn integer_count(x: f64) -> Option<usize> {
    let r = x.round();
    if (x - r).abs() < 1e-6 && r >= 0.0 {
        Some(r as usize)
    } else {
        None
    }
}

impl PwmSpec {
    /// Check the half-cycle timing invariants and return the
    /// (guard, high, total) symbol counts per half-cycle.
    pub fn half_cycle_counts(&self) -> Result<(usize, usize, usize)> {
        if !(self.symbol_rate > 0.0 && self.carrier_freq > 0.0) {
            return Err(Error::InvalidArgument("rates must be positive".into()));
        }
        let half_period = 1.0 / (2.0 * self.carrier_freq);
        let sum = 2.0 * self.zero_guard + self.high_time;
        if (sum - half_period).abs() > 1e-9 * half_period {
            return Err(Error::InvalidArgument(format!(
                "2*zero_guard + high_time = {sum:.4e} s does not equal a half period {half_period:.4e} s"
            )));
        }
        let n_guard = integer_count(self.zero_guard * self.symbol_rate).ok_or_else(|| {
            Error::InvalidArgument("zero_guard is not an integer symbol count".into())
        })?;
        let n_high = integer_count(self.high_time * self.symbol_rate).ok_or_else(|| {
            Error::InvalidArgument("high_time is not an integer symbol count".into())
        })?;
        let n_half = integer_count(half_period * self.symbol_rate).ok_or_else(|| {
            Error::InvalidArgument("half cycle is not an integer symbol count".into())
        })?;
        if 2 * n_guard + n_high != n_half {
            return Err(Error::InvalidArgument(
                "guard/high counts do not fill the half cycle".into(),
            ));
        }
        Ok((n_guard, n_high, n_half))
    }
}

/// Synthesize a 3-level PWM pulse of `cycles` carrier cycles.
///
/// Half-cycles alternate polarity starting positive; each one is
/// `zero_guard` of 0 V, `high_time` of `+-amplitude`, `zero_guard` of 0 V.
/// `cycles` must be a positive multiple of 0.5.
pub fn synth_pwm_pulse(cycles: f64, spec: &PwmSpec) -> Result<SampledWaveform> {
    let n_half_cycles = 2.0 * cycles;
    let k = integer_count(n_half_cycles)
        .filter(|&k| k > 0)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "cycles must be a positive multiple of 0.5, got {cycles}"
            ))
        })?;
    let (n_guard, n_high, n_half) = spec.half_cycle_counts()?;
    let mut samples = Vec::with_capacity(k * n_half);
    for i in 0..k {
        let level = if i % 2 == 0 {
            spec.amplitude
        } else {
            -spec.amplitude
        };
        samples.extend(std::iter::repeat_n(0.0, n_guard));
        samples.extend(std::iter::repeat_n(level, n_high));
        samples.extend(std::iter::repeat_n(0.0, n_guard));
    }
    SampledWaveform::new(samples, spec.symbol_rate, 0.0, AmplitudeUnit::Volts)
}

/// Modulate a chip waveform with a bipolar code: slot `j` holds `chip * code[j]`.
pub fn bpsk_modulate(
    code: &crate::codes::CodeSequence,
    chip: &SampledWaveform,
) -> Result<SampledWaveform> {
    let mut samples = Vec::with_capacity(code.len() * chip.len());
    for &c in code.chips() {
        samples.extend(chip.samples.iter().map(|&v| v * c as f64));
    }
    SampledWaveform::new(samples, chip.sample_rate, chip.t0, chip.unit)
}

/// Signal energy `E = dt * sum(x^2)` in `unit^2 * s`.
pub fn signal_energy(w: &SampledWaveform) -> f64 {
    w.samples.iter().map(|&v| v * v).sum::<f64>() / w.sample_rate
}

/// Highest frequency at which the amplitude spectrum still reaches
/// `rel_floor` times its maximum. Used to gate resampling.
pub fn occupied_bandwidth(w: &SampledWaveform, rel_floor: f64) -> f64 {
    let spec = rfft(&w.samples);
    let mags: Vec<f64> = spec.iter().map(|v| v.norm()).collect();
    let peak = mags.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak == 0.0 {
        return 0.0;
    }
    let thresh = rel_floor * peak;
    let df = w.sample_rate / w.len() as f64;
    mags.iter()
        .rposition(|&m| m >= thresh)
        .map(|k| k as f64 * df)
        .unwrap_or(0.0)
}

/// Continuous-spectrum samples `dt * DTFT(w)` at the non-negative rfft bins
/// of an `n_grid`-point record at `grid_rate`.
///
/// When the waveform rate is an integer multiple of `grid_rate` this is an
/// exact zero-padded FFT; otherwise it falls back to direct evaluation.
pub fn spectrum_on_grid(
    w: &SampledWaveform,
    n_grid: usize,
    grid_rate: f64,
) -> Result<Vec<num_complex::Complex64>> {
    use num_complex::Complex64;
    let dt = w.dt();
    let ratio = w.sample_rate / grid_rate;
    let ratio_int = ratio.round();
    if (ratio - ratio_int).abs() < 1e-9 && ratio_int >= 1.0 {
        let n_pad = n_grid * ratio_int as usize;
        if w.len() > n_pad {
            return Err(Error::InvalidArgument(format!(
                "waveform ({} samples) exceeds the {n_pad}-sample grid window",
                w.len()
            )));
        }
        let mut x = w.samples.clone();
        x.resize(n_pad, 0.0);
        let mut spec = rfft(&x);
        spec.truncate(n_grid / 2 + 1);
        for v in spec.iter_mut() {
            *v *= dt;
        }
        Ok(spec)
    } else {
        if w.duration() > n_grid as f64 / grid_rate {
            return Err(Error::InvalidArgument(
                "waveform exceeds the grid window".into(),
            ));
        }
        let bins = n_grid / 2 + 1;
        let df = grid_rate / n_grid as f64;
        let mut out = Vec::with_capacity(bins);
        for k in 0..bins {
            let omega = -2.0 * std::f64::consts::PI * (k as f64 * df) * dt;
            let rot = Complex64::from_polar(1.0, omega);
            let mut z = Complex64::new(dt, 0.0);
            let mut acc = Complex64::default();
            for &s in &w.samples {
                acc += z * s;
                z *= rot;
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// Zeroth-order modified Bessel function, power series.
fn bessel_i0(x: f64) -> f64 {
    let x2 = x * x / 4.0;
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= x2 / (k * k) as f64;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

const RESAMPLE_LOBES: f64 = 32.0;
const RESAMPLE_BETA: f64 = 10.0;

/// Band-limited resampling by Kaiser-windowed sinc interpolation.
///
/// Duration is preserved (`n_out = round(n * new_rate / old_rate)`). The
/// kernel cuts off at the lower of the two Nyquist rates, so in-band content
/// survives; content above `-40 dB` of the spectral peak beyond the new
/// Nyquist is rejected as an aliasing risk instead of being folded.
pub fn resample(w: &SampledWaveform, new_rate: f64) -> Result<SampledWaveform> {
    if !(new_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "new_rate must be positive, got {new_rate}"
        )));
    }
    if new_rate == w.sample_rate {
        return Ok(w.clone());
    }
    if new_rate < w.sample_rate {
        let occupied = occupied_bandwidth(w, 1e-2);
        if occupied > new_rate / 2.0 {
            return Err(Error::AliasingRisk {
                occupied_hz: occupied,
            });
        }
    }
    let n_in = w.len();
    let n_out = ((n_in as f64) * new_rate / w.sample_rate).round().max(1.0) as usize;
    let fc = 0.5 * w.sample_rate.min(new_rate);
    let t_half = RESAMPLE_LOBES / (2.0 * fc);
    let i0_beta = bessel_i0(RESAMPLE_BETA);
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out {
        let t = m as f64 / new_rate;
        let n_lo = ((t - t_half) * w.sample_rate).ceil().max(0.0) as usize;
        let n_hi = (((t + t_half) * w.sample_rate).floor() as usize).min(n_in - 1);
        let mut acc = 0.0;
        for n in n_lo..=n_hi {
            let tau = t - n as f64 / w.sample_rate;
            let x = 2.0 * fc * tau;
            let sinc = if x.abs() < 1e-12 {
                1.0
            } else {
                (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            };
            let r = tau / t_half;
            let win = bessel_i0(RESAMPLE_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            acc += w.samples[n] * 2.0 * fc * sinc * win;
        }
        out.push(acc / w.sample_rate);
    }
    SampledWaveform::new(out, new_rate, w.t0, w.unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{golay_pair, CodeSequence};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn pwm_two_cycles_default_pattern() {
        let w = synth_pwm_pulse(2.0, &PwmSpec::default()).unwrap();
        assert_eq!(w.len(), 4 * 32);
        for hc in 0..4 {
            let level = if hc % 2 == 0 { 70.0 } else { -70.0 };
            let s = &w.samples[hc * 32..(hc + 1) * 32];
            assert!(s[..6].iter().all(|&v| v == 0.0));
            assert!(s[6..26].iter().all(|&v| v == level));
            assert!(s[26..].iter().all(|&v| v == 0.0));
        }
        let max = w.samples.iter().cloned().fold(f64::MIN, f64::max);
        let min = w.samples.iter().cloned().fold(f64::MAX, f64::min);
        assert_eq!(max - min, 140.0);
    }

    #[test]
    fn pwm_half_cycle_is_single_positive() {
        let w = synth_pwm_pulse(0.5, &PwmSpec::default()).unwrap();
        assert_eq!(w.len(), 32);
        assert!(w.samples.iter().all(|&v| v >= 0.0));
        assert_eq!(w.samples.iter().filter(|&&v| v == 70.0).count(), 20);
    }

    #[test]
    fn pwm_zero_amplitude() {
        let spec = PwmSpec {
            amplitude: 0.0,
            ..PwmSpec::default()
        };
        let w = synth_pwm_pulse(1.0, &spec).unwrap();
        assert_eq!(w.len(), 64);
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pwm_rejects_bad_cycles_and_spec() {
        assert!(synth_pwm_pulse(0.75, &PwmSpec::default()).is_err());
        assert!(synth_pwm_pulse(0.0, &PwmSpec::default()).is_err());
        let bad = PwmSpec {
            zero_guard: 13.0e-9,
            ..PwmSpec::default()
        };
        assert!(synth_pwm_pulse(1.0, &bad).is_err());
    }

    #[test]
    fn pwm_partitions_into_half_cycles() {
        for k in 1..=8u32 {
            let cycles = k as f64 * 0.5;
            let w = synth_pwm_pulse(cycles, &PwmSpec::default()).unwrap();
            assert_eq!(w.len() % 32, 0);
            assert_eq!(w.len() / 32, k as usize);
        }
    }

    #[test]
    fn energy_of_constant_and_zero() {
        let q = 100;
        let w = SampledWaveform::new(vec![1.0; q], 80.0e6, 0.0, AmplitudeUnit::Lsb).unwrap();
        assert_relative_eq!(signal_energy(&w), q as f64 / 80.0e6, max_relative = 1e-12);
        let z = SampledWaveform::new(vec![0.0; 8], 80.0e6, 0.0, AmplitudeUnit::Lsb).unwrap();
        assert_eq!(signal_energy(&z), 0.0);
    }

    #[test]
    fn drive_energy_doubles_per_half_cycle() {
        let e1 = signal_energy(&synth_pwm_pulse(1.0, &PwmSpec::default()).unwrap());
        let e05 = signal_energy(&synth_pwm_pulse(0.5, &PwmSpec::default()).unwrap());
        assert_relative_eq!(e1 / e05, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn bpsk_identity_and_flip() {
        let chip = synth_pwm_pulse(1.0, &PwmSpec::default()).unwrap();
        let one = CodeSequence::new(vec![1]).unwrap();
        assert_eq!(bpsk_modulate(&one, &chip).unwrap().samples, chip.samples);
        let pm = CodeSequence::new(vec![1, -1]).unwrap();
        let w = bpsk_modulate(&pm, &chip).unwrap();
        assert_eq!(&w.samples[..chip.len()], &chip.samples[..]);
        let flipped: Vec<f64> = chip.samples.iter().map(|v| -v).collect();
        assert_eq!(&w.samples[chip.len()..], &flipped[..]);
    }

    #[test]
    fn coded_train_duration() {
        let chip = synth_pwm_pulse(2.0, &PwmSpec::default()).unwrap();
        let (a, _) = golay_pair(8).unwrap();
        let w = bpsk_modulate(&a, &chip).unwrap();
        assert_relative_eq!(w.duration(), 8.0 * 2.0 / 7.5e6, max_relative = 1e-12);
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let w = synth_pwm_pulse(1.0, &PwmSpec::default()).unwrap();
        let r = resample(&w, w.sample_rate).unwrap();
        assert_eq!(r.samples, w.samples);
    }

    #[test]
    fn resample_tone_preserves_amplitude() {
        // 7.5 MHz tone on the 480 MHz grid, downsampled to 80 MHz
        let n = 4800;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 7.5e6 * i as f64 / 480.0e6).sin())
            .collect();
        let w = SampledWaveform::new(x, 480.0e6, 0.0, AmplitudeUnit::Volts).unwrap();
        let r = resample(&w, 80.0e6).unwrap();
        assert_eq!(r.len(), 800);
        let mid = &r.samples[200..600];
        let peak = mid.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert_abs_diff_eq!(peak, 1.0, epsilon = 0.01);
    }

    #[test]
    fn resample_round_trip_in_band() {
        // compact in-band signal: Gaussian-windowed 10 MHz burst at 80 MHz
        let n = 512;
        let fs = 80.0e6;
        let sigma = 0.5e-6;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = (i as f64 - n as f64 / 2.0) / fs;
                (-0.5 * (t / sigma).powi(2)).exp() * (2.0 * std::f64::consts::PI * 10.0e6 * t).sin()
            })
            .collect();
        let w = SampledWaveform::new(x, fs, 0.0, AmplitudeUnit::Volts).unwrap();
        let up = resample(&w, 160.0e6).unwrap();
        let back = resample(&up, 80.0e6).unwrap();
        let num: f64 = back
            .samples
            .iter()
            .zip(&w.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = w.samples.iter().map(|v| v * v).sum();
        assert!(
            (num / den).sqrt() < 1e-3,
            "round-trip rel RMS {}",
            (num / den).sqrt()
        );
    }

    #[test]
    fn resample_flags_aliasing() {
        // raw PWM carries harmonics far above 40 MHz
        let w = synth_pwm_pulse(2.0, &PwmSpec::default()).unwrap();
        match resample(&w, 80.0e6) {
            Err(Error::AliasingRisk { occupied_hz }) => assert!(occupied_hz > 40.0e6),
            other => panic!("expected aliasing error, got {other:?}"),
        }
    }

    #[test]
    fn waveform_parseval() {
        let w = synth_pwm_pulse(1.5, &PwmSpec::default()).unwrap();
        let spec = rfft(&w.samples);
        let n = w.len();
        let mut sum_sq = 0.0;
        for (k, v) in spec.iter().enumerate() {
            let weight = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            sum_sq += weight * v.norm_sqr();
        }
        let e_spec = sum_sq / n as f64 / w.sample_rate;
        assert_relative_eq!(e_spec, signal_energy(&w), max_relative = 1e-6);
    }

    proptest! {
        #[test]
        fn bpsk_energy_additivity(len in 1usize..6, chips in 1usize..20) {
            let code_len = 1usize << len;
            let (a, _) = golay_pair(code_len).unwrap();
            let x: Vec<f64> = (0..chips * 4).map(|i| ((i * 7 + len) % 5) as f64 - 2.0).collect();
            let chip = SampledWaveform::new(x, 480.0e6, 0.0, AmplitudeUnit::Volts).unwrap();
            let train = bpsk_modulate(&a, &chip).unwrap();
            let lhs = signal_energy(&train);
            let rhs = code_len as f64 * signal_energy(&chip);
            if rhs > 0.0 {
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
            }
        }
    }
}
