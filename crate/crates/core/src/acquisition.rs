//! Scanner simulation: array geometry, transmit schemes, receive chain.
//!
//! Echoes are assembled in the frequency domain on the receive grid, where
//! sub-sample path delays are exact phase factors. Per transmit event the
//! pipeline is: drive spectrum -> two-way transfer -> per-target legs
//! (delay, cylindrical spreading, reflection, attenuation) -> coherent sum
//! per receive element -> inverse transform -> fixed gain + TGC -> additive
//! noise -> integer quantization with clip accounting.
//!
//! Targets factor as (transmit-leg sum per target) x (receive leg per
//! element), so a diverging-wave shot over all firings costs O(targets x
//! elements) leg evaluations, not O(targets x elements^2). Plate reflectors
//! depend on both endpoints and are evaluated per element pair.

use crate::codes::{is_complementary_pair, CodeSequence};
use crate::error::{Error, Result};
use crate::fft::irfft;
use crate::propagation::{reflection_coefficient, Phantom, NEPERS_PER_DB};
use crate::transducer::{ElementModel, ElementVariation};
use crate::waveform::{bpsk_modulate, spectrum_on_grid, AmplitudeUnit, SampledWaveform};
use num_complex::Complex64;
use rayon::prelude::*;

/// Uniform linear array on the x-axis, centered at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub n_elements: usize,
    /// Element pitch in meters.
    pub pitch: f64,
}

impl ArrayGeometry {
    pub fn new(n_elements: usize, pitch: f64) -> Result<Self> {
        if n_elements < 2 || !(pitch > 0.0) {
            return Err(Error::InvalidArgument("bad array geometry".into()));
        }
        Ok(Self { n_elements, pitch })
    }

    /// The measurement array: 128 elements at 0.1 mm pitch.
    pub fn probe_128() -> Self {
        ArrayGeometry {
            n_elements: 128,
            pitch: 0.1e-3,
        }
    }

    /// Lateral position of element `i`: `(i - (n-1)/2) * pitch`.
    pub fn element_x(&self, i: usize) -> f64 {
        (i as f64 - (self.n_elements as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n_elements).map(|i| self.element_x(i)).collect()
    }

    /// Full aperture `(n-1) * pitch`.
    pub fn aperture(&self) -> f64 {
        (self.n_elements as f64 - 1.0) * self.pitch
    }
}

/// Transmit focusing variant.
#[derive(Debug, Clone, PartialEq)]
pub enum TxKind {
    /// Single-element firing for synthetic transmit aperture imaging.
    Sta { element: usize },
    /// Diverging wave from a virtual line source `virtual_source` meters
    /// behind the aperture. `delay_offset` adds a common shift to every
    /// firing time; images are invariant to it when the beamformer is told
    /// the same offset.
    DivergingWave {
        virtual_source: f64,
        delay_offset: f64,
    },
}

impl TxKind {
    pub fn dw(virtual_source: f64) -> Self {
        TxKind::DivergingWave {
            virtual_source,
            delay_offset: 0.0,
        }
    }

    pub fn validate(&self, geom: &ArrayGeometry) -> Result<()> {
        match self {
            TxKind::Sta { element } => {
                if *element >= geom.n_elements {
                    return Err(Error::InvalidArgument(format!(
                        "STA element {element} outside the {}-element array",
                        geom.n_elements
                    )));
                }
            }
            TxKind::DivergingWave { virtual_source, .. } => {
                if !(*virtual_source > 0.0) {
                    return Err(Error::InvalidArgument(
                        "virtual source distance must be positive".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A transmit event: focusing variant plus the electrical drive waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct TxScheme {
    pub kind: TxKind,
    pub drive: SampledWaveform,
}

/// Receive chain settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveConfig {
    /// ADC rate in Hz.
    pub sample_rate: f64,
    /// Receive phase length in seconds.
    pub window: f64,
    /// Fixed programmable gain in dB.
    pub fixed_gain_db: f64,
    /// Time-varying gain slope in dB/cm of depth.
    pub tgc_db_per_cm: f64,
    /// Signed ADC resolution; codes clip at +-(2^(bits-1) - 1).
    pub adc_bits: u32,
    /// White Gaussian noise at the ADC input, RMS in LSB.
    pub noise_rms_lsb: f64,
    /// Gained voltage that maps to the positive full-scale code.
    pub full_scale: f64,
    pub seed: u64,
}

impl Default for ReceiveConfig {
    /// 80 MHz over a 95 us window, 22 dB fixed gain, 2.3 dB/cm TGC, 12-bit
    /// ADC with 2 LSB noise. The full-scale level leaves headroom for coded
    /// diverging-wave shots on the default phantom without clipping.
    fn default() -> Self {
        ReceiveConfig {
            sample_rate: 80.0e6,
            window: 95.0e-6,
            fixed_gain_db: 22.0,
            tgc_db_per_cm: 2.3,
            adc_bits: 12,
            noise_rms_lsb: 2.0,
            full_scale: 1.0e6,
            seed: 0xd1a5,
        }
    }
}

impl ReceiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.window > 0.0) {
            return Err(Error::InvalidArgument(
                "rate and window must be positive".into(),
            ));
        }
        let n = self.sample_rate * self.window;
        if (n - n.round()).abs() > 1e-6 {
            return Err(Error::InvalidArgument(
                "sample_rate * window must be an integer sample count".into(),
            ));
        }
        if self.adc_bits < 2 || self.adc_bits > 16 {
            return Err(Error::InvalidArgument("adc_bits must be in 2..=16".into()));
        }
        if self.noise_rms_lsb < 0.0 || !(self.full_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "bad noise or full-scale setting".into(),
            ));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.sample_rate * self.window).round() as usize
    }

    pub fn max_code(&self) -> i32 {
        (1i32 << (self.adc_bits - 1)) - 1
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ReceiveConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Per-element receive records in integer LSB.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    /// Row-major `[element][sample]`.
    pub samples: Vec<i16>,
    pub n_elements: usize,
    pub n_samples: usize,
    /// Receiver sampling interval in seconds.
    pub dt: f64,
    pub scheme: TxScheme,
    pub config: ReceiveConfig,
}

impl ChannelData {
    pub fn trace(&self, element: usize) -> &[i16] {
        &self.samples[element * self.n_samples..(element + 1) * self.n_samples]
    }

    /// One element's record as a float waveform in LSB, starting at t = 0.
    pub fn trace_waveform(&self, element: usize) -> SampledWaveform {
        SampledWaveform::new(
            self.trace(element).iter().map(|&v| v as f64).collect(),
            1.0 / self.dt,
            0.0,
            AmplitudeUnit::Lsb,
        )
        .expect("channel data traces are never empty")
    }
}

/// Saturation accounting for one simulated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimReport {
    /// Samples that hit the ADC rails and were clipped.
    pub clipped: usize,
}

impl SimReport {
    pub fn saturated(&self) -> bool {
        self.clipped > 0
    }
}

/// Diverging-wave firing delays `(sqrt(r_v^2 + x_i^2) - r_v)/c`, shifted so
/// the earliest element fires at zero.
pub fn dw_delays(r_v: f64, geom: &ArrayGeometry, c: f64) -> Result<Vec<f64>> {
    if !(r_v > 0.0) {
        return Err(Error::InvalidArgument(
            "virtual source distance must be positive".into(),
        ));
    }
    let raw: Vec<f64> = (0..geom.n_elements)
        .map(|i| {
            let x = geom.element_x(i);
            ((r_v * r_v + x * x).sqrt() - r_v) / c
        })
        .collect();
    let min = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(raw.into_iter().map(|t| t - min).collect())
}

/// The shift removed by [`dw_delays`]' min-zero normalization; the beamformer
/// subtracts the same amount from its virtual-source transmit times.
pub fn dw_delay_shift(r_v: f64, geom: &ArrayGeometry, c: f64) -> f64 {
    (0..geom.n_elements)
        .map(|i| {
            let x = geom.element_x(i);
            ((r_v * r_v + x * x).sqrt() - r_v) / c
        })
        .fold(f64::INFINITY, f64::min)
}

/// SplitMix64 step; derives independent substream seeds from one master seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// One propagation leg accumulated over the uniform frequency grid by phasor
/// recurrence: amplitude `amp`, total delay `delay_s`, attenuated over
/// `atten_cm` of path at `alpha_np_cm_mhz` nepers/cm/MHz.
struct Leg {
    amp: f64,
    delay_s: f64,
    atten_cm: f64,
}

struct GridCtx {
    bins: usize,
    df: f64,
    alpha_np: f64,
}

impl GridCtx {
    /// `acc[k] (+)= leg(k)` for every bin, via one complex multiply per bin.
    fn accumulate(&self, leg: &Leg, acc: &mut [Complex64]) {
        let decay = (-self.alpha_np * (self.df / 1.0e6) * leg.atten_cm).exp();
        let step =
            Complex64::from_polar(decay, -2.0 * std::f64::consts::PI * self.df * leg.delay_s);
        let mut z = Complex64::new(leg.amp, 0.0);
        for v in acc.iter_mut().take(self.bins) {
            *v += z;
            z *= step;
        }
    }

    /// `acc[k] += gamma * t[k] * leg(k)`.
    fn accumulate_product(&self, leg: &Leg, gamma: f64, t: &[Complex64], acc: &mut [Complex64]) {
        let decay = (-self.alpha_np * (self.df / 1.0e6) * leg.atten_cm).exp();
        let step =
            Complex64::from_polar(decay, -2.0 * std::f64::consts::PI * self.df * leg.delay_s);
        let mut z = Complex64::new(leg.amp * gamma, 0.0);
        for (v, tk) in acc.iter_mut().zip(t.iter()).take(self.bins) {
            *v += z * tk;
            z *= step;
        }
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Simulate one transmit event. See [`simulate_with_variation`].
pub fn simulate(
    phantom: &Phantom,
    geom: &ArrayGeometry,
    scheme: &TxScheme,
    element: &ElementModel,
    cfg: &ReceiveConfig,
) -> Result<(ChannelData, SimReport)> {
    simulate_with_variation(phantom, geom, scheme, element, cfg, None)
}

/// Simulate one transmit event with optional per-element sensitivity spread.
///
/// For each target the chain is drive -> two-way transfer -> transmit legs
/// (firing delay, spreading, attenuation) -> reflection -> receive leg ->
/// sum at each element; then fixed gain plus TGC, seeded white noise, and
/// quantization. Clipped samples are counted in the report rather than
/// silently saturating.
pub fn simulate_with_variation(
    phantom: &Phantom,
    geom: &ArrayGeometry,
    scheme: &TxScheme,
    element: &ElementModel,
    cfg: &ReceiveConfig,
    variation: Option<&ElementVariation>,
) -> Result<(ChannelData, SimReport)> {
    cfg.validate()?;
    scheme.kind.validate(geom)?;
    let n_s = cfg.n_samples();
    let bins = n_s / 2 + 1;
    let fs = cfg.sample_rate;
    let df = fs / n_s as f64;
    let c = phantom.medium.sound_speed;
    let ctx = GridCtx {
        bins,
        df,
        alpha_np: phantom.medium.attenuation_db_cm_mhz * NEPERS_PER_DB,
    };

    // drive spectrum through H2, shared by every path
    let drive_spec = spectrum_on_grid(&scheme.drive, n_s, fs)?;
    let mut base = vec![Complex64::default(); bins];
    for (k, b) in base.iter_mut().enumerate() {
        *b = drive_spec[k] * element.two_way.sample_at(k as f64 * df);
    }

    let per_element: Vec<(f64, f64)> = match variation {
        Some(v) => v.per_element(geom.n_elements),
        None => vec![(1.0, 0.0); geom.n_elements],
    };

    // firing delays per element; None marks elements that do not fire
    let firings: Vec<Option<f64>> = match &scheme.kind {
        TxKind::Sta { element: e } => (0..geom.n_elements)
            .map(|i| {
                if i == *e {
                    Some(per_element[i].1)
                } else {
                    None
                }
            })
            .collect(),
        TxKind::DivergingWave {
            virtual_source,
            delay_offset,
        } => {
            let delays = dw_delays(*virtual_source, geom, c)?;
            (0..geom.n_elements)
                .map(|i| Some(delays[i] + delay_offset + per_element[i].1))
                .collect()
        }
    };

    // transmit-leg sums per pin
    let tx_sums: Vec<Vec<Complex64>> = phantom
        .pins
        .par_iter()
        .map(|pin| {
            let mut acc = vec![Complex64::default(); bins];
            for i in 0..geom.n_elements {
                if let Some(tau) = firings[i] {
                    let r1 = distance([geom.element_x(i), 0.0], pin.position);
                    let leg = Leg {
                        amp: per_element[i].0 / r1.sqrt(),
                        delay_s: tau + r1 / c,
                        atten_cm: r1 * 100.0,
                    };
                    ctx.accumulate(&leg, &mut acc);
                }
            }
            acc
        })
        .collect();

    let gammas: Vec<f64> = phantom
        .pins
        .iter()
        .map(|p| reflection_coefficient(phantom.medium.impedance_mrayl, p.impedance_mrayl))
        .collect::<Result<_>>()?;
    let plate_gammas: Vec<f64> = phantom
        .plates
        .iter()
        .map(|p| reflection_coefficient(phantom.medium.impedance_mrayl, p.impedance_mrayl))
        .collect::<Result<_>>()?;

    // receive gain curve: fixed + TGC ramp over echo depth c*t/2
    let max_depth_cm = 100.0 * c * cfg.window / 2.0;
    let gain: Vec<f64> = (0..n_s)
        .map(|q| {
            let depth_cm = (100.0 * c * q as f64 / fs / 2.0).min(max_depth_cm);
            10f64.powf((cfg.fixed_gain_db + cfg.tgc_db_per_cm * depth_cm) / 20.0)
        })
        .collect();

    let max_code = cfg.max_code();
    let lsb_per_volt = max_code as f64 / cfg.full_scale;

    // per receive element: assemble spectrum, invert, gain, noise, quantize
    let rows: Vec<(Vec<i16>, usize)> = (0..geom.n_elements)
        .into_par_iter()
        .map(|j| {
            let rx_pos = [geom.element_x(j), 0.0];
            let (rx_gain, rx_delay) = per_element[j];
            let mut spec = vec![Complex64::default(); bins];
            for (t_pin, (pin, &gamma)) in tx_sums.iter().zip(phantom.pins.iter().zip(&gammas)) {
                let r2 = distance(rx_pos, pin.position);
                let leg = Leg {
                    amp: rx_gain / r2.sqrt(),
                    delay_s: rx_delay + r2 / c,
                    atten_cm: r2 * 100.0,
                };
                ctx.accumulate_product(&leg, gamma, t_pin, &mut spec);
            }
            for (plate, &gamma) in phantom.plates.iter().zip(&plate_gammas) {
                // specular bounce via the image of the receive element
                for i in 0..geom.n_elements {
                    if let Some(tau) = firings[i] {
                        let dx = geom.element_x(i) - rx_pos[0];
                        let path = (dx * dx + (2.0 * plate.depth).powi(2)).sqrt();
                        let leg = Leg {
                            amp: per_element[i].0 * rx_gain * gamma * 2.0 / path,
                            delay_s: tau + rx_delay + path / c,
                            atten_cm: path * 100.0,
                        };
                        ctx.accumulate(&leg, &mut spec);
                    }
                }
            }
            for (v, b) in spec.iter_mut().zip(&base) {
                *v *= b;
            }
            let volts = irfft(&spec, n_s);

            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, j as u64));
            let mut clipped = 0usize;
            let row: Vec<i16> = volts
                .iter()
                .enumerate()
                .map(|(q, &v)| {
                    let noise: f64 = if cfg.noise_rms_lsb > 0.0 {
                        let g: f64 = rng.sample(rand_distr::StandardNormal);
                        g * cfg.noise_rms_lsb
                    } else {
                        0.0
                    };
                    let code = (v * fs * gain[q] * lsb_per_volt + noise).round();
                    if code > max_code as f64 {
                        clipped += 1;
                        max_code as i16
                    } else if code < -max_code as f64 {
                        clipped += 1;
                        (-max_code) as i16
                    } else {
                        code as i16
                    }
                })
                .collect();
            (row, clipped)
        })
        .collect();

    let mut samples = Vec::with_capacity(geom.n_elements * n_s);
    let mut clipped = 0;
    for (row, c) in rows {
        samples.extend_from_slice(&row);
        clipped += c;
    }
    if clipped > 0 {
        log::warn!("simulate: {clipped} samples clipped at the ADC rails");
    }
    Ok((
        ChannelData {
            samples,
            n_elements: geom.n_elements,
            n_samples: n_s,
            dt: 1.0 / fs,
            scheme: scheme.clone(),
            config: cfg.clone(),
        },
        SimReport { clipped },
    ))
}

/// Simulate the two shots of a complementary-coded transmission.
///
/// Both shots share the geometry and receive settings; their noise seeds are
/// two draws from the master seed's stream, and the returned pair is tagged
/// (A, B) for downstream combining.
#[allow(clippy::too_many_arguments)]
pub fn golay_transmit_pair(
    phantom: &Phantom,
    geom: &ArrayGeometry,
    kind: &TxKind,
    chip: &SampledWaveform,
    codes: (&CodeSequence, &CodeSequence),
    element: &ElementModel,
    cfg: &ReceiveConfig,
) -> Result<((ChannelData, SimReport), (ChannelData, SimReport))> {
    if !is_complementary_pair(codes.0, codes.1) {
        return Err(Error::InvalidArgument(
            "codes do not form a complementary pair".into(),
        ));
    }
    let scheme_a = TxScheme {
        kind: kind.clone(),
        drive: bpsk_modulate(codes.0, chip)?,
    };
    let scheme_b = TxScheme {
        kind: kind.clone(),
        drive: bpsk_modulate(codes.1, chip)?,
    };
    let cfg_a = cfg.with_seed(derive_seed(cfg.seed, 0xA));
    let cfg_b = cfg.with_seed(derive_seed(cfg.seed, 0xB));
    let a = simulate(phantom, geom, &scheme_a, element, &cfg_a)?;
    let b = simulate(phantom, geom, &scheme_b, element, &cfg_b)?;
    Ok((a, b))
}
