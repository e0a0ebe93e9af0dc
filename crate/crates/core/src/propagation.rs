//! The acoustic path: cylindrical spreading, reflection, frequency-dependent
//! attenuation, and pin-target scattering.
//!
//! Array elements are long in the transverse direction, so near-field
//! propagation is cylindrical: each leg contributes `1/sqrt(r)` and a phase
//! `e^{-jkr}`. Pins far below a wavelength in diameter reflect
//! omnidirectionally with a frequency-independent impedance-contrast
//! coefficient; absolute target strength cancels out of every normalized
//! metric, so no modal scattering series is attempted.

use crate::error::{Error, Result};
use crate::fft::{irfft, rfft, rfft_freqs};
use crate::waveform::SampledWaveform;
use num_complex::Complex64;

/// Nepers per decibel (20/ln 10 dB per neper, inverted).
pub const NEPERS_PER_DB: f64 = 1.0 / 8.6859;

/// Homogeneous propagation medium.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium {
    /// Sound speed in m/s.
    pub sound_speed: f64,
    /// Attenuation in dB/cm/MHz.
    pub attenuation_db_cm_mhz: f64,
    /// Characteristic impedance in MRayl.
    pub impedance_mrayl: f64,
}

impl Medium {
    pub fn new(sound_speed: f64, attenuation_db_cm_mhz: f64, impedance_mrayl: f64) -> Result<Self> {
        if !(sound_speed > 0.0) || attenuation_db_cm_mhz < 0.0 || !(impedance_mrayl > 0.0) {
            return Err(Error::InvalidArgument("bad medium parameters".into()));
        }
        Ok(Self {
            sound_speed,
            attenuation_db_cm_mhz,
            impedance_mrayl,
        })
    }

    /// Rubber-based tissue-mimicking phantom material: 1450 m/s,
    /// 0.5 dB/cm/MHz, water-like 1.5 MRayl.
    pub fn tissue_phantom() -> Self {
        Medium {
            sound_speed: 1450.0,
            attenuation_db_cm_mhz: 0.5,
            impedance_mrayl: 1.5,
        }
    }

    /// Attenuation-free freshwater.
    pub fn freshwater() -> Self {
        Medium {
            sound_speed: 1450.0,
            attenuation_db_cm_mhz: 0.0,
            impedance_mrayl: 1.5,
        }
    }
}

/// A thin cylindrical line target normal to the imaging plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PinTarget {
    /// (lateral, depth) position in meters.
    pub position: [f64; 2],
    /// Filament radius in meters.
    pub radius: f64,
    /// Intrinsic impedance in MRayl.
    pub impedance_mrayl: f64,
}

impl PinTarget {
    /// 50 um diameter nylon monofilament (3 MRayl) at the given position.
    pub fn nylon(lateral: f64, depth: f64) -> Self {
        PinTarget {
            position: [lateral, depth],
            radius: 25.0e-6,
            impedance_mrayl: 3.0,
        }
    }
}

/// A flat specular reflector spanning the lateral extent at a fixed depth.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateTarget {
    /// Depth of the reflecting face in meters.
    pub depth: f64,
    /// Intrinsic impedance in MRayl.
    pub impedance_mrayl: f64,
}

/// The test object: a medium plus pins and plates.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub medium: Medium,
    pub pins: Vec<PinTarget>,
    pub plates: Vec<PlateTarget>,
}

impl Phantom {
    pub fn new(medium: Medium, pins: Vec<PinTarget>, plates: Vec<PlateTarget>) -> Result<Self> {
        for p in &pins {
            if p.position[1] <= 0.0 {
                return Err(Error::InvalidArgument("pin depth must be positive".into()));
            }
            if !(p.radius > 0.0) || !(p.impedance_mrayl > 0.0) {
                return Err(Error::InvalidArgument("bad pin parameters".into()));
            }
        }
        for (i, a) in pins.iter().enumerate() {
            for b in pins.iter().skip(i + 1) {
                if a.position == b.position {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate pin position {:?}",
                        a.position
                    )));
                }
            }
        }
        for p in &plates {
            if p.depth <= 0.0 || !(p.impedance_mrayl > 0.0) {
                return Err(Error::InvalidArgument("bad plate parameters".into()));
            }
        }
        Ok(Self {
            medium,
            pins,
            plates,
        })
    }

    /// The default pin phantom: four horizontal gratings of 5 mm spaced
    /// nylon pins (nine per grating, spanning +-20 mm) at 20, 25, 40 and
    /// 45 mm depth, plus a steel plate at 5 cm.
    pub fn default_pin_grating() -> Phantom {
        let mut pins = Vec::new();
        for &depth in &[20.0e-3, 25.0e-3, 40.0e-3, 45.0e-3] {
            for i in -4i32..=4 {
                pins.push(PinTarget::nylon(i as f64 * 5.0e-3, depth));
            }
        }
        Phantom {
            medium: Medium::tissue_phantom(),
            pins,
            plates: vec![PlateTarget {
                depth: 50.0e-3,
                impedance_mrayl: 44.0,
            }],
        }
    }

    /// Single-grating variant used for beamwidth sweeps.
    pub fn single_grating(depth: f64) -> Phantom {
        let pins = (-4i32..=4)
            .map(|i| PinTarget::nylon(i as f64 * 5.0e-3, depth))
            .collect();
        Phantom {
            medium: Medium::tissue_phantom(),
            pins,
            plates: Vec::new(),
        }
    }
}

/// Apply `e^{-alpha f (2r)}` attenuation over a total path of
/// `round_trip_cm` centimeters, with `alpha_db` in dB/cm/MHz.
pub fn attenuation_filter(
    w: &SampledWaveform,
    round_trip_cm: f64,
    alpha_db: f64,
) -> Result<SampledWaveform> {
    if round_trip_cm < 0.0 {
        return Err(Error::InvalidArgument(
            "round trip must be non-negative".into(),
        ));
    }
    if alpha_db < 0.0 {
        return Err(Error::InvalidArgument(
            "attenuation must be non-negative".into(),
        ));
    }
    let n = w.len();
    let alpha_np = alpha_db * NEPERS_PER_DB;
    let mut spec = rfft(&w.samples);
    for (f, v) in rfft_freqs(n, w.sample_rate).iter().zip(spec.iter_mut()) {
        *v *= (-alpha_np * (f / 1.0e6) * round_trip_cm).exp();
    }
    SampledWaveform::new(irfft(&spec, n), w.sample_rate, w.t0, w.unit)
}

/// Cylindrical spreading amplitude for one leg of length `r` meters.
pub fn spread_loss(r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "spreading distance must be positive, got {r}"
        )));
    }
    Ok(1.0 / r.sqrt())
}

/// Pressure reflection coefficient between impedances `z1` and `z2` (MRayl).
pub fn reflection_coefficient(z1: f64, z2: f64) -> Result<f64> {
    if !(z1 > 0.0 && z2 > 0.0) {
        return Err(Error::InvalidArgument("impedances must be positive".into()));
    }
    Ok((z2 - z1) / (z2 + z1))
}

/// Wavenumber-radius product `ka = 2 pi f a / c`.
pub fn ka(radius: f64, freq: f64, sound_speed: f64) -> f64 {
    2.0 * std::f64::consts::PI * freq * radius / sound_speed
}

/// Monostatic pin echo: outbound spreading and phase, the impedance-contrast
/// reflection, then inbound spreading and phase, evaluated on the given
/// frequency grid. The pin scatters omnidirectionally; `scattering` can weight
/// it as a function of `ka` (identity by default, see [`pin_echo`]).
pub fn pin_echo_with_scattering(
    freqs: &[f64],
    tx_pressure: &[Complex64],
    element_pos: [f64; 2],
    pin: &PinTarget,
    medium: &Medium,
    scattering: impl Fn(f64) -> f64,
) -> Result<Vec<Complex64>> {
    if freqs.len() != tx_pressure.len() {
        return Err(Error::LengthMismatch(freqs.len(), tx_pressure.len()));
    }
    let dx = pin.position[0] - element_pos[0];
    let dz = pin.position[1] - element_pos[1];
    let r = (dx * dx + dz * dz).sqrt();
    if r == 0.0 {
        return Err(Error::InvalidArgument(
            "pin coincides with the element".into(),
        ));
    }
    let gamma = reflection_coefficient(medium.impedance_mrayl, pin.impedance_mrayl)?;
    let spread = spread_loss(r)?;
    let c = medium.sound_speed;
    Ok(freqs
        .iter()
        .zip(tx_pressure)
        .map(|(&f, p)| {
            let k = 2.0 * std::f64::consts::PI * f / c;
            let leg = spread * Complex64::from_polar(1.0, -k * r);
            p * leg * (gamma * scattering(ka(pin.radius, f, c))) * leg
        })
        .collect())
}

/// [`pin_echo_with_scattering`] with the default unit scattering weight.
pub fn pin_echo(
    freqs: &[f64],
    tx_pressure: &[Complex64],
    element_pos: [f64; 2],
    pin: &PinTarget,
    medium: &Medium,
) -> Result<Vec<Complex64>> {
    pin_echo_with_scattering(freqs, tx_pressure, element_pos, pin, medium, |_| 1.0)
}
