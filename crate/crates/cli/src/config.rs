//! Run configuration: plain TOML with one section per subsystem.
//!
//! The embedded default reproduces the reference measurement setup: a
//! 128-element 0.1 mm-pitch array at 7.5 MHz / 70% bandwidth, 80 MHz receive
//! over 95 us, a 0.5 dB/cm/MHz phantom at 1450 m/s with four pin gratings
//! and a steel plate at 5 cm.

use anyhow::{bail, Context};
use echolab_core::acquisition::{ArrayGeometry, ReceiveConfig};
use echolab_core::propagation::{Medium, Phantom, PinTarget, PlateTarget};
use echolab_core::transducer::ElementModel;
use echolab_core::waveform::PwmSpec;
use serde::Deserialize;
use std::path::Path;

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    pub array: ArraySection,
    pub transducer: TransducerSection,
    pub medium: MediumSection,
    pub phantom: PhantomSection,
    pub drive: DriveSection,
    pub receive: ReceiveSection,
    pub raster: RasterSection,
    #[serde(default, rename = "scheme")]
    pub schemes: Vec<SchemeSection>,
}

fn default_out_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub n_elements: usize,
    pub pitch_m: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransducerSection {
    pub center_freq_hz: f64,
    pub fractional_bandwidth: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    pub sound_speed_m_s: f64,
    pub attenuation_db_cm_mhz: f64,
    pub impedance_mrayl: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    pub grating_depths_m: Vec<f64>,
    pub pins_per_grating: usize,
    pub pin_spacing_m: f64,
    pub pin_radius_m: f64,
    pub pin_impedance_mrayl: f64,
    #[serde(default)]
    pub plate_depth_m: Option<f64>,
    #[serde(default)]
    pub plate_impedance_mrayl: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub symbol_rate_hz: f64,
    pub zero_guard_s: f64,
    pub amplitude_v: f64,
    /// Chip inventory for `synth` and the waveform-level analyses.
    pub cycles: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiveSection {
    pub sample_rate_hz: f64,
    pub window_s: f64,
    pub fixed_gain_db: f64,
    pub tgc_db_per_cm: f64,
    pub adc_bits: u32,
    pub noise_rms_lsb: f64,
    pub full_scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterSection {
    pub center_m: [f64; 2],
    pub extent_m: [f64; 2],
    pub spacing_m: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub name: String,
    /// "dw", "sta" or "sta_full".
    pub kind: String,
    /// Virtual-source distances for "dw"; one event per entry.
    #[serde(default)]
    pub r_v_m: Vec<f64>,
    /// Firing element for "sta".
    #[serde(default)]
    pub element: Option<usize>,
    pub cycles: f64,
    /// "none" or "golay8" (or "golayN" for other power-of-two lengths).
    #[serde(default = "default_code")]
    pub code: String,
    /// Grating depth for beamwidth profiling of this scheme.
    #[serde(default)]
    pub grating_depth_m: Option<f64>,
}

fn default_code() -> String {
    "none".into()
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<(Self, Vec<u8>)> {
        let bytes = match path {
            Some(p) => std::fs::read(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?,
            None => DEFAULT_CONFIG.as_bytes().to_vec(),
        };
        let text = std::str::from_utf8(&bytes).context("config is not utf-8")?;
        let cfg: RunConfig = toml::from_str(text).context("cannot parse config")?;
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    fn validate(&self) -> anyhow::Result<()> {
        self.geometry()?;
        self.receive_config(self.seed)
            .validate()
            .context("receive section")?;
        self.pwm_spec()
            .half_cycle_counts()
            .context("drive section")?;
        for s in &self.schemes {
            match s.kind.as_str() {
                "dw" => {
                    if s.r_v_m.is_empty() {
                        bail!("scheme '{}': kind dw needs r_v_m", s.name);
                    }
                }
                "sta" => {
                    if s.element.is_none() {
                        bail!("scheme '{}': kind sta needs element", s.name);
                    }
                }
                "sta_full" => {}
                other => bail!("scheme '{}': unknown kind '{other}'", s.name),
            }
            if s.code != "none" {
                code_length(&s.code).with_context(|| format!("scheme '{}'", s.name))?;
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> anyhow::Result<ArrayGeometry> {
        Ok(ArrayGeometry::new(
            self.array.n_elements,
            self.array.pitch_m,
        )?)
    }

    pub fn medium(&self) -> anyhow::Result<Medium> {
        Ok(Medium::new(
            self.medium.sound_speed_m_s,
            self.medium.attenuation_db_cm_mhz,
            self.medium.impedance_mrayl,
        )?)
    }

    pub fn phantom(&self) -> anyhow::Result<Phantom> {
        let p = &self.phantom;
        let mut pins = Vec::new();
        for &depth in &p.grating_depths_m {
            let half = (p.pins_per_grating as i64 - 1) / 2;
            for i in 0..p.pins_per_grating as i64 {
                let lateral = (i - half) as f64 * p.pin_spacing_m;
                pins.push(PinTarget {
                    position: [lateral, depth],
                    radius: p.pin_radius_m,
                    impedance_mrayl: p.pin_impedance_mrayl,
                });
            }
        }
        let plates = match (p.plate_depth_m, p.plate_impedance_mrayl) {
            (Some(d), Some(z)) => vec![PlateTarget {
                depth: d,
                impedance_mrayl: z,
            }],
            (None, None) => vec![],
            _ => bail!("plate_depth_m and plate_impedance_mrayl must be given together"),
        };
        Ok(Phantom::new(self.medium()?, pins, plates)?)
    }

    pub fn pwm_spec(&self) -> PwmSpec {
        let half = 1.0 / (2.0 * self.transducer.center_freq_hz);
        PwmSpec {
            symbol_rate: self.drive.symbol_rate_hz,
            zero_guard: self.drive.zero_guard_s,
            high_time: half - 2.0 * self.drive.zero_guard_s,
            amplitude: self.drive.amplitude_v,
            carrier_freq: self.transducer.center_freq_hz,
        }
    }

    pub fn receive_config(&self, seed: u64) -> ReceiveConfig {
        let r = &self.receive;
        ReceiveConfig {
            sample_rate: r.sample_rate_hz,
            window: r.window_s,
            fixed_gain_db: r.fixed_gain_db,
            tgc_db_per_cm: r.tgc_db_per_cm,
            adc_bits: r.adc_bits,
            noise_rms_lsb: r.noise_rms_lsb,
            full_scale: r.full_scale,
            seed,
        }
    }

    pub fn element_model(&self) -> anyhow::Result<ElementModel> {
        let n_fft = self.receive_config(0).n_samples();
        Ok(ElementModel::uniform(
            self.transducer.center_freq_hz,
            self.transducer.fractional_bandwidth,
            n_fft,
            self.receive.sample_rate_hz,
            self.array.n_elements / 2,
        )?)
    }
}

/// Parse a code name like "golay8" into its length.
pub fn code_length(code: &str) -> anyhow::Result<usize> {
    let rest = code
        .strip_prefix("golay")
        .with_context(|| format!("unknown code '{code}' (expected 'none' or 'golayN')"))?;
    let n: usize = rest
        .parse()
        .with_context(|| format!("bad code length in '{code}'"))?;
    if !n.is_power_of_two() {
        bail!("code length {n} is not a power of two");
    }
    Ok(n)
}
