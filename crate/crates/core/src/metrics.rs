//! Quantitative characterization figures: spectral density and bandwidth,
//! line-spread and range resolution, beamwidth profiles, and SNR gain.
//!
//! Conventions used throughout:
//!
//! * The periodogram is the plain rectangular-window estimate
//!   `P(f) = |DFT|^2 / (N fs)` over `(-fs/2, fs/2]`, consistent with the
//!   sampled-energy definition `E = dt * sum(x^2)` (the density summed over
//!   the grid times `df * N * dt` reproduces `E`).
//! * Fractional bandwidth is the full width at half maximum of the density,
//!   by linear interpolation at the outermost half-maximum crossings around
//!   the main lobe, divided by the band midpoint.
//! * Image widths are read at -3 dB / -6 dB of the envelope amplitude by
//!   linear interpolation of the nearest crossings around the peak; the
//!   sidelobe level is the highest local maximum outside the contiguous
//!   -6 dB mainlobe region.

use crate::error::{Error, Result};
use crate::fft::fft_in_place;
use crate::processing::BeamformedImage;
use crate::waveform::SampledWaveform;
use num_complex::Complex64;

/// Rectangular-window power spectral density estimate over `(-fs/2, fs/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    /// Frequencies in Hz, ascending, spanning the two-sided band.
    pub freqs: Vec<f64>,
    /// Power per Hz; non-negative.
    pub density: Vec<f64>,
    /// Sample count of the underlying record.
    pub n: usize,
    /// Sampling rate in Hz.
    pub fs: f64,
}

impl PsdEstimate {
    /// Grid spacing `fs / n`.
    pub fn df(&self) -> f64 {
        self.fs / self.n as f64
    }

    /// Sampled energy implied by the density: `sum(P) * df * N * dt`.
    pub fn energy(&self) -> f64 {
        let n = self.n as f64;
        self.density.iter().sum::<f64>() * self.df() * n * (1.0 / self.fs)
    }

    /// The non-negative-frequency half as (freqs, density) slices.
    pub fn one_sided(&self) -> (&[f64], &[f64]) {
        let start = self.freqs.iter().position(|&f| f >= 0.0).unwrap_or(0);
        (&self.freqs[start..], &self.density[start..])
    }
}

/// Periodogram of a waveform: `P(f_k) = |X_k|^2 / (N fs)`, no windowing, no
/// averaging.
pub fn periodogram(w: &SampledWaveform) -> PsdEstimate {
    let n = w.len();
    let fs = w.sample_rate;
    let mut buf: Vec<Complex64> = w.samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(&mut buf);
    let scale = 1.0 / (n as f64 * fs);
    let df = fs / n as f64;
    // reorder bins to ascending frequency over (-fs/2, fs/2]
    let first_neg = n / 2 + 1;
    let mut freqs = Vec::with_capacity(n);
    let mut density = Vec::with_capacity(n);
    for (k, v) in buf.iter().enumerate().skip(first_neg) {
        freqs.push((k as f64 - n as f64) * df);
        density.push(v.norm_sqr() * scale);
    }
    for (k, v) in buf.iter().enumerate().take(first_neg) {
        freqs.push(k as f64 * df);
        density.push(v.norm_sqr() * scale);
    }
    PsdEstimate {
        freqs,
        density,
        n,
        fs,
    }
}

/// Full-width-at-half-maximum band of a power spectral density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthReport {
    /// `(f_hi - f_lo) / center`.
    pub fractional: f64,
    /// Band midpoint `(f_lo + f_hi) / 2`.
    pub center: f64,
    pub f_lo: f64,
    pub f_hi: f64,
}

/// Measure the half-maximum band of the positive-frequency density.
///
/// The band edges are the outermost half-maximum crossings around the global
/// maximum, linearly interpolated between grid points.
pub fn fractional_bandwidth(psd: &PsdEstimate) -> Result<BandwidthReport> {
    let (freqs, density) = psd.one_sided();
    if density.is_empty() {
        return Err(Error::InvalidArgument("empty density".into()));
    }
    let (_, &pmax) = density
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    if pmax <= 0.0 {
        return Err(Error::InvalidArgument(
            "density has no positive maximum".into(),
        ));
    }
    let half = pmax / 2.0;
    let i_lo = density.iter().position(|&p| p >= half).unwrap();
    let i_hi = density.iter().rposition(|&p| p >= half).unwrap();
    if i_lo == 0 || i_hi == density.len() - 1 {
        return Err(Error::InvalidArgument(
            "no half-maximum crossing within the grid".into(),
        ));
    }
    let f_lo = freqs[i_lo - 1]
        + (half - density[i_lo - 1]) / (density[i_lo] - density[i_lo - 1])
            * (freqs[i_lo] - freqs[i_lo - 1]);
    let f_hi = freqs[i_hi]
        + (half - density[i_hi]) / (density[i_hi + 1] - density[i_hi])
            * (freqs[i_hi + 1] - freqs[i_hi]);
    let center = 0.5 * (f_lo + f_hi);
    Ok(BandwidthReport {
        fractional: (f_hi - f_lo) / center,
        center,
        f_lo,
        f_hi,
    })
}

/// Power-weighted mean frequency of the positive half.
pub fn spectral_centroid(psd: &PsdEstimate) -> f64 {
    let (freqs, density) = psd.one_sided();
    let total: f64 = density.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    freqs.iter().zip(density).map(|(f, p)| f * p).sum::<f64>() / total
}

/// Interpolated crossing of `level` nearest the peak, scanning outward.
/// Returns the coordinate of the crossing.
fn crossing(coords: &[f64], values: &[f64], peak: usize, level: f64, step: isize) -> Result<f64> {
    let mut i = peak as isize;
    loop {
        let next = i + step;
        if next < 0 || next as usize >= values.len() {
            return Err(Error::InvalidArgument(format!(
                "level {level:.3e} is not crossed within the cut; widen the raster"
            )));
        }
        if values[next as usize] < level {
            let (a, b) = (i as usize, next as usize);
            let frac = (values[a] - level) / (values[a] - values[b]);
            return Ok(coords[a] + frac * (coords[b] - coords[a]));
        }
        i = next;
    }
}

/// Width of the lobe around `peak` at `level_db` below the peak value.
fn width_at_level(coords: &[f64], values: &[f64], peak: usize, level_db: f64) -> Result<f64> {
    let level = values[peak] * 10f64.powf(level_db / 20.0);
    let lo = crossing(coords, values, peak, level, -1)?;
    let hi = crossing(coords, values, peak, level, 1)?;
    Ok(hi - lo)
}

/// Highest local maximum outside the contiguous -6 dB mainlobe, in dB
/// relative to the peak. `None` when the profile has no sidelobe.
fn sidelobe_level_db(values: &[f64], peak: usize) -> Option<f64> {
    let level = values[peak] * 10f64.powf(-6.0 / 20.0);
    let mut lo = peak;
    while lo > 0 && values[lo - 1] >= level {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < values.len() && values[hi + 1] >= level {
        hi += 1;
    }
    let mut best: Option<f64> = None;
    for i in 1..values.len() - 1 {
        if i >= lo && i <= hi {
            continue;
        }
        if values[i] > values[i - 1] && values[i] >= values[i + 1] {
            best = Some(best.map_or(values[i], |b: f64| b.max(values[i])));
        }
    }
    best.map(|v| 20.0 * (v / values[peak]).log10())
}

/// Line-spread function measured on the lateral cut through an image peak.
#[derive(Debug, Clone, PartialEq)]
pub struct LsfReport {
    /// (lateral position, amplitude) along the cut.
    pub cut: Vec<(f64, f64)>,
    /// -3 dB width in meters.
    pub width_3db: f64,
    /// -6 dB width in meters.
    pub width_6db: f64,
    /// Highest sidelobe in dB relative to the mainlobe, when present.
    pub sidelobe_db: Option<f64>,
    /// (lateral, depth) of the image peak in meters.
    pub peak_position: [f64; 2],
}

/// Extract the lateral line-spread profile through the image maximum.
///
/// The peak must sit strictly inside the raster and the -3/-6 dB crossings
/// must exist on both sides, otherwise the measurement is refused.
pub fn lsf_extract(img: &BeamformedImage) -> Result<LsfReport> {
    let (ix, iz) = img.argmax();
    let nx = img.raster.nx();
    let nz = img.raster.nz();
    if ix == 0 || iz == 0 || ix == nx - 1 || iz == nz - 1 {
        return Err(Error::PeakOnBoundary(ix, iz));
    }
    let xs: Vec<f64> = (0..nx).map(|i| img.raster.x_at(i)).collect();
    let values: Vec<f64> = (0..nx).map(|i| img.at(i, iz)).collect();
    let width_3db = width_at_level(&xs, &values, ix, -3.0)?;
    let width_6db = width_at_level(&xs, &values, ix, -6.0)?;
    debug_assert!(width_3db <= width_6db);
    Ok(LsfReport {
        cut: xs.into_iter().zip(values.clone()).collect(),
        width_3db,
        width_6db,
        sidelobe_db: sidelobe_level_db(&values, ix),
        peak_position: [img.raster.x_at(ix), img.raster.z_at(iz)],
    })
}

/// Range (depth) resolution measured on the radial cut through an image peak.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    /// (depth position, amplitude) along the cut.
    pub cut: Vec<(f64, f64)>,
    /// -3 dB width in meters of image depth.
    pub width_3db_m: f64,
    /// The same width as two-way echo time, `width / (c/2)`.
    pub width_3db_s: f64,
    pub peak_position: [f64; 2],
}

/// Extract the depth cut through the image maximum.
pub fn range_resolution_extract(img: &BeamformedImage, sound_speed: f64) -> Result<RangeReport> {
    let (ix, iz) = img.argmax();
    let nx = img.raster.nx();
    let nz = img.raster.nz();
    if ix == 0 || iz == 0 || ix == nx - 1 || iz == nz - 1 {
        return Err(Error::PeakOnBoundary(ix, iz));
    }
    let zs: Vec<f64> = (0..nz).map(|i| img.raster.z_at(i)).collect();
    let values: Vec<f64> = (0..nz).map(|i| img.at(ix, i)).collect();
    let width_3db_m = width_at_level(&zs, &values, iz, -3.0)?;
    Ok(RangeReport {
        cut: zs.into_iter().zip(values).collect(),
        width_3db_m,
        width_3db_s: width_3db_m / (sound_speed / 2.0),
        peak_position: [img.raster.x_at(ix), img.raster.z_at(iz)],
    })
}

/// Per-pin echo amplitude along a grating, in dB relative to the profile max.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamwidthProfile {
    /// Pin lateral positions in meters.
    pub positions: Vec<f64>,
    /// Normalized amplitudes in dB; the maximum entry is 0 dB.
    pub amplitudes_db: Vec<f64>,
    /// Scheme label (virtual-source distance or STA).
    pub scheme: String,
}

impl BeamwidthProfile {
    /// Build from linear per-pin amplitudes; normalizes to the profile max.
    pub fn from_linear(positions: Vec<f64>, amplitudes: Vec<f64>, scheme: &str) -> Result<Self> {
        if positions.len() != amplitudes.len() {
            return Err(Error::LengthMismatch(positions.len(), amplitudes.len()));
        }
        let max = amplitudes.iter().fold(0.0f64, |m, &v| m.max(v));
        if max <= 0.0 {
            return Err(Error::InvalidArgument(
                "profile has no positive amplitude".into(),
            ));
        }
        Ok(Self {
            positions,
            amplitudes_db: amplitudes
                .iter()
                .map(|&a| 20.0 * (a / max).log10())
                .collect(),
            scheme: scheme.to_string(),
        })
    }
}

/// Peak amplitudes of per-pin beamformed windows, as a profile.
///
/// Each image must cover one pin; windows may not overlap laterally, since
/// overlapping pin responses make the per-pin peak ambiguous.
pub fn grating_profile(images: &[BeamformedImage], scheme: &str) -> Result<BeamwidthProfile> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("no pin windows supplied".into()));
    }
    let mut centers: Vec<(f64, f64)> = images
        .iter()
        .map(|im| (im.raster.center[0], im.raster.extent[0]))
        .collect();
    centers.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in centers.windows(2) {
        let gap = w[1].0 - w[0].0;
        if gap < (w[0].1 + w[1].1) / 2.0 {
            return Err(Error::InvalidArgument(
                "pin windows overlap; responses are not separable".into(),
            ));
        }
    }
    let positions: Vec<f64> = images.iter().map(|im| im.raster.center[0]).collect();
    let amplitudes: Vec<f64> = images.iter().map(|im| im.max_amplitude()).collect();
    BeamwidthProfile::from_linear(positions, amplitudes, scheme)
}

/// RMS of the samples within the time span `[t_start, t_end)`.
pub fn rms_in(w: &SampledWaveform, t_start: f64, t_end: f64) -> Result<f64> {
    let i0 = ((t_start - w.t0) * w.sample_rate).ceil().max(0.0) as usize;
    let i1 = (((t_end - w.t0) * w.sample_rate).floor() as usize).min(w.len());
    if i0 >= i1 {
        return Err(Error::InvalidArgument("empty noise region".into()));
    }
    let sum: f64 = w.samples[i0..i1].iter().map(|&v| v * v).sum();
    Ok((sum / (i1 - i0) as f64).sqrt())
}

/// Peak-to-noise SNR of one correlator output in dB.
pub fn snr_db(w: &SampledWaveform, noise_span: (f64, f64)) -> Result<f64> {
    let rms = rms_in(w, noise_span.0, noise_span.1)?;
    if rms == 0.0 {
        return Err(Error::InvalidArgument("noise region is silent".into()));
    }
    Ok(20.0 * (w.peak_abs() / rms).log10())
}

/// SNR gain of a coded output over a pulsed output, both measured as
/// `20 log10(peak / noise RMS)` with the same target-free noise span.
pub fn snr_gain(
    coded: &SampledWaveform,
    pulsed: &SampledWaveform,
    noise_span: (f64, f64),
) -> Result<f64> {
    Ok(snr_db(coded, noise_span)? - snr_db(pulsed, noise_span)?)
}
