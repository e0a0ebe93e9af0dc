//! Correlation reception and delay-and-sum beamforming.
//!
//! References are unit-energy so the correlator gain is the same for every
//! excitation; the default reference is the expected received waveform (the
//! drive filtered through the element's two-way response), which puts the
//! matched-filter peak exactly at the geometric echo delay. Correlation is
//! direct time-domain summation: with bipolar chip trains on the sample grid
//! the complementary-pair sidelobe cancellation is then exact in f64.
//!
//! Beamforming is delay-and-sum on the per-channel analytic signal with
//! linear interpolation; image amplitude is the magnitude of the complex sum
//! (quadrature envelope detection).

use crate::acquisition::{dw_delay_shift, ArrayGeometry, ChannelData, TxKind};
use crate::error::{Error, Result};
use crate::fft::analytic_signal;
use crate::transducer::ElementModel;
use crate::waveform::{signal_energy, spectrum_on_grid, SampledWaveform};
use num_complex::Complex64;
use rayon::prelude::*;

/// A unit-energy correlation reference and a note of what it matches.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSignal {
    pub waveform: SampledWaveform,
    /// Description of the chip or code this reference matches.
    pub source: String,
}

/// Scale a waveform to unit energy.
pub fn make_reference(w: &SampledWaveform, source: &str) -> Result<ReferenceSignal> {
    let e = signal_energy(w);
    if e <= 0.0 {
        return Err(Error::InvalidArgument(
            "reference must have nonzero energy".into(),
        ));
    }
    let scale = 1.0 / e.sqrt();
    let samples = w.samples.iter().map(|&v| v * scale).collect();
    Ok(ReferenceSignal {
        waveform: SampledWaveform::new(samples, w.sample_rate, w.t0, w.unit)?,
        source: source.to_string(),
    })
}

/// Expected received waveform for a drive through an element's two-way
/// response, on the receive grid implied by the element's transfer function,
/// truncated past the ringdown and normalized to unit energy.
pub fn matched_reference(
    drive: &SampledWaveform,
    element: &ElementModel,
    source: &str,
) -> Result<ReferenceSignal> {
    let tf = &element.two_way;
    let n_grid = 2 * (tf.freqs.len() - 1);
    let rate = 2.0 * tf.nyquist();
    let spec = spectrum_on_grid(drive, n_grid, rate)?;
    let shaped: Vec<Complex64> = spec.iter().zip(&tf.values).map(|(d, h)| d * h).collect();
    let mut x = crate::fft::irfft(&shaped, n_grid);
    for v in x.iter_mut() {
        *v *= rate;
    }
    let peak = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::InvalidArgument("drive produces no response".into()));
    }
    let end = x
        .iter()
        .rposition(|&v| v.abs() >= 1e-4 * peak)
        .map(|i| i + 1)
        .unwrap_or(x.len());
    x.truncate(end.max(2));
    let w = SampledWaveform::new(x, rate, 0.0, drive.unit)?;
    make_reference(&w, source)
}

/// Matched references for the two shots of a coded pair, zero-padded to a
/// common length so the correlator outputs combine sample for sample.
pub fn matched_reference_pair(
    drive_a: &SampledWaveform,
    drive_b: &SampledWaveform,
    element: &ElementModel,
    source: &str,
) -> Result<(ReferenceSignal, ReferenceSignal)> {
    let mut a = matched_reference(drive_a, element, &format!("{source} (A)"))?;
    let mut b = matched_reference(drive_b, element, &format!("{source} (B)"))?;
    let n = a.waveform.len().max(b.waveform.len());
    a.waveform.samples.resize(n, 0.0);
    b.waveform.samples.resize(n, 0.0);
    Ok((a, b))
}

/// Cross-correlation `y(lag) = dt * sum_s trace[s] * kernel[s - lag]` over
/// every lag with overlap, by direct summation.
///
/// The output time axis is `trace.t0 - kernel.t0 + lag*dt`, so a matched
/// echo at delay `tau` peaks at `tau`. Output keeps the trace's unit.
pub fn xcorr(trace: &SampledWaveform, kernel: &SampledWaveform) -> Result<SampledWaveform> {
    if trace.sample_rate != kernel.sample_rate {
        return Err(Error::RateMismatch(trace.sample_rate, kernel.sample_rate));
    }
    let nt = trace.len() as isize;
    let nk = kernel.len() as isize;
    let dt = trace.dt();
    let n_out = (nt + nk - 1) as usize;
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out as isize {
        let lag = m - (nk - 1);
        let s_lo = lag.max(0);
        let s_hi = (lag + nk - 1).min(nt - 1);
        let a = &trace.samples[s_lo as usize..=s_hi as usize];
        let b = &kernel.samples[(s_lo - lag) as usize..=(s_hi - lag) as usize];
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        out.push(dot * dt);
    }
    SampledWaveform::new(
        out,
        trace.sample_rate,
        trace.t0 - kernel.t0 - (nk - 1) as f64 * dt,
        trace.unit,
    )
}

/// Correlate one receive trace with a unit-energy reference.
pub fn correlate(trace: &SampledWaveform, reference: &ReferenceSignal) -> Result<SampledWaveform> {
    xcorr(trace, &reference.waveform)
}

/// Correlate every channel of a record with the same reference.
pub fn correlate_channels(
    data: &ChannelData,
    reference: &ReferenceSignal,
) -> Result<Vec<SampledWaveform>> {
    (0..data.n_elements)
        .into_par_iter()
        .map(|j| correlate(&data.trace_waveform(j), reference))
        .collect()
}

/// Sample-wise sum of the two correlator outputs of a complementary pair.
pub fn golay_combine(a: &SampledWaveform, b: &SampledWaveform) -> Result<SampledWaveform> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.sample_rate != b.sample_rate {
        return Err(Error::RateMismatch(a.sample_rate, b.sample_rate));
    }
    if a.unit != b.unit {
        return Err(Error::UnitMismatch(a.unit, b.unit));
    }
    if (a.t0 - b.t0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(
            "combining outputs with different time origins".into(),
        ));
    }
    let samples = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| x + y)
        .collect();
    SampledWaveform::new(samples, a.sample_rate, a.t0, a.unit)
}

/// A rectangular field-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    /// (lateral, depth) center in meters.
    pub center: [f64; 2],
    /// (width, height) in meters.
    pub extent: [f64; 2],
    /// Grid spacing in meters.
    pub spacing: f64,
}

impl Raster {
    pub fn new(center: [f64; 2], extent: [f64; 2], spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || extent[0] < 0.0 || extent[1] < 0.0 {
            return Err(Error::InvalidArgument("bad raster".into()));
        }
        for e in extent {
            let n = e / spacing;
            if (n - n.round()).abs() > 1e-6 {
                return Err(Error::InvalidArgument(
                    "raster extent must be an integer number of cells".into(),
                ));
            }
        }
        Ok(Self {
            center,
            extent,
            spacing,
        })
    }

    pub fn nx(&self) -> usize {
        (self.extent[0] / self.spacing).round() as usize + 1
    }

    pub fn nz(&self) -> usize {
        (self.extent[1] / self.spacing).round() as usize + 1
    }

    pub fn x_at(&self, ix: usize) -> f64 {
        self.center[0] - self.extent[0] / 2.0 + ix as f64 * self.spacing
    }

    pub fn z_at(&self, iz: usize) -> f64 {
        self.center[1] - self.extent[1] / 2.0 + iz as f64 * self.spacing
    }
}

/// Envelope amplitude over a raster, with bookkeeping for points whose
/// flight time fell outside the receive records.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedImage {
    /// Row-major `[iz][ix]` amplitudes, non-negative.
    pub amplitudes: Vec<f64>,
    pub raster: Raster,
    /// Human-readable transmit-scheme label.
    pub scheme: String,
    /// Raster points zeroed because a required sample lay outside the record.
    pub out_of_window: u64,
}

impl BeamformedImage {
    pub fn at(&self, ix: usize, iz: usize) -> f64 {
        self.amplitudes[iz * self.raster.nx() + ix]
    }

    /// Peak amplitude over the grid.
    pub fn max_amplitude(&self) -> f64 {
        self.amplitudes.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Grid indices of the global maximum; ties break toward smaller indices.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0usize, 0usize);
        let mut best_v = f64::MIN;
        for iz in 0..self.raster.nz() {
            for ix in 0..self.raster.nx() {
                let v = self.at(ix, iz);
                if v > best_v {
                    best_v = v;
                    best = (ix, iz);
                }
            }
        }
        best
    }

    /// Position of the global maximum in meters.
    pub fn peak_position(&self) -> [f64; 2] {
        let (ix, iz) = self.argmax();
        [self.raster.x_at(ix), self.raster.z_at(iz)]
    }
}

struct AnalyticTrace {
    values: Vec<Complex64>,
    t0: f64,
    rate: f64,
}

impl AnalyticTrace {
    fn from(w: &SampledWaveform) -> Self {
        AnalyticTrace {
            values: analytic_signal(&w.samples),
            t0: w.t0,
            rate: w.sample_rate,
        }
    }

    /// Linear interpolation; `None` when `t` falls outside the record.
    fn sample(&self, t: f64) -> Option<Complex64> {
        let s = (t - self.t0) * self.rate;
        if s < 0.0 || s > (self.values.len() - 1) as f64 {
            return None;
        }
        let i = s.floor() as usize;
        if i + 1 >= self.values.len() {
            return Some(self.values[i]);
        }
        let frac = s - i as f64;
        Some(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }
}

/// Transmit time of flight to a field point for one scheme.
fn tx_time(kind: &TxKind, geom: &ArrayGeometry, c: f64, x: f64, z: f64) -> f64 {
    match kind {
        TxKind::Sta { element } => {
            let ex = geom.element_x(*element);
            ((x - ex).powi(2) + z * z).sqrt() / c
        }
        TxKind::DivergingWave {
            virtual_source,
            delay_offset,
        } => {
            // virtual line source at (0, -r_v); firing delays are min-zero
            let r = (x * x + (z + virtual_source).powi(2)).sqrt();
            (r - virtual_source) / c - dw_delay_shift(*virtual_source, geom, c) + delay_offset
        }
    }
}

fn beamform_rows(
    traces: &[AnalyticTrace],
    kind: &TxKind,
    geom: &ArrayGeometry,
    raster: &Raster,
    c: f64,
) -> (Vec<f64>, u64) {
    let nx = raster.nx();
    let nz = raster.nz();
    let positions = geom.positions();
    let rows: Vec<(Vec<f64>, u64)> = (0..nz)
        .into_par_iter()
        .map(|iz| {
            let z = raster.z_at(iz);
            let mut row = Vec::with_capacity(nx);
            let mut out_count = 0u64;
            for ix in 0..nx {
                let x = raster.x_at(ix);
                let t_tx = tx_time(kind, geom, c, x, z);
                let mut acc = Complex64::default();
                let mut outside = false;
                for (j, tr) in traces.iter().enumerate() {
                    let t = t_tx + ((x - positions[j]).powi(2) + z * z).sqrt() / c;
                    match tr.sample(t) {
                        Some(v) => acc += v,
                        None => {
                            outside = true;
                            break;
                        }
                    }
                }
                if outside {
                    out_count += 1;
                    row.push(0.0);
                } else {
                    row.push(acc.norm());
                }
            }
            (row, out_count)
        })
        .collect();
    let mut amplitudes = Vec::with_capacity(nx * nz);
    let mut out_of_window = 0;
    for (row, c) in rows {
        amplitudes.extend_from_slice(&row);
        out_of_window += c;
    }
    (amplitudes, out_of_window)
}

/// Delay-and-sum beamform one set of per-element traces (raw or correlated).
///
/// Flight times follow the transmit scheme (single-element or virtual-source
/// diverging wave, with the same min-zero delay convention the simulator
/// uses) plus the per-element return path; traces are sampled with linear
/// interpolation on the analytic signal and summed coherently.
pub fn das_beamform_traces(
    traces: &[SampledWaveform],
    kind: &TxKind,
    geom: &ArrayGeometry,
    raster: &Raster,
    c: f64,
    scheme_label: &str,
) -> Result<BeamformedImage> {
    if traces.len() != geom.n_elements {
        return Err(Error::LengthMismatch(traces.len(), geom.n_elements));
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(
            "sound speed must be positive".into(),
        ));
    }
    kind.validate(geom)?;
    let analytic: Vec<AnalyticTrace> = traces.par_iter().map(AnalyticTrace::from).collect();
    let (amplitudes, out_of_window) = beamform_rows(&analytic, kind, geom, raster, c);
    if out_of_window > 0 {
        log::warn!("das_beamform: {out_of_window} raster points outside the receive window");
    }
    Ok(BeamformedImage {
        amplitudes,
        raster: raster.clone(),
        scheme: scheme_label.to_string(),
        out_of_window,
    })
}

/// Beamform raw channel data directly (no correlation receiver).
pub fn das_beamform(
    data: &ChannelData,
    geom: &ArrayGeometry,
    raster: &Raster,
    c: f64,
) -> Result<BeamformedImage> {
    let traces: Vec<SampledWaveform> = (0..data.n_elements)
        .map(|j| data.trace_waveform(j))
        .collect();
    das_beamform_traces(&traces, &data.scheme.kind, geom, raster, c, "raw")
}

/// One transmit event of a synthetic-transmit-aperture acquisition.
#[derive(Debug, Clone)]
pub struct StaShot {
    pub element: usize,
    pub traces: Vec<SampledWaveform>,
}

/// Coherently compound beamformed single-element shots into one image.
///
/// Proceeds over whatever subset of transmit elements is supplied (warning
/// when elements are missing); a single shot reduces exactly to
/// [`das_beamform_traces`] with that firing element.
pub fn sta_full_beamform(
    shots: &[StaShot],
    geom: &ArrayGeometry,
    raster: &Raster,
    c: f64,
    scheme_label: &str,
) -> Result<BeamformedImage> {
    if shots.is_empty() {
        return Err(Error::InvalidArgument("no shots supplied".into()));
    }
    if shots.len() < geom.n_elements {
        log::warn!(
            "sta_full_beamform: {} of {} transmit elements available",
            shots.len(),
            geom.n_elements
        );
    }
    for s in shots {
        if s.traces.len() != geom.n_elements {
            return Err(Error::LengthMismatch(s.traces.len(), geom.n_elements));
        }
        TxKind::Sta { element: s.element }.validate(geom)?;
    }
    let nx = raster.nx();
    let nz = raster.nz();
    let positions = geom.positions();
    let analytic: Vec<(usize, Vec<AnalyticTrace>)> = shots
        .par_iter()
        .map(|s| {
            (
                s.element,
                s.traces.iter().map(AnalyticTrace::from).collect(),
            )
        })
        .collect();
    let rows: Vec<(Vec<f64>, u64)> = (0..nz)
        .into_par_iter()
        .map(|iz| {
            let z = raster.z_at(iz);
            let mut row = Vec::with_capacity(nx);
            let mut out_count = 0u64;
            for ix in 0..nx {
                let x = raster.x_at(ix);
                let mut acc = Complex64::default();
                let mut outside = false;
                'shots: for (el, traces) in &analytic {
                    let t_tx = ((x - positions[*el]).powi(2) + z * z).sqrt() / c;
                    for (j, tr) in traces.iter().enumerate() {
                        let t = t_tx + ((x - positions[j]).powi(2) + z * z).sqrt() / c;
                        match tr.sample(t) {
                            Some(v) => acc += v,
                            None => {
                                outside = true;
                                break 'shots;
                            }
                        }
                    }
                }
                if outside {
                    out_count += 1;
                    row.push(0.0);
                } else {
                    row.push(acc.norm());
                }
            }
            (row, out_count)
        })
        .collect();
    let mut amplitudes = Vec::with_capacity(nx * nz);
    let mut out_of_window = 0;
    for (row, cnt) in rows {
        amplitudes.extend_from_slice(&row);
        out_of_window += cnt;
    }
    Ok(BeamformedImage {
        amplitudes,
        raster: raster.clone(),
        scheme: scheme_label.to_string(),
        out_of_window,
    })
}
