//! Bit-exact binary container and plot-ready CSV writers.
//!
//! The container carries one of four payload kinds behind a common header:
//!
//! ```text
//! magic "UCD1" | kind u8 | unit u8 | seed u64 | meta (u32 len + utf8)
//! ```
//!
//! followed by kind-specific fields and a little-endian payload (f64 arrays
//! for waveforms, transfer functions and images; i16 for channel data).
//! Writes go to a temporary file in the target directory and are renamed
//! into place, so a crash never leaves a half-written container behind.

use crate::acquisition::{ChannelData, ReceiveConfig, TxKind, TxScheme};
use crate::error::{Error, Result};
use crate::processing::{BeamformedImage, Raster};
use crate::transducer::TransferFunction;
use crate::waveform::{AmplitudeUnit, SampledWaveform};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"UCD1";

/// Payload kind tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerKind {
    Waveform = 0,
    Channel = 1,
    Image = 2,
    Tf = 3,
}

fn unit_tag(u: AmplitudeUnit) -> u8 {
    match u {
        AmplitudeUnit::Volts => 0,
        AmplitudeUnit::Lsb => 1,
    }
}

fn unit_from(tag: u8) -> Result<AmplitudeUnit> {
    match tag {
        0 => Ok(AmplitudeUnit::Volts),
        1 => Ok(AmplitudeUnit::Lsb),
        other => Err(Error::BadContainer(format!("unknown unit tag {other}"))),
    }
}

fn write_string(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n > 1 << 24 {
        return Err(Error::BadContainer(format!(
            "unreasonable string length {n}"
        )));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::BadContainer(format!("bad utf8: {e}")))
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.read_f64::<LittleEndian>()?);
    }
    Ok(out)
}

/// Write `body` to `path` atomically (temp file + rename).
fn atomic_write(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn open_kind(path: &Path, expect: ContainerKind) -> Result<(BufReader<File>, u8, u64, String)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadContainer(format!("bad magic {magic:?}")));
    }
    let kind = r.read_u8()?;
    if kind != expect as u8 {
        return Err(Error::BadContainer(format!(
            "container holds kind {kind}, expected {:?}",
            expect
        )));
    }
    let unit = r.read_u8()?;
    let seed = r.read_u64::<LittleEndian>()?;
    let meta = read_string(&mut r)?;
    Ok((r, unit, seed, meta))
}

// ---- waveform ----

pub fn write_waveform(path: &Path, w: &SampledWaveform, seed: u64, meta: &str) -> Result<()> {
    atomic_write(path, |out| {
        out.write_all(MAGIC)?;
        out.write_u8(ContainerKind::Waveform as u8)?;
        out.write_u8(unit_tag(w.unit))?;
        out.write_u64::<LittleEndian>(seed)?;
        write_string(out, meta)?;
        out.write_f64::<LittleEndian>(w.sample_rate)?;
        out.write_f64::<LittleEndian>(w.t0)?;
        out.write_u64::<LittleEndian>(w.len() as u64)?;
        write_f64s(out, &w.samples)
    })
}

pub fn read_waveform(path: &Path) -> Result<(SampledWaveform, u64, String)> {
    let (mut r, unit, seed, meta) = open_kind(path, ContainerKind::Waveform)?;
    let rate = r.read_f64::<LittleEndian>()?;
    let t0 = r.read_f64::<LittleEndian>()?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let samples = read_f64s(&mut r, n)?;
    Ok((
        SampledWaveform::new(samples, rate, t0, unit_from(unit)?)?,
        seed,
        meta,
    ))
}

// ---- transfer function ----

pub fn write_tf(path: &Path, tf: &TransferFunction, seed: u64, meta: &str) -> Result<()> {
    atomic_write(path, |out| {
        out.write_all(MAGIC)?;
        out.write_u8(ContainerKind::Tf as u8)?;
        out.write_u8(0)?;
        out.write_u64::<LittleEndian>(seed)?;
        write_string(out, meta)?;
        out.write_u64::<LittleEndian>(tf.freqs.len() as u64)?;
        write_f64s(out, &tf.freqs)?;
        for v in &tf.values {
            out.write_f64::<LittleEndian>(v.re)?;
            out.write_f64::<LittleEndian>(v.im)?;
        }
        Ok(())
    })
}

pub fn read_tf(path: &Path) -> Result<(TransferFunction, u64, String)> {
    let (mut r, _, seed, meta) = open_kind(path, ContainerKind::Tf)?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let freqs = read_f64s(&mut r, n)?;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let re = r.read_f64::<LittleEndian>()?;
        let im = r.read_f64::<LittleEndian>()?;
        values.push(Complex64::new(re, im));
    }
    Ok((TransferFunction::new(freqs, values)?, seed, meta))
}

// ---- channel data ----

fn write_embedded_waveform(out: &mut impl Write, w: &SampledWaveform) -> Result<()> {
    out.write_u8(unit_tag(w.unit))?;
    out.write_f64::<LittleEndian>(w.sample_rate)?;
    out.write_f64::<LittleEndian>(w.t0)?;
    out.write_u64::<LittleEndian>(w.len() as u64)?;
    write_f64s(out, &w.samples)
}

fn read_embedded_waveform(r: &mut impl Read) -> Result<SampledWaveform> {
    let unit = unit_from(r.read_u8()?)?;
    let rate = r.read_f64::<LittleEndian>()?;
    let t0 = r.read_f64::<LittleEndian>()?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    SampledWaveform::new(read_f64s(r, n)?, rate, t0, unit)
}

pub fn write_channel_data(path: &Path, data: &ChannelData, meta: &str) -> Result<()> {
    atomic_write(path, |out| {
        out.write_all(MAGIC)?;
        out.write_u8(ContainerKind::Channel as u8)?;
        out.write_u8(unit_tag(AmplitudeUnit::Lsb))?;
        out.write_u64::<LittleEndian>(data.config.seed)?;
        write_string(out, meta)?;
        out.write_u64::<LittleEndian>(data.n_elements as u64)?;
        out.write_u64::<LittleEndian>(data.n_samples as u64)?;
        out.write_f64::<LittleEndian>(data.dt)?;
        let c = &data.config;
        out.write_f64::<LittleEndian>(c.sample_rate)?;
        out.write_f64::<LittleEndian>(c.window)?;
        out.write_f64::<LittleEndian>(c.fixed_gain_db)?;
        out.write_f64::<LittleEndian>(c.tgc_db_per_cm)?;
        out.write_u16::<LittleEndian>(c.adc_bits as u16)?;
        out.write_f64::<LittleEndian>(c.noise_rms_lsb)?;
        out.write_f64::<LittleEndian>(c.full_scale)?;
        out.write_u64::<LittleEndian>(c.seed)?;
        match &data.scheme.kind {
            TxKind::Sta { element } => {
                out.write_u8(0)?;
                out.write_u32::<LittleEndian>(*element as u32)?;
                out.write_f64::<LittleEndian>(0.0)?;
                out.write_f64::<LittleEndian>(0.0)?;
            }
            TxKind::DivergingWave {
                virtual_source,
                delay_offset,
            } => {
                out.write_u8(1)?;
                out.write_u32::<LittleEndian>(0)?;
                out.write_f64::<LittleEndian>(*virtual_source)?;
                out.write_f64::<LittleEndian>(*delay_offset)?;
            }
        }
        write_embedded_waveform(out, &data.scheme.drive)?;
        for &s in &data.samples {
            out.write_i16::<LittleEndian>(s)?;
        }
        Ok(())
    })
}

pub fn read_channel_data(path: &Path) -> Result<(ChannelData, String)> {
    let (mut r, _, _, meta) = open_kind(path, ContainerKind::Channel)?;
    let n_elements = r.read_u64::<LittleEndian>()? as usize;
    let n_samples = r.read_u64::<LittleEndian>()? as usize;
    let dt = r.read_f64::<LittleEndian>()?;
    let config = ReceiveConfig {
        sample_rate: r.read_f64::<LittleEndian>()?,
        window: r.read_f64::<LittleEndian>()?,
        fixed_gain_db: r.read_f64::<LittleEndian>()?,
        tgc_db_per_cm: r.read_f64::<LittleEndian>()?,
        adc_bits: r.read_u16::<LittleEndian>()? as u32,
        noise_rms_lsb: r.read_f64::<LittleEndian>()?,
        full_scale: r.read_f64::<LittleEndian>()?,
        seed: r.read_u64::<LittleEndian>()?,
    };
    let kind_tag = r.read_u8()?;
    let element = r.read_u32::<LittleEndian>()? as usize;
    let rv = r.read_f64::<LittleEndian>()?;
    let off = r.read_f64::<LittleEndian>()?;
    let kind = match kind_tag {
        0 => TxKind::Sta { element },
        1 => TxKind::DivergingWave {
            virtual_source: rv,
            delay_offset: off,
        },
        other => return Err(Error::BadContainer(format!("unknown scheme tag {other}"))),
    };
    let drive = read_embedded_waveform(&mut r)?;
    let total = n_elements
        .checked_mul(n_samples)
        .ok_or_else(|| Error::BadContainer("channel dimensions overflow".into()))?;
    let mut samples = Vec::with_capacity(total);
    for _ in 0..total {
        samples.push(r.read_i16::<LittleEndian>()?);
    }
    Ok((
        ChannelData {
            samples,
            n_elements,
            n_samples,
            dt,
            scheme: TxScheme { kind, drive },
            config,
        },
        meta,
    ))
}

// ---- beamformed image ----

pub fn write_image(path: &Path, img: &BeamformedImage, seed: u64, meta: &str) -> Result<()> {
    atomic_write(path, |out| {
        out.write_all(MAGIC)?;
        out.write_u8(ContainerKind::Image as u8)?;
        out.write_u8(0)?;
        out.write_u64::<LittleEndian>(seed)?;
        write_string(out, meta)?;
        out.write_f64::<LittleEndian>(img.raster.center[0])?;
        out.write_f64::<LittleEndian>(img.raster.center[1])?;
        out.write_f64::<LittleEndian>(img.raster.extent[0])?;
        out.write_f64::<LittleEndian>(img.raster.extent[1])?;
        out.write_f64::<LittleEndian>(img.raster.spacing)?;
        out.write_u64::<LittleEndian>(img.raster.nx() as u64)?;
        out.write_u64::<LittleEndian>(img.raster.nz() as u64)?;
        write_string(out, &img.scheme)?;
        out.write_u64::<LittleEndian>(img.out_of_window)?;
        write_f64s(out, &img.amplitudes)
    })
}

pub fn read_image(path: &Path) -> Result<(BeamformedImage, u64, String)> {
    let (mut r, _, seed, meta) = open_kind(path, ContainerKind::Image)?;
    let center = [r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?];
    let extent = [r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?];
    let spacing = r.read_f64::<LittleEndian>()?;
    let nx = r.read_u64::<LittleEndian>()? as usize;
    let nz = r.read_u64::<LittleEndian>()? as usize;
    let scheme = read_string(&mut r)?;
    let out_of_window = r.read_u64::<LittleEndian>()?;
    let raster = Raster::new(center, extent, spacing)?;
    if raster.nx() != nx || raster.nz() != nz {
        return Err(Error::BadContainer(
            "raster dimensions disagree with header".into(),
        ));
    }
    let amplitudes = read_f64s(&mut r, nx * nz)?;
    Ok((
        BeamformedImage {
            amplitudes,
            raster,
            scheme,
            out_of_window,
        },
        seed,
        meta,
    ))
}

// ---- CSV ----

/// `time_s,amplitude` rows at full round-trip float precision.
pub fn write_csv_waveform(path: &Path, w: &SampledWaveform) -> Result<()> {
    atomic_write(path, |out| {
        let unit = match w.unit {
            AmplitudeUnit::Volts => "volts",
            AmplitudeUnit::Lsb => "lsb",
        };
        writeln!(out, "time_s,amplitude_{unit}")?;
        for (i, &v) in w.samples.iter().enumerate() {
            writeln!(out, "{},{}", w.time_at(i), v)?;
        }
        Ok(())
    })
}

/// `freq_hz,re,im` rows.
pub fn write_csv_tf(path: &Path, tf: &TransferFunction) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "freq_hz,re,im")?;
        for (f, v) in tf.freqs.iter().zip(&tf.values) {
            writeln!(out, "{},{},{}", f, v.re, v.im)?;
        }
        Ok(())
    })
}

/// Image grid: header row of lateral positions, then one row per depth.
pub fn write_csv_image(path: &Path, img: &BeamformedImage) -> Result<()> {
    atomic_write(path, |out| {
        write!(out, "depth_m\\lateral_m")?;
        for ix in 0..img.raster.nx() {
            write!(out, ",{}", img.raster.x_at(ix))?;
        }
        writeln!(out)?;
        for iz in 0..img.raster.nz() {
            write!(out, "{}", img.raster.z_at(iz))?;
            for ix in 0..img.raster.nx() {
                write!(out, ",{}", img.at(ix, iz))?;
            }
            writeln!(out)?;
        }
        Ok(())
    })
}

/// Two-column cut line (`position_m,amplitude`).
pub fn write_csv_cut(path: &Path, header: &str, cut: &[(f64, f64)]) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "{header}")?;
        for (p, a) in cut {
            writeln!(out, "{},{}", p, a)?;
        }
        Ok(())
    })
}
