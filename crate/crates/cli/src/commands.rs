//! The four subcommands: synth, simulate, analyze, report.
//!
//! Every command writes `run_manifest.txt` (config hash + seed) into the
//! output directory, and all file writes are atomic. Event seeds derive from
//! the master seed and the event name, so reruns are byte-identical and
//! independent of scheme ordering.

use crate::config::{code_length, RunConfig, SchemeSection};
use anyhow::{bail, Context, Result};
use echolab_core::acquisition::{
    derive_seed, golay_transmit_pair, simulate, ChannelData, TxKind, TxScheme,
};
use echolab_core::codes::golay_pair;
use echolab_core::io;
use echolab_core::metrics::{
    fractional_bandwidth, grating_profile, lsf_extract, periodogram, range_resolution_extract,
    BeamwidthProfile,
};
use echolab_core::processing::{
    correlate, correlate_channels, das_beamform_traces, golay_combine, make_reference,
    matched_reference, matched_reference_pair, sta_full_beamform, BeamformedImage, Raster, StaShot,
};
use echolab_core::propagation::attenuation_filter;
use echolab_core::transducer::apply_transfer;
use echolab_core::waveform::{bpsk_modulate, resample, synth_pwm_pulse, SampledWaveform};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn event_seed(master: u64, event: &str) -> u64 {
    derive_seed(master, fnv1a(event))
}

fn cycles_tag(cycles: f64) -> String {
    format!("{}", cycles).replace('.', "p")
}

fn rv_tag(rv: f64) -> String {
    format!("rv{}", format!("{}", rv * 1e3).replace('.', "p"))
}

fn write_manifest(out: &Path, command: &str, config_bytes: &[u8], seed: u64) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let hash = Sha256::digest(config_bytes);
    let text = format!(
        "command = {command}\nconfig_sha256 = {}\nseed = {seed}\ntoolkit = echolab {}\n",
        hex_string(&hash),
        env!("CARGO_PKG_VERSION"),
    );
    std::fs::write(out.join("run_manifest.txt"), text)?;
    Ok(())
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Names of the channel-data containers one scheme produces, in firing order.
/// Coded schemes get `_a`/`_b` suffixes, one pair per transmit event.
fn event_names(cfg: &RunConfig, scheme: &SchemeSection) -> Vec<(String, TxKind)> {
    match scheme.kind.as_str() {
        "dw" => scheme
            .r_v_m
            .iter()
            .map(|&rv| (format!("{}_{}", scheme.name, rv_tag(rv)), TxKind::dw(rv)))
            .collect(),
        "sta" => {
            let el = scheme.element.unwrap();
            vec![(
                format!("{}_el{el:03}", scheme.name),
                TxKind::Sta { element: el },
            )]
        }
        "sta_full" => (0..cfg.array.n_elements)
            .map(|el| {
                (
                    format!("{}_el{el:03}", scheme.name),
                    TxKind::Sta { element: el },
                )
            })
            .collect(),
        _ => unreachable!("validated on load"),
    }
}

// ------------------------------------------------------------- synth ----

pub fn cmd_synth(cfg: &RunConfig, config_bytes: &[u8], out: &Path) -> Result<()> {
    write_manifest(out, "synth", config_bytes, cfg.seed)?;
    let spec = cfg.pwm_spec();
    for &cycles in &cfg.drive.cycles {
        let w = synth_pwm_pulse(cycles, &spec)?;
        let tag = cycles_tag(cycles);
        io::write_waveform(
            &out.join(format!("pwm_{tag}c.ucd")),
            &w,
            cfg.seed,
            &format!("PWM pulse, {cycles} cycles"),
        )?;
        io::write_csv_waveform(&out.join(format!("pwm_{tag}c.csv")), &w)?;
        println!(
            "synth: pwm_{tag}c ({} samples at {} MHz)",
            w.len(),
            w.sample_rate / 1e6
        );
    }
    for scheme in &cfg.schemes {
        if scheme.code == "none" {
            continue;
        }
        let n = code_length(&scheme.code)?;
        let (a, b) = golay_pair(n)?;
        let chip = synth_pwm_pulse(scheme.cycles, &spec)?;
        for (code, tag) in [(&a, "a"), (&b, "b")] {
            let w = bpsk_modulate(code, &chip)?;
            let name = format!("drive_{}_{tag}", scheme.name);
            io::write_waveform(
                &out.join(format!("{name}.ucd")),
                &w,
                cfg.seed,
                &format!("{} chips x {} cycles, shot {tag}", n, scheme.cycles),
            )?;
            io::write_csv_waveform(&out.join(format!("{name}.csv")), &w)?;
            println!("synth: {name} ({:.3} us)", w.duration() * 1e6);
        }
    }
    Ok(())
}

// ---------------------------------------------------------- simulate ----

pub fn cmd_simulate(cfg: &RunConfig, config_bytes: &[u8], out: &Path) -> Result<()> {
    write_manifest(out, "simulate", config_bytes, cfg.seed)?;
    let geom = cfg.geometry()?;
    let phantom = cfg.phantom()?;
    let element = cfg.element_model()?;
    let spec = cfg.pwm_spec();

    for scheme in &cfg.schemes {
        let chip = synth_pwm_pulse(scheme.cycles, &spec)?;
        for (event, kind) in event_names(cfg, scheme) {
            let rx_cfg = cfg.receive_config(event_seed(cfg.seed, &event));
            if scheme.code == "none" {
                let tx = TxScheme {
                    kind: kind.clone(),
                    drive: chip.clone(),
                };
                let (data, rep) = simulate(&phantom, &geom, &tx, &element, &rx_cfg)?;
                io::write_channel_data(&out.join(format!("{event}.ucd")), &data, &event)?;
                report_event(&event, rep.clipped);
            } else {
                let n = code_length(&scheme.code)?;
                let (a, b) = golay_pair(n)?;
                let ((da, ra), (db, rb)) = golay_transmit_pair(
                    &phantom,
                    &geom,
                    &kind,
                    &chip,
                    (&a, &b),
                    &element,
                    &rx_cfg,
                )?;
                io::write_channel_data(&out.join(format!("{event}_a.ucd")), &da, &event)?;
                io::write_channel_data(&out.join(format!("{event}_b.ucd")), &db, &event)?;
                report_event(&format!("{event} (A+B)"), ra.clipped + rb.clipped);
            }
        }
    }
    Ok(())
}

fn report_event(event: &str, clipped: usize) {
    if clipped > 0 {
        println!("simulate: {event}: SATURATED, {clipped} samples clipped");
    } else {
        println!("simulate: {event}: ok");
    }
}

// ----------------------------------------------------------- analyze ----

/// Received two-way chip at the receive rate for waveform-level analyses.
fn received_chip(cfg: &RunConfig, cycles: f64) -> Result<SampledWaveform> {
    let element = cfg.element_model()?;
    let drive = synth_pwm_pulse(cycles, &cfg.pwm_spec())?;
    let filtered = apply_transfer(&drive, &element.two_way)?;
    Ok(resample(&filtered, cfg.receive.sample_rate_hz)?)
}

fn read_event_channels(out: &Path, event: &str, coded: bool) -> Result<Vec<ChannelData>> {
    let names: Vec<String> = if coded {
        vec![format!("{event}_a.ucd"), format!("{event}_b.ucd")]
    } else {
        vec![format!("{event}.ucd")]
    };
    let mut data = Vec::new();
    for n in names {
        let path = out.join(&n);
        if !path.exists() {
            bail!(
                "missing input file {} (run `echolab simulate` first)",
                path.display()
            );
        }
        data.push(io::read_channel_data(&path)?.0);
    }
    Ok(data)
}

/// Correlate one event's records into beamformer-ready traces.
fn event_traces(
    cfg: &RunConfig,
    scheme: &SchemeSection,
    data: &[ChannelData],
) -> Result<Vec<SampledWaveform>> {
    let element = cfg.element_model()?;
    let chip = synth_pwm_pulse(scheme.cycles, &cfg.pwm_spec())?;
    if scheme.code == "none" {
        let reference = matched_reference(&chip, &element, "chip")?;
        Ok(correlate_channels(&data[0], &reference)?)
    } else {
        let n = code_length(&scheme.code)?;
        let (a, b) = golay_pair(n)?;
        let (ref_a, ref_b) = matched_reference_pair(
            &bpsk_modulate(&a, &chip)?,
            &bpsk_modulate(&b, &chip)?,
            &element,
            &scheme.code,
        )?;
        let cor_a = correlate_channels(&data[0], &ref_a)?;
        let cor_b = correlate_channels(&data[1], &ref_b)?;
        cor_a
            .iter()
            .zip(&cor_b)
            .map(|(x, y)| Ok(golay_combine(x, y)?))
            .collect()
    }
}

fn pin_positions(cfg: &RunConfig) -> Vec<f64> {
    let half = (cfg.phantom.pins_per_grating as i64 - 1) / 2;
    (0..cfg.phantom.pins_per_grating as i64)
        .map(|i| (i - half) as f64 * cfg.phantom.pin_spacing_m)
        .collect()
}

fn profile_window(cfg: &RunConfig, x: f64, depth: f64) -> Result<Raster> {
    // window half-extent: under half the pin spacing, on the raster grid
    let spacing = cfg.raster.spacing_m;
    let cells = ((0.6e-3 / spacing).round() as usize).max(2);
    let extent = 2.0 * cells as f64 * spacing;
    Ok(Raster::new([x, depth], [extent, extent], spacing)?)
}

fn write_resolution_report(path: &Path, scheme: &str, img: &BeamformedImage, c: f64) -> Result<()> {
    let lsf = lsf_extract(img)?;
    let rng = range_resolution_extract(img, c)?;
    let mut text = String::new();
    writeln!(text, "scheme: {scheme}")?;
    writeln!(text, "peak_lateral_m = {}", lsf.peak_position[0])?;
    writeln!(text, "peak_depth_m = {}", lsf.peak_position[1])?;
    writeln!(text, "lsf_3db_width_m = {}", lsf.width_3db)?;
    writeln!(text, "lsf_6db_width_m = {}", lsf.width_6db)?;
    match lsf.sidelobe_db {
        Some(s) => writeln!(text, "lateral_sidelobe_db = {s:.2}")?,
        None => writeln!(text, "lateral_sidelobe_db = none")?,
    }
    writeln!(text, "range_3db_width_m = {}", rng.width_3db_m)?;
    writeln!(text, "range_3db_width_s = {}", rng.width_3db_s)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_analyze(
    cfg: &RunConfig,
    config_bytes: &[u8],
    out: &Path,
    compare_sta: bool,
) -> Result<()> {
    write_manifest(out, "analyze", config_bytes, cfg.seed)?;
    let element = cfg.element_model()?;
    let geom = cfg.geometry()?;
    let c = cfg.medium.sound_speed_m_s;

    // --- waveform-level figures -----------------------------------------
    io::write_csv_tf(&out.join("two_way_tf.csv"), &element.two_way)?;
    let mut summary = String::new();
    writeln!(summary, "# two-way chip characterization")?;
    writeln!(
        summary,
        "{:<8} {:>8} {:>8} {:>12} {:>12} {:>10} {:>10}",
        "cycles", "fbw_%", "fc_MHz", "fbw_att_%", "fc_att_MHz", "peak", "peak_att"
    )?;
    let mut peaks = Vec::new();
    for &cycles in &cfg.drive.cycles {
        let rx = received_chip(cfg, cycles)?;
        let att = attenuation_filter(&rx, 8.0, cfg.medium.attenuation_db_cm_mhz)?;
        let tag = cycles_tag(cycles);
        io::write_csv_waveform(&out.join(format!("chip_{tag}c_rx.csv")), &rx)?;
        let psd = periodogram(&rx);
        let psd_att = periodogram(&att);
        let (f, d) = psd.one_sided();
        io::write_csv_cut(
            &out.join(format!("chip_{tag}c_psd.csv")),
            "freq_hz,density",
            &f.iter().cloned().zip(d.iter().cloned()).collect::<Vec<_>>(),
        )?;
        let (fa, da) = psd_att.one_sided();
        io::write_csv_cut(
            &out.join(format!("chip_{tag}c_psd_att.csv")),
            "freq_hz,density",
            &fa.iter()
                .cloned()
                .zip(da.iter().cloned())
                .collect::<Vec<_>>(),
        )?;
        let bw = fractional_bandwidth(&psd)?;
        let bw_att = fractional_bandwidth(&psd_att)?;
        let reference = make_reference(&rx, &format!("{cycles}-cycle received chip"))?;
        let cor = correlate(&rx, &reference)?;
        let cor_att = correlate(&att, &reference)?;
        io::write_csv_waveform(&out.join(format!("corr_{tag}c.csv")), &cor)?;
        io::write_csv_waveform(&out.join(format!("corr_{tag}c_att.csv")), &cor_att)?;
        writeln!(
            summary,
            "{:<8} {:>8.1} {:>8.2} {:>12.1} {:>12.2} {:>10.4} {:>10.4}",
            cycles,
            100.0 * bw.fractional,
            bw.center / 1e6,
            100.0 * bw_att.fractional,
            bw_att.center / 1e6,
            cor.peak_abs(),
            cor_att.peak_abs(),
        )?;
        peaks.push((cycles, cor.peak_abs(), cor_att.peak_abs()));
    }
    if let Some((_, p2, p2a)) = peaks.iter().find(|(cy, _, _)| *cy == 2.0) {
        writeln!(summary, "\n# correlator peak ratios vs 2-cycle chip")?;
        for (cy, p, pa) in &peaks {
            writeln!(
                summary,
                "{cy}c: unattenuated {:.3}, attenuated {:.3}",
                p / p2,
                pa / p2a
            )?;
        }
    }

    // --- image-level figures ---------------------------------------------
    let mut profiles: Vec<(String, BeamwidthProfile)> = Vec::new();
    for scheme in &cfg.schemes {
        match scheme.kind.as_str() {
            "dw" | "sta" => {
                for (event, kind) in event_names(cfg, scheme) {
                    let data = read_event_channels(out, &event, scheme.code != "none")?;
                    let traces = event_traces(cfg, scheme, &data)?;
                    if let Some(depth) = scheme.grating_depth_m {
                        // beamwidth profile along the grating
                        let windows: Result<Vec<BeamformedImage>> = pin_positions(cfg)
                            .iter()
                            .map(|&x| {
                                Ok(das_beamform_traces(
                                    &traces,
                                    &kind,
                                    &geom,
                                    &profile_window(cfg, x, depth)?,
                                    c,
                                    &event,
                                )?)
                            })
                            .collect();
                        let profile = grating_profile(&windows?, &event)?;
                        write_profile_csv(out, &event, &profile)?;
                        profiles.push((event.clone(), profile));
                    } else {
                        let raster = Raster::new(
                            cfg.raster.center_m,
                            cfg.raster.extent_m,
                            cfg.raster.spacing_m,
                        )?;
                        let img = das_beamform_traces(&traces, &kind, &geom, &raster, c, &event)?;
                        io::write_image(
                            &out.join(format!("{event}_image.ucd")),
                            &img,
                            cfg.seed,
                            &event,
                        )?;
                        io::write_csv_image(&out.join(format!("{event}_image.csv")), &img)?;
                        let lsf = lsf_extract(&img)?;
                        let rng = range_resolution_extract(&img, c)?;
                        io::write_csv_cut(
                            &out.join(format!("{event}_lsf.csv")),
                            "lateral_m,amplitude",
                            &lsf.cut,
                        )?;
                        io::write_csv_cut(
                            &out.join(format!("{event}_range.csv")),
                            "depth_m,amplitude",
                            &rng.cut,
                        )?;
                        write_resolution_report(
                            &out.join(format!("{event}_resolution.txt")),
                            &event,
                            &img,
                            c,
                        )?;
                        writeln!(
                            summary,
                            "\n# {event}: lsf 3dB {:.3} mm, 6dB {:.3} mm, range {:.3} mm ({:.0} ns)",
                            lsf.width_3db * 1e3,
                            lsf.width_6db * 1e3,
                            rng.width_3db_m * 1e3,
                            rng.width_3db_s * 1e9
                        )?;
                        println!("analyze: {event}: image + resolution written");
                    }
                }
            }
            "sta_full" => {
                let depth = scheme.grating_depth_m.unwrap_or(25.0e-3);
                let mut shots = Vec::new();
                for (event, kind) in event_names(cfg, scheme) {
                    let data = read_event_channels(out, &event, false)?;
                    let traces = event_traces(cfg, scheme, &data)?;
                    let element_idx = match kind {
                        TxKind::Sta { element } => element,
                        _ => unreachable!(),
                    };
                    shots.push(StaShot {
                        element: element_idx,
                        traces,
                    });
                }
                let windows: Result<Vec<BeamformedImage>> = pin_positions(cfg)
                    .iter()
                    .map(|&x| {
                        Ok(sta_full_beamform(
                            &shots,
                            &geom,
                            &profile_window(cfg, x, depth)?,
                            c,
                            &scheme.name,
                        )?)
                    })
                    .collect();
                let profile = grating_profile(&windows?, &scheme.name)?;
                write_profile_csv(out, &scheme.name, &profile)?;
                profiles.push((scheme.name.clone(), profile));
                println!("analyze: {}: STA reference profile written", scheme.name);
            }
            _ => unreachable!(),
        }
    }

    if compare_sta {
        let sta = profiles
            .iter()
            .find(|(n, _)| {
                cfg.schemes
                    .iter()
                    .any(|s| s.kind == "sta_full" && s.name == *n)
            })
            .context("--compare sta needs a sta_full scheme with a grating profile")?;
        let mut rows = String::from("position_m");
        let others: Vec<&(String, BeamwidthProfile)> =
            profiles.iter().filter(|(n, _)| n != &sta.0).collect();
        for (name, _) in &others {
            write!(rows, ",{name}_db")?;
        }
        writeln!(rows, ",{}_db", sta.0)?;
        for (i, &x) in sta.1.positions.iter().enumerate() {
            write!(rows, "{x}")?;
            for (_, p) in &others {
                write!(rows, ",{}", p.amplitudes_db[i])?;
            }
            writeln!(rows, ",{}", sta.1.amplitudes_db[i])?;
        }
        std::fs::write(out.join("beamwidth_compare.csv"), rows)?;
        println!("analyze: beamwidth_compare.csv written");
    }

    std::fs::write(out.join("summary.txt"), &summary)?;
    println!("analyze: summary.txt written");
    Ok(())
}

fn write_profile_csv(out: &Path, name: &str, profile: &BeamwidthProfile) -> Result<()> {
    let rows: Vec<(f64, f64)> = profile
        .positions
        .iter()
        .cloned()
        .zip(profile.amplitudes_db.iter().cloned())
        .collect();
    io::write_csv_cut(
        &out.join(format!("beamwidth_{name}.csv")),
        "position_m,amplitude_db",
        &rows,
    )?;
    Ok(())
}

// ------------------------------------------------------------ report ----

pub fn cmd_report(out: &Path) -> Result<PathBuf> {
    let manifest = out.join("run_manifest.txt");
    if !manifest.exists() {
        bail!(
            "missing input file {} (run a command into this directory first)",
            manifest.display()
        );
    }
    let mut text = String::new();
    writeln!(text, "=== run manifest ===")?;
    text.push_str(&std::fs::read_to_string(&manifest)?);
    let summary = out.join("summary.txt");
    if summary.exists() {
        writeln!(text, "\n=== analysis summary ===")?;
        text.push_str(&std::fs::read_to_string(&summary)?);
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in &entries {
        if p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with("_resolution.txt"))
        {
            writeln!(
                text,
                "\n=== {} ===",
                p.file_name().unwrap().to_string_lossy()
            )?;
            text.push_str(&std::fs::read_to_string(p)?);
        }
    }
    let path = out.join("report.txt");
    std::fs::write(&path, &text)?;
    print!("{text}");
    Ok(path)
}
