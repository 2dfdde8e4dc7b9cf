//! Flat key=value configuration files, run manifests, presets, and the
//! deterministic CSV number format.
//!
//! The manifest written next to every CSV is itself a valid configuration
//! file (metadata lines use the ignored `run.` prefix), so any result can
//! be reproduced with `simulate --config <manifest>`.

use anyhow::{anyhow, bail, Context, Result};
use dstbc_core::compensation::PbParams;
use dstbc_core::impairments::IqImbalance;
use dstbc_core::simulator::{ChannelKind, Compensation, DetectionMode, SimConfig, SimPath};
use std::fmt::Write as _;
use std::path::Path;

/// Parse `<amp>dB:<phase>deg` (e.g. `0.5dB:3deg`).
pub fn parse_iqi(s: &str) -> Result<IqImbalance> {
    let (amp, phase) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("expected <amp>dB:<phase>deg, got {s:?}"))?;
    let amp_db: f64 = amp
        .strip_suffix("dB")
        .or_else(|| amp.strip_suffix("db"))
        .unwrap_or(amp)
        .parse()
        .with_context(|| format!("bad amplitude imbalance {amp:?}"))?;
    let phase_deg: f64 = phase
        .strip_suffix("deg")
        .unwrap_or(phase)
        .parse()
        .with_context(|| format!("bad phase imbalance {phase:?}"))?;
    Ok(IqImbalance::from_db(amp_db, phase_deg))
}

/// Parse an SNR grid: either `lo:step:hi` or a comma list. `inf` is allowed.
pub fn parse_snr(s: &str) -> Result<Vec<f64>> {
    let one = |t: &str| -> Result<f64> {
        match t.trim() {
            "inf" => Ok(f64::INFINITY),
            other => other.parse().with_context(|| format!("bad SNR {other:?}")),
        }
    };
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (lo, step, hi) = (one(parts[0])?, one(parts[1])?, one(parts[2])?);
        if step <= 0.0 || hi < lo {
            bail!("bad SNR range {s:?}");
        }
        let mut grid = Vec::new();
        let mut i = 0;
        loop {
            let v = lo + step * i as f64;
            if v > hi + 1e-9 {
                break;
            }
            grid.push(v);
            i += 1;
        }
        return Ok(grid);
    }
    s.split(',').map(one).collect()
}

pub fn parse_channel(s: &str) -> Result<ChannelKind> {
    if s == "itu_va" {
        return Ok(ChannelKind::ItuVa);
    }
    if let Some(rest) = s.strip_prefix("equal_power:") {
        let taps: usize = rest.parse().with_context(|| format!("bad tap count {rest:?}"))?;
        return Ok(ChannelKind::EqualPower { taps });
    }
    bail!("unknown channel {s:?} (use itu_va or equal_power:<taps>)")
}

pub fn parse_comp(s: &str) -> Result<Compensation> {
    Ok(match s {
        "none" => Compensation::None,
        "wl" => Compensation::Wl,
        "rx_only" => Compensation::RxOnly,
        "pb" => Compensation::Pb,
        "oracle" => Compensation::Oracle,
        _ => bail!("unknown compensation {s:?}"),
    })
}

pub fn parse_mode(s: &str) -> Result<DetectionMode> {
    Ok(match s {
        "differential" => DetectionMode::Differential,
        "coherent" => DetectionMode::Coherent,
        _ => bail!("unknown mode {s:?}"),
    })
}

pub fn parse_path(s: &str) -> Result<SimPath> {
    Ok(match s {
        "fd" => SimPath::Fd,
        "td" => SimPath::Td,
        _ => bail!("unknown path {s:?}"),
    })
}

pub fn parse_modulation(s: &str) -> Result<usize> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "bpsk" | "2" => 2,
        "qpsk" | "4" => 4,
        "8psk" | "8" => 8,
        _ => bail!("unknown modulation {s:?} (bpsk, qpsk, 8psk)"),
    })
}

/// The experiment setups of the published evaluation.
pub fn preset(name: &str) -> Result<SimConfig> {
    let moderate = IqImbalance::from_db(0.5, 3.0);
    let severe = IqImbalance::from_db(1.0, 5.0);
    let base = SimConfig::default();
    Ok(match name {
        // slow fading, moderate imbalance at both ends
        "paper-moderate" => SimConfig {
            snr_db: parse_snr("0:2:40")?,
            iqi_tx: moderate,
            iqi_rx: moderate,
            ..base
        },
        // slow fading, severe imbalance at both ends; burst structure sized
        // so adaptive compensation is measured past its re-acquisition
        "paper-slow-severe" => SimConfig {
            snr_db: parse_snr("0:2:40")?,
            iqi_tx: severe,
            iqi_rx: severe,
            burst_blocks: 150,
            skip_blocks: 25,
            ..base
        },
        // ITU Vehicular-A at 200 km/h / 2.5 GHz carrier
        "paper-fast" => SimConfig {
            snr_db: parse_snr("0:5:40")?,
            iqi_tx: severe,
            iqi_rx: severe,
            channel: ChannelKind::ItuVa,
            doppler_hz: 463.0,
            ..base
        },
        _ => bail!("unknown preset {name:?} (paper-moderate, paper-slow-severe, paper-fast)"),
    })
}

fn channel_str(c: ChannelKind) -> String {
    match c {
        ChannelKind::EqualPower { taps } => format!("equal_power:{taps}"),
        ChannelKind::ItuVa => "itu_va".into(),
    }
}

fn comp_str(c: Compensation) -> &'static str {
    match c {
        Compensation::None => "none",
        Compensation::Wl => "wl",
        Compensation::RxOnly => "rx_only",
        Compensation::Pb => "pb",
        Compensation::Oracle => "oracle",
    }
}

fn mode_str(m: DetectionMode) -> &'static str {
    match m {
        DetectionMode::Differential => "differential",
        DetectionMode::Coherent => "coherent",
    }
}

fn path_str(p: SimPath) -> &'static str {
    match p {
        SimPath::Fd => "fd",
        SimPath::Td => "td",
    }
}

fn snr_str(snr: &[f64]) -> String {
    snr.iter()
        .map(|s| {
            if s.is_infinite() {
                "inf".to_string()
            } else {
                format!("{s}")
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Serialize a full configuration as key=value lines (round-trip exact:
/// floats use the shortest representation that parses back identically).
pub fn config_to_string(cfg: &SimConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n_fft={}", cfg.n_fft);
    let _ = writeln!(s, "psk_order={}", cfg.psk_order);
    let _ = writeln!(s, "snr_db={}", snr_str(&cfg.snr_db));
    let _ = writeln!(s, "iqi_tx.amp_db={}", cfg.iqi_tx.amp_db);
    let _ = writeln!(s, "iqi_tx.phase_deg={}", cfg.iqi_tx.phase_deg);
    let _ = writeln!(s, "iqi_rx.amp_db={}", cfg.iqi_rx.amp_db);
    let _ = writeln!(s, "iqi_rx.phase_deg={}", cfg.iqi_rx.phase_deg);
    let _ = writeln!(s, "channel={}", channel_str(cfg.channel));
    let _ = writeln!(s, "doppler_hz={}", cfg.doppler_hz);
    let _ = writeln!(s, "sample_rate_hz={}", cfg.sample_rate_hz);
    let _ = writeln!(s, "mode={}", mode_str(cfg.mode));
    let _ = writeln!(s, "comp={}", comp_str(cfg.comp));
    let _ = writeln!(s, "path={}", path_str(cfg.path));
    let _ = writeln!(s, "cp_len={}", cfg.cp_len);
    let _ = writeln!(s, "bits_target={}", cfg.bits_target);
    let _ = writeln!(s, "errors_target={}", cfg.errors_target);
    let _ = writeln!(s, "burst_blocks={}", cfg.burst_blocks);
    let _ = writeln!(s, "skip_blocks={}", cfg.skip_blocks);
    let _ = writeln!(s, "rls_mu={}", cfg.rls_mu);
    let _ = writeln!(s, "rls_delta={}", cfg.rls_delta);
    let _ = writeln!(s, "pb.mu_a={}", cfg.pb.mu_a);
    let _ = writeln!(s, "pb.mu_b={}", cfg.pb.mu_b);
    let _ = writeln!(s, "pb.mu_r={}", cfg.pb.mu_r);
    let _ = writeln!(s, "pb.n_ini_symbols={}", cfg.pb.n_ini_symbols);
    let _ = writeln!(s, "seed={}", cfg.seed);
    s
}

/// Apply one key=value assignment to a configuration.
pub fn apply_key(cfg: &mut SimConfig, key: &str, value: &str) -> Result<()> {
    let mut pb: PbParams = cfg.pb;
    match key {
        "n_fft" => cfg.n_fft = value.parse()?,
        "psk_order" => cfg.psk_order = value.parse()?,
        "snr_db" => cfg.snr_db = parse_snr(value)?,
        "iqi_tx.amp_db" => {
            cfg.iqi_tx = IqImbalance::from_db(value.parse()?, cfg.iqi_tx.phase_deg)
        }
        "iqi_tx.phase_deg" => {
            cfg.iqi_tx = IqImbalance::from_db(cfg.iqi_tx.amp_db, value.parse()?)
        }
        "iqi_rx.amp_db" => {
            cfg.iqi_rx = IqImbalance::from_db(value.parse()?, cfg.iqi_rx.phase_deg)
        }
        "iqi_rx.phase_deg" => {
            cfg.iqi_rx = IqImbalance::from_db(cfg.iqi_rx.amp_db, value.parse()?)
        }
        "channel" => cfg.channel = parse_channel(value)?,
        "doppler_hz" => cfg.doppler_hz = value.parse()?,
        "sample_rate_hz" => cfg.sample_rate_hz = value.parse()?,
        "mode" => cfg.mode = parse_mode(value)?,
        "comp" => cfg.comp = parse_comp(value)?,
        "path" => cfg.path = parse_path(value)?,
        "cp_len" => cfg.cp_len = value.parse()?,
        "bits_target" => cfg.bits_target = value.parse()?,
        "errors_target" => cfg.errors_target = value.parse()?,
        "burst_blocks" => cfg.burst_blocks = value.parse()?,
        "skip_blocks" => cfg.skip_blocks = value.parse()?,
        "rls_mu" => cfg.rls_mu = value.parse()?,
        "rls_delta" => cfg.rls_delta = value.parse()?,
        "pb.mu_a" => {
            pb.mu_a = value.parse()?;
            cfg.pb = pb;
        }
        "pb.mu_b" => {
            pb.mu_b = value.parse()?;
            cfg.pb = pb;
        }
        "pb.mu_r" => {
            pb.mu_r = value.parse()?;
            cfg.pb = pb;
        }
        "pb.n_ini_symbols" => {
            pb.n_ini_symbols = value.parse()?;
            cfg.pb = pb;
        }
        "seed" => cfg.seed = value.parse()?,
        _ => bail!("unknown configuration key {key:?}"),
    }
    Ok(())
}

/// Load a configuration file (or manifest: `run.*` keys are skipped).
pub fn load_config(path: &Path, base: SimConfig) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = base;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("run.") {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key=value", lineno + 1))?;
        apply_key(&mut cfg, key.trim(), value.trim())
            .with_context(|| format!("line {}", lineno + 1))?;
    }
    Ok(cfg)
}

/// Deterministic decimal with six significant digits (CSV number format).
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    let exp = x.abs().log10().floor() as i32;
    let prec = (5 - exp).clamp(0, 17) as usize;
    format!("{x:.prec$}")
}
