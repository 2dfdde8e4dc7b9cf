//! Probe round 7: WL burst-structure selection on a common grid.

use dstbc_core::impairments::IqImbalance;
use dstbc_core::simulator::{run_sweep_with_threads, ChannelKind, Compensation, SimConfig};
use dstbc_core::BerRecord;

fn shift_db(reference: &[BerRecord], shifted: &[BerRecord], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = reference
        .iter()
        .filter(|r| r.ber > 0.0 && r.ber >= lo && r.ber <= hi)
        .map(|r| (r.snr_db, r.ber.log10()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let mut acc = 0.0;
    let mut cnt = 0;
    for (a, b) in reference.iter().zip(shifted.iter()) {
        if a.ber >= lo && a.ber <= hi && b.ber > 0.0 && b.ber >= lo && b.ber <= hi {
            acc += (b.ber / a.ber).log10();
            cnt += 1;
        }
    }
    if cnt < 2 {
        return None;
    }
    Some((acc / cnt as f64) / (-slope))
}

fn main() {
    let rich = ChannelKind::EqualPower { taps: 32 };
    let grid: Vec<f64> = (18..=26).map(f64::from).collect();
    let sev = IqImbalance::from_db(1.0, 5.0);
    for seed in [1u64, 2, 3, 4] {
        let base = SimConfig {
            errors_target: u64::MAX,
            bits_target: 8_000_000,
            channel: rich,
            snr_db: grid.clone(),
            seed,
            ..SimConfig::default()
        };
        let ideal = run_sweep_with_threads(&base, None).unwrap();
        let mut line = format!("seed {seed}:");
        for (burst, skip) in [(150usize, 25usize), (160, 20), (200, 15), (140, 30)] {
            let mut cfg = base.clone();
            cfg.iqi_tx = sev;
            cfg.iqi_rx = sev;
            cfg.comp = Compensation::Wl;
            cfg.burst_blocks = burst;
            cfg.skip_blocks = skip;
            let wl = run_sweep_with_threads(&cfg, None).unwrap();
            match shift_db(&ideal, &wl, 1e-4, 2e-2) {
                Some(s) => line.push_str(&format!("  b{burst}s{skip}: {s:.3}")),
                None => line.push_str(&format!("  b{burst}s{skip}: n/a")),
            }
        }
        println!("{line}");
    }
}
