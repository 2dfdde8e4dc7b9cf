//! End-to-end Monte Carlo engine: bit generation through differential (or
//! coherent) Alamouti encoding, the I/Q-imbalance channel, optional blind
//! compensation, ML detection and BER counting.
//!
//! Two signal paths produce the per-subcarrier received blocks:
//!
//! - `Fd`: the frequency-domain model applied scalar-by-scalar per OFDM
//!   symbol (the channel may evolve between symbols, but the model is
//!   ICI-free);
//! - `Td`: the full waveform path (IFFT, cyclic prefix, time-domain
//!   front-end distortion, tapped-delay-line convolution, AWGN, FFT). For a
//!   static channel the two paths agree to machine precision; under Doppler
//!   only the waveform path exhibits inter-carrier interference.
//!
//! Results are a pure function of the configuration: every (SNR point,
//! trial) pair gets its own counter-mode RNG stream, so sweeps are
//! reproducible regardless of how many workers execute them.

use crate::alamouti::{
    coherent_detect, make_info_matrix, ml_diff_detect, reference_block, AlamoutiMatrix, Decision,
    PskAlphabet,
};
use crate::channel::{
    awgn_sample, mirror_bin, ChannelModel, ChannelState, FreqResponse, PowerDelayProfile,
};
use crate::compensation::{
    build_regressors, closed_form_gamma_c, compensate, PairBlocks, PairState, PbParams, PbState,
    RxOnlyRls,
};
use crate::impairments::{distort_time_inplace, IqImbalance};
use crate::{Error, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use rustfft::Fft;
use std::sync::Arc;
use std::time::Instant;

/// Multipath profile selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Equal-power taps at consecutive samples.
    EqualPower { taps: usize },
    /// ITU-R M.1225 Vehicular-A.
    ItuVa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    Differential,
    Coherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compensation {
    None,
    /// Per-subcarrier widely-linear RLS.
    Wl,
    /// Shared scalar RX-only estimator.
    RxOnly,
    /// Parameter-based joint estimator (warm-up + mirror-linked updates).
    Pb,
    /// Genie closed-form compensation matrices from the true channel and
    /// front ends.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimPath {
    Fd,
    Td,
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// FFT size (power of two); subcarriers 1 and N/2+1 carry no data.
    pub n_fft: usize,
    /// PSK order (2, 4 or 8).
    pub psk_order: usize,
    pub snr_db: Vec<f64>,
    pub iqi_tx: IqImbalance,
    pub iqi_rx: IqImbalance,
    pub channel: ChannelKind,
    pub doppler_hz: f64,
    pub sample_rate_hz: f64,
    pub mode: DetectionMode,
    pub comp: Compensation,
    pub path: SimPath,
    pub cp_len: usize,
    /// Stop a point once this many bits have been counted ...
    pub bits_target: u64,
    /// ... or once this many bit errors have accumulated.
    pub errors_target: u64,
    /// Blocks per independent burst in quasi-static fading (incl. the
    /// reference block). With Doppler the stream is continuous instead.
    pub burst_blocks: usize,
    /// Data blocks at the start of each burst (or stream) that update the
    /// compensators but are excluded from BER counting.
    pub skip_blocks: usize,
    /// RLS forgetting factor.
    pub rls_mu: f64,
    /// RLS regularization (`P0 = I / rls_delta`).
    pub rls_delta: f64,
    pub pb: PbParams,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_fft: 64,
            psk_order: 4,
            snr_db: (0..=40).step_by(5).map(f64::from).collect(),
            iqi_tx: IqImbalance::ideal(),
            iqi_rx: IqImbalance::ideal(),
            channel: ChannelKind::EqualPower { taps: 8 },
            doppler_hz: 0.0,
            sample_rate_hz: 5e6,
            mode: DetectionMode::Differential,
            comp: Compensation::None,
            path: SimPath::Fd,
            cp_len: 16,
            bits_target: 1_000_000,
            errors_target: 100,
            burst_blocks: 100,
            skip_blocks: 0,
            rls_mu: 0.9,
            rls_delta: 0.01,
            pb: PbParams::default(),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn pdp(&self) -> PowerDelayProfile {
        match self.channel {
            ChannelKind::EqualPower { taps } => {
                PowerDelayProfile::equal_power(taps, 1.0 / self.sample_rate_hz)
            }
            ChannelKind::ItuVa => PowerDelayProfile::itu_va(),
        }
    }

    /// Short tag identifying detection mode and compensation, used in
    /// records and CSV rows.
    pub fn scheme_tag(&self) -> String {
        let mode = match self.mode {
            DetectionMode::Differential => "diff",
            DetectionMode::Coherent => "coh",
        };
        let comp = match self.comp {
            Compensation::None => "none",
            Compensation::Wl => "wl",
            Compensation::RxOnly => "rx_only",
            Compensation::Pb => "pb",
            Compensation::Oracle => "oracle",
        };
        format!("{mode}-{comp}")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !self.n_fft.is_power_of_two() || self.n_fft < 8 {
            return bad("n_fft must be a power of two, at least 8");
        }
        PskAlphabet::new(self.psk_order)?;
        if self.snr_db.is_empty() {
            return bad("empty SNR list");
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return bad("NaN SNR");
        }
        if self.sample_rate_hz <= 0.0 || self.doppler_hz < 0.0 {
            return bad("sample rate must be positive, Doppler nonnegative");
        }
        if self.bits_target == 0 || self.errors_target == 0 {
            return bad("bits/errors targets must be positive");
        }
        if self.burst_blocks < 2 {
            return bad("burst must hold at least one data block");
        }
        if self.skip_blocks + 1 >= self.burst_blocks && self.doppler_hz == 0.0 {
            return bad("skip_blocks leaves no counted blocks per burst");
        }
        if !(0.5..=1.0).contains(&self.rls_mu) || self.rls_delta <= 0.0 {
            return bad("rls_mu must be in [0.5, 1], rls_delta positive");
        }
        if self.mode == DetectionMode::Coherent && self.comp != Compensation::None {
            return bad("compensation is defined for differential detection only");
        }
        let memory =
            ChannelModel::new(self.pdp(), self.sample_rate_hz, self.doppler_hz)?.memory_samples();
        if memory + 1 > self.n_fft {
            return Err(Error::CirTooLong {
                cir: memory + 1,
                n: self.n_fft,
            });
        }
        if self.path == SimPath::Td && self.cp_len < memory {
            return Err(Error::CpTooShort {
                cp: self.cp_len,
                mem: memory,
            });
        }
        Ok(())
    }

    /// 1-based data subcarriers (everything except bins 1 and N/2+1).
    pub fn data_bins(&self) -> Vec<usize> {
        (2..=self.n_fft)
            .filter(|&n| n != self.n_fft / 2 + 1)
            .collect()
    }

    /// Lower member of every mirror pair: `n = 2 ..= N/2`.
    pub fn pair_heads(&self) -> Vec<usize> {
        (2..=self.n_fft / 2).collect()
    }
}

/// One sweep point's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub scheme: String,
    pub snr_db: f64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub wall_time_s: f64,
}

fn sigma2_from_snr_db(snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

fn trial_rng(seed: u64, point: usize, trial: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) ^ trial);
    rng
}

/// Per-burst transmitter + channel front end: generates the raw received
/// blocks of every data subcarrier for consecutive Alamouti blocks.
pub(crate) struct Emitter<'c> {
    cfg: &'c SimConfig,
    sigma2: f64,
    alphabet: PskAlphabet,
    ch: ChannelState,
    pub(crate) fr: FreqResponse,
    /// Current codeword per bin (1-based indexing, entry 0 unused).
    s: Vec<AlamoutiMatrix>,
    symbol_duration: f64,
    symbols_emitted: u64,
    td: Option<TdState>,
    // scratch
    tx_scalars: [Vec<C64>; 2],
    mixed: [Vec<C64>; 2],
    received: Vec<C64>,
    z_scalars: [Vec<C64>; 2],
}

struct TdState {
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// Last `memory` TX samples of each antenna (distorted stream).
    history: [Vec<C64>; 2],
    /// Global sample index for time-varying tap evaluation.
    sample_index: u64,
    gains: [Vec<C64>; 2],
    freq: Vec<C64>,
    time: Vec<C64>,
    stream: [Vec<C64>; 2],
    rx_stream: Vec<C64>,
}

impl<'c> Emitter<'c> {
    pub(crate) fn new(cfg: &'c SimConfig, sigma2: f64, ch: ChannelState) -> Result<Self> {
        let n = cfg.n_fft;
        let fr = ch.freq_response(n)?;
        let zero = C64::new(0.0, 0.0);
        let td = if cfg.path == SimPath::Td {
            let mut planner = rustfft::FftPlanner::new();
            let memory = ch.memory();
            Some(TdState {
                fft: planner.plan_fft_forward(n),
                ifft: planner.plan_fft_inverse(n),
                history: [vec![zero; memory], vec![zero; memory]],
                sample_index: 0,
                gains: [vec![zero; memory + 1], vec![zero; memory + 1]],
                freq: vec![zero; n],
                time: vec![zero; n],
                stream: [vec![zero; n + cfg.cp_len], vec![zero; n + cfg.cp_len]],
                rx_stream: vec![zero; n + cfg.cp_len],
            })
        } else {
            None
        };
        Ok(Self {
            cfg,
            sigma2,
            alphabet: PskAlphabet::new(cfg.psk_order)?,
            ch,
            fr,
            s: vec![AlamoutiMatrix::ZERO; n + 1],
            symbol_duration: (n + cfg.cp_len) as f64 / cfg.sample_rate_hz,
            symbols_emitted: 0,
            td,
            tx_scalars: [vec![zero; n + 1], vec![zero; n + 1]],
            mixed: [vec![zero; n + 1], vec![zero; n + 1]],
            received: vec![zero; n + 1],
            z_scalars: [vec![zero; n + 1], vec![zero; n + 1]],
        })
    }

    /// Load the reference codeword onto every data bin (differential mode).
    pub(crate) fn load_reference(&mut self) {
        for bin in self.cfg.data_bins() {
            self.s[bin] = reference_block();
        }
    }

    /// Draw fresh symbols, advance the differential state (or set the
    /// coherent codeword directly), and return the transmitted point
    /// indices per bin.
    pub(crate) fn advance_data(&mut self, rng: &mut ChaCha12Rng) -> Vec<(usize, usize, usize)> {
        let m = self.alphabet.order();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut truth = Vec::with_capacity(self.cfg.n_fft);
        for bin in self.cfg.data_bins() {
            let i1 = rng.random_range(0..m);
            let i2 = rng.random_range(0..m);
            let u = make_info_matrix(self.alphabet.point(i1), self.alphabet.point(i2))
                .expect("alphabet points are unit modulus")
                .scale(h);
            self.s[bin] = match self.cfg.mode {
                DetectionMode::Differential => self.s[bin].mul(&u),
                DetectionMode::Coherent => u,
            };
            truth.push((bin, i1, i2));
        }
        truth
    }

    /// Emit one Alamouti block (two OFDM symbols) through the configured
    /// path; returns the received blocks per bin (1-based).
    pub(crate) fn emit_block(&mut self, rng: &mut ChaCha12Rng) -> Result<Vec<AlamoutiMatrix>> {
        let n = self.cfg.n_fft;
        for col in 0..2 {
            if self.symbols_emitted > 0 {
                self.ch.evolve(self.symbol_duration);
                if self.cfg.doppler_hz > 0.0 && self.cfg.path == SimPath::Fd {
                    self.ch.freq_response_into(&mut self.fr)?;
                }
            }
            match self.cfg.path {
                SimPath::Fd => self.emit_symbol_fd(col, rng),
                SimPath::Td => self.emit_symbol_td(col, rng),
            }
            self.symbols_emitted += 1;
        }
        let mut blocks = vec![AlamoutiMatrix::ZERO; n + 1];
        for bin in self.cfg.data_bins() {
            blocks[bin] = AlamoutiMatrix::new(self.z_scalars[0][bin], self.z_scalars[1][bin]);
        }
        Ok(blocks)
    }

    /// Frequency-domain model, scalar per subcarrier: TX image mixing,
    /// per-bin channel gain, AWGN, RX image mixing.
    fn emit_symbol_fd(&mut self, col: usize, rng: &mut ChaCha12Rng) {
        let n = self.cfg.n_fft;
        let tx = &self.cfg.iqi_tx;
        let rx = &self.cfg.iqi_rx;
        let bins = self.cfg.data_bins();
        for &bin in &bins {
            for ant in 0..2 {
                self.tx_scalars[ant][bin] = self.s[bin].entry(ant, col);
            }
        }
        for &bin in &bins {
            let mir = mirror_bin(bin, n);
            for ant in 0..2 {
                self.mixed[ant][bin] = tx.alpha * self.tx_scalars[ant][bin]
                    + tx.beta * self.tx_scalars[ant][mir].conj();
            }
        }
        for &bin in &bins {
            self.received[bin] = self.fr.lambda(0, bin) * self.mixed[0][bin]
                + self.fr.lambda(1, bin) * self.mixed[1][bin]
                + awgn_sample(self.sigma2, rng);
        }
        for &bin in &bins {
            let mir = mirror_bin(bin, n);
            self.z_scalars[col][bin] =
                rx.alpha * self.received[bin] + rx.beta * self.received[mir].conj();
        }
    }

    /// Waveform path: IFFT + CP + TX distortion + (time-varying) tapped
    /// delay line + AWGN + RX distortion + CP removal + FFT.
    fn emit_symbol_td(&mut self, col: usize, rng: &mut ChaCha12Rng) {
        let n = self.cfg.n_fft;
        let cp = self.cfg.cp_len;
        let td = self.td.as_mut().expect("td state present");
        let scale = 1.0 / (n as f64).sqrt();
        let time_varying = self.ch.doppler_hz() > 0.0;

        // synthesize and distort both antennas' streams for this symbol
        for ant in 0..2 {
            td.freq.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for bin in self.cfg.data_bins() {
                td.freq[bin - 1] = self.s[bin].entry(ant, col);
            }
            td.time.copy_from_slice(&td.freq);
            td.fft.process(&mut td.time);
            for x in td.time.iter_mut() {
                *x *= scale;
            }
            td.stream[ant][..cp].copy_from_slice(&td.time[n - cp..]);
            td.stream[ant][cp..].copy_from_slice(&td.time);
            distort_time_inplace(&mut td.stream[ant], &self.cfg.iqi_tx);
        }

        // convolve (linear, with history across symbol boundaries), add
        // noise, receiver distortion
        let memory = self.ch.memory();
        if !time_varying {
            for ant in 0..2 {
                td.gains[ant].copy_from_slice(self.ch.gains(ant));
            }
        }
        for t in 0..n + cp {
            if time_varying {
                let t_abs = (td.sample_index + t as u64) as f64 / self.cfg.sample_rate_hz;
                for ant in 0..2 {
                    self.ch.write_gains_at(ant, t_abs, &mut td.gains[ant]);
                }
            }
            let mut y = awgn_sample(self.sigma2, rng);
            for ant in 0..2 {
                for (l, &g) in td.gains[ant].iter().enumerate() {
                    if g.norm_sqr() == 0.0 {
                        continue;
                    }
                    let x = if t >= l {
                        td.stream[ant][t - l]
                    } else {
                        td.history[ant][memory - (l - t)]
                    };
                    y += g * x;
                }
            }
            td.rx_stream[t] = y;
        }
        distort_time_inplace(&mut td.rx_stream, &self.cfg.iqi_rx);

        for ant in 0..2 {
            if memory > 0 {
                let tail: Vec<C64> = td.stream[ant][n + cp - memory..].to_vec();
                td.history[ant].copy_from_slice(&tail);
            }
        }
        td.sample_index += (n + cp) as u64;

        // FFT window after CP removal (analysis kernel is the inverse FFT)
        td.time.copy_from_slice(&td.rx_stream[cp..]);
        td.ifft.process(&mut td.time);
        for bin in self.cfg.data_bins() {
            self.z_scalars[col][bin] = td.time[bin - 1] * scale;
        }
    }
}

/// Adaptive receiver state. The estimator banks persist across bursts
/// within one simulated point: the RX-side parameters are channel
/// independent, and a tracking receiver is never cold-started just because
/// the channel decorrelated. Only the genie bank is tied to the current
/// channel realization.
enum Bank {
    None,
    Oracle(Vec<AlamoutiMatrix>),
    Wl(Vec<PairState>),
    RxOnly(RxOnlyRls),
    Pb(Vec<PairState>),
}

pub(crate) struct Receiver<'c> {
    cfg: &'c SimConfig,
    alphabet: PskAlphabet,
    bank: Bank,
    /// Previous raw blocks per bin (differential reference).
    prev: Vec<AlamoutiMatrix>,
}

impl<'c> Receiver<'c> {
    pub(crate) fn new(cfg: &'c SimConfig, pb: &PbState) -> Result<Self> {
        let pairs = cfg.pair_heads().len();
        let bank = match cfg.comp {
            Compensation::None | Compensation::Oracle => Bank::None,
            Compensation::Wl => {
                Bank::Wl((0..pairs).map(|_| PairState::new(cfg.rls_delta)).collect())
            }
            Compensation::RxOnly => Bank::RxOnly(RxOnlyRls::new(cfg.rls_delta)),
            Compensation::Pb => {
                let steady = !pb.in_warmup();
                Bank::Pb(
                    (0..pairs)
                        .map(|_| PairState::with_phase(cfg.rls_delta, steady))
                        .collect(),
                )
            }
        };
        Ok(Self {
            cfg,
            alphabet: PskAlphabet::new(cfg.psk_order)?,
            bank,
            prev: vec![AlamoutiMatrix::ZERO; cfg.n_fft + 1],
        })
    }

    /// Per-burst rebinding: the genie matrices follow the new channel; the
    /// adaptive banks keep tracking.
    pub(crate) fn start_burst(&mut self, fr: &FreqResponse) -> Result<()> {
        if self.cfg.comp == Compensation::Oracle {
            self.bank = Bank::Oracle(Self::oracle_bank(self.cfg, fr)?);
        }
        Ok(())
    }

    fn oracle_bank(cfg: &SimConfig, fr: &FreqResponse) -> Result<Vec<AlamoutiMatrix>> {
        let mut gc = vec![AlamoutiMatrix::ZERO; cfg.n_fft + 1];
        for bin in cfg.data_bins() {
            gc[bin] = closed_form_gamma_c(
                &cfg.iqi_tx,
                &cfg.iqi_rx,
                &fr.big_lambda(bin),
                &fr.big_lambda_bar(bin),
            )?;
        }
        Ok(gc)
    }

    pub(crate) fn set_reference(&mut self, blocks: &[AlamoutiMatrix]) {
        self.prev.copy_from_slice(blocks);
    }

    /// Process one data block: compensate, detect, adapt. Returns decisions
    /// indexed by bin.
    pub(crate) fn process_block(
        &mut self,
        cur: &[AlamoutiMatrix],
        fr: &FreqResponse,
        pb: &mut PbState,
    ) -> Result<Vec<Option<Decision>>> {
        self.process_block_with_sign(cur, fr, pb, false)
    }

    /// `flip_sign` is threaded into the widely-linear RLS updates; only the
    /// self-check suite uses it (mutation check).
    pub(crate) fn process_block_with_sign(
        &mut self,
        cur: &[AlamoutiMatrix],
        fr: &FreqResponse,
        pb: &mut PbState,
        flip_sign: bool,
    ) -> Result<Vec<Option<Decision>>> {
        let n = self.cfg.n_fft;
        let mut decisions: Vec<Option<Decision>> = vec![None; n + 1];

        if self.cfg.mode == DetectionMode::Coherent {
            for bin in self.cfg.data_bins() {
                decisions[bin] = Some(coherent_detect(
                    &fr.big_lambda(bin),
                    &cur[bin],
                    &self.alphabet,
                ));
            }
            return Ok(decisions);
        }

        // refresh the genie matrices under Doppler (the channel moved since
        // burst start)
        if matches!(self.bank, Bank::Oracle(_)) && self.cfg.doppler_hz > 0.0 {
            self.bank = Bank::Oracle(Self::oracle_bank(self.cfg, fr)?);
        }

        for (pair_idx, bin) in self.cfg.pair_heads().into_iter().enumerate() {
            let mir = mirror_bin(bin, n);
            let prev = PairBlocks {
                z_n: self.prev[bin],
                z_m: self.prev[mir],
            };
            let blocks = PairBlocks {
                z_n: cur[bin],
                z_m: cur[mir],
            };
            let (dec_n, dec_m) = match &mut self.bank {
                Bank::None => (
                    ml_diff_detect(&prev.z_n, &blocks.z_n, &self.alphabet),
                    ml_diff_detect(&prev.z_m, &blocks.z_m, &self.alphabet),
                ),
                Bank::Oracle(gc) => {
                    let (sp_n, _) = compensate(&prev.z_n, &prev.z_m.conj(), &gc[bin], &gc[mir]);
                    let (sc_n, _) =
                        compensate(&blocks.z_n, &blocks.z_m.conj(), &gc[bin], &gc[mir]);
                    let (sp_m, _) = compensate(&prev.z_m, &prev.z_n.conj(), &gc[mir], &gc[bin]);
                    let (sc_m, _) =
                        compensate(&blocks.z_m, &blocks.z_n.conj(), &gc[mir], &gc[bin]);
                    (
                        ml_diff_detect(&sp_n, &sc_n, &self.alphabet),
                        ml_diff_detect(&sp_m, &sc_m, &self.alphabet),
                    )
                }
                Bank::Wl(pairs) => {
                    let d = pairs[pair_idx].wl_step_with_sign(
                        &prev,
                        &blocks,
                        &self.alphabet,
                        self.cfg.rls_mu,
                        flip_sign,
                    );
                    (d.n, d.m)
                }
                Bank::RxOnly(rls) => {
                    let gc = rls.gamma_c();
                    let (sp_n, _) = compensate(&prev.z_n, &prev.z_m.conj(), &gc, &gc.conj());
                    let (sc_n, _) = compensate(&blocks.z_n, &blocks.z_m.conj(), &gc, &gc.conj());
                    let (sp_m, _) = compensate(&prev.z_m, &prev.z_n.conj(), &gc, &gc.conj());
                    let (sc_m, _) = compensate(&blocks.z_m, &blocks.z_n.conj(), &gc, &gc.conj());
                    let dn = ml_diff_detect(&sp_n, &sc_n, &self.alphabet);
                    let dm = ml_diff_detect(&sp_m, &sc_m, &self.alphabet);
                    let reg_n = build_regressors(
                        &prev.z_n,
                        &blocks.z_n,
                        &prev.z_m.conj(),
                        &blocks.z_m.conj(),
                        &dn.info,
                    );
                    rls.update(&reg_n, self.cfg.rls_mu);
                    let reg_m = build_regressors(
                        &prev.z_m,
                        &blocks.z_m,
                        &prev.z_n.conj(),
                        &blocks.z_n.conj(),
                        &dm.info,
                    );
                    rls.update(&reg_m, self.cfg.rls_mu);
                    (dn, dm)
                }
                Bank::Pb(pairs) => {
                    let d = pairs[pair_idx].pb_step(
                        pb,
                        &prev,
                        &blocks,
                        &self.alphabet,
                        self.cfg.rls_mu,
                    );
                    (d.n, d.m)
                }
            };
            decisions[bin] = Some(dec_n);
            decisions[mir] = Some(dec_m);
        }
        if matches!(self.bank, Bank::Pb(_)) {
            pb.tick_block();
        }
        self.prev.copy_from_slice(cur);
        Ok(decisions)
    }

    /// Current per-pair compensation matrix estimates of an adaptive bank.
    pub(crate) fn pair_gammas(&self) -> Vec<(AlamoutiMatrix, AlamoutiMatrix)> {
        match &self.bank {
            Bank::Wl(pairs) | Bank::Pb(pairs) => pairs
                .iter()
                .map(|p| (p.rls_n.gamma_c(), p.rls_m.gamma_c()))
                .collect(),
            _ => Vec::new(),
        }
    }
}

/// Simulate one SNR point of the sweep (deterministic in
/// `(cfg, point_index)`).
pub fn run_point(cfg: &SimConfig, point_index: usize) -> Result<BerRecord> {
    cfg.validate()?;
    let snr_db = *cfg
        .snr_db
        .get(point_index)
        .ok_or_else(|| Error::InvalidConfig(format!("SNR point {point_index} out of range")))?;
    let start = Instant::now();
    let sigma2 = sigma2_from_snr_db(snr_db);
    let model = ChannelModel::new(cfg.pdp(), cfg.sample_rate_hz, cfg.doppler_hz)?;
    let alphabet = PskAlphabet::new(cfg.psk_order)?;
    let bits_per_block = cfg.data_bins().len() as u64 * 2 * alphabet.bits_per_symbol() as u64;
    let continuous = cfg.doppler_hz > 0.0;

    let mut bits = 0u64;
    let mut errors = 0u64;
    // estimator state persists across bursts: the front-end parameters are
    // device properties, not channel properties
    let mut pb = PbState::new(cfg.pb);
    let mut receiver = Receiver::new(cfg, &pb)?;
    let mut trial: u64 = 0;

    'outer: while bits < cfg.bits_target && errors < cfg.errors_target {
        let mut rng = trial_rng(cfg.seed, point_index, trial);
        let ch = model.gen(&mut rng);
        let mut emitter = Emitter::new(cfg, sigma2, ch)?;
        receiver.start_burst(&emitter.fr)?;

        if cfg.mode == DetectionMode::Differential {
            emitter.load_reference();
            let blocks = emitter.emit_block(&mut rng)?;
            receiver.set_reference(&blocks);
        }

        let mut data_block = 0usize;
        loop {
            if !continuous && data_block + 1 >= cfg.burst_blocks {
                break;
            }
            let truth = emitter.advance_data(&mut rng);
            let blocks = emitter.emit_block(&mut rng)?;
            let decisions = receiver.process_block(&blocks, &emitter.fr, &mut pb)?;
            if data_block >= cfg.skip_blocks {
                for &(bin, i1, i2) in &truth {
                    let dec = decisions[bin].expect("decision for every data bin");
                    let l1 = alphabet.label_of(dec.idx1) ^ alphabet.label_of(i1);
                    let l2 = alphabet.label_of(dec.idx2) ^ alphabet.label_of(i2);
                    errors += (l1.count_ones() + l2.count_ones()) as u64;
                }
                bits += bits_per_block;
                if bits >= cfg.bits_target || errors >= cfg.errors_target {
                    break 'outer;
                }
            }
            data_block += 1;
        }
        trial += 1;
    }

    Ok(BerRecord {
        scheme: cfg.scheme_tag(),
        snr_db,
        bits,
        bit_errors: errors,
        ber: if bits > 0 {
            errors as f64 / bits as f64
        } else {
            0.0
        },
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Sweep every configured SNR point with an explicit worker cap (`None`
/// uses the global thread pool). Points are independent and independently
/// seeded, so the result does not depend on the worker count.
pub fn run_sweep_with_threads(cfg: &SimConfig, threads: Option<usize>) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    let indices: Vec<usize> = (0..cfg.snr_db.len()).collect();
    let work = || {
        indices
            .par_iter()
            .map(|&i| run_point(cfg, i))
            .collect::<Result<Vec<BerRecord>>>()
    };
    match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(work)
        }
        None => work(),
    }
}

/// Sweep with the worker count taken from the `SIM_THREADS` environment
/// variable when set.
pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<BerRecord>> {
    let threads = std::env::var("SIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    run_sweep_with_threads(cfg, threads)
}
