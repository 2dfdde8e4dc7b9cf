//! Multipath Rayleigh channel generation (equal-power and ITU Vehicular-A
//! profiles), Doppler time evolution, per-subcarrier frequency response, and
//! AWGN.
//!
//! Each transmit antenna sees an independent tapped delay line. In
//! quasi-static mode the taps are fresh circular complex Gaussian draws per
//! realization; with a nonzero maximum Doppler shift each tap is a
//! sum-of-sinusoids process whose autocorrelation approaches the Clarke
//! spectrum's `J0(2 pi f_d tau)`.

use crate::alamouti::AlamoutiMatrix;
use crate::{Error, Result, C64};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Oscillators per quadrature branch in the sum-of-sinusoids fading process.
const SOS_OSCILLATORS: usize = 24;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Maximum Doppler shift for a mobile speed and carrier frequency.
pub fn max_doppler_hz(speed_kmh: f64, carrier_hz: f64) -> f64 {
    speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

/// 1-based image subcarrier index: `N - n + 2`, with bins 1 and N/2+1 being
/// their own images.
pub fn mirror_bin(n: usize, n_fft: usize) -> usize {
    if n == 1 {
        1
    } else {
        n_fft - n + 2
    }
}

/// A tap-delay/tap-power profile. Powers are normalized to unit total before
/// use.
#[derive(Debug, Clone)]
pub struct PowerDelayProfile {
    tap_delays_s: Vec<f64>,
    tap_powers_db: Vec<f64>,
}

impl PowerDelayProfile {
    pub fn new(tap_delays_s: Vec<f64>, tap_powers_db: Vec<f64>) -> Result<Self> {
        if tap_delays_s.is_empty() {
            return Err(Error::InvalidPdp("empty profile".into()));
        }
        if tap_delays_s.len() != tap_powers_db.len() {
            return Err(Error::InvalidPdp("delay/power length mismatch".into()));
        }
        let ascending = tap_delays_s.windows(2).all(|w| w[0] <= w[1]);
        if tap_delays_s[0] < 0.0 || !ascending {
            return Err(Error::InvalidPdp(
                "delays must be nonnegative ascending".into(),
            ));
        }
        Ok(Self {
            tap_delays_s,
            tap_powers_db,
        })
    }

    /// Equal-power taps at consecutive multiples of `tap_spacing_s`.
    pub fn equal_power(n_taps: usize, tap_spacing_s: f64) -> Self {
        Self {
            tap_delays_s: (0..n_taps).map(|i| i as f64 * tap_spacing_s).collect(),
            tap_powers_db: vec![0.0; n_taps],
        }
    }

    /// The ITU-R M.1225 Vehicular-A six-tap profile.
    pub fn itu_va() -> Self {
        Self {
            tap_delays_s: vec![0.0, 310e-9, 710e-9, 1090e-9, 1730e-9, 2510e-9],
            tap_powers_db: vec![0.0, -1.0, -9.0, -10.0, -15.0, -20.0],
        }
    }

    pub fn len(&self) -> usize {
        self.tap_delays_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tap_delays_s.is_empty()
    }

    pub fn tap_delays_s(&self) -> &[f64] {
        &self.tap_delays_s
    }

    /// Linear powers scaled to sum to one.
    pub fn normalized_linear_powers(&self) -> Vec<f64> {
        let lin: Vec<f64> = self
            .tap_powers_db
            .iter()
            .map(|db| 10f64.powf(db / 10.0))
            .collect();
        let total: f64 = lin.iter().sum();
        lin.into_iter().map(|p| p / total).collect()
    }

    /// Delays rounded to the nearest sample at the given rate.
    pub fn tap_sample_indices(&self, sample_rate_hz: f64) -> Vec<usize> {
        self.tap_delays_s
            .iter()
            .map(|d| (d * sample_rate_hz).round() as usize)
            .collect()
    }
}

/// Sum-of-sinusoids state for one tap (Zheng-Xiao arrangement): independent
/// uniformly distributed arrival-angle offset and per-oscillator phases for
/// the in-phase and quadrature branches.
#[derive(Debug, Clone)]
struct SosTap {
    /// `2 pi f_d cos(angle_m)` per oscillator.
    w_cos: Vec<f64>,
    /// `2 pi f_d sin(angle_m)` per oscillator.
    w_sin: Vec<f64>,
    phase_i: Vec<f64>,
    phase_q: Vec<f64>,
    /// sqrt(tap power / oscillator count)
    amp: f64,
}

impl SosTap {
    fn new(power: f64, doppler_hz: f64, rng: &mut impl Rng) -> Self {
        let m = SOS_OSCILLATORS;
        let theta: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let wd = 2.0 * std::f64::consts::PI * doppler_hz;
        let mut w_cos = Vec::with_capacity(m);
        let mut w_sin = Vec::with_capacity(m);
        for k in 1..=m {
            let angle =
                (2.0 * std::f64::consts::PI * k as f64 - std::f64::consts::PI + theta)
                    / (4.0 * m as f64);
            w_cos.push(wd * angle.cos());
            w_sin.push(wd * angle.sin());
        }
        let mut phases = || {
            (0..m)
                .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                .collect::<Vec<f64>>()
        };
        let phase_i = phases();
        let phase_q = phases();
        Self {
            w_cos,
            w_sin,
            phase_i,
            phase_q,
            amp: (power / m as f64).sqrt(),
        }
    }

    fn eval(&self, t: f64) -> C64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for k in 0..self.w_cos.len() {
            re += (self.w_cos[k] * t + self.phase_i[k]).cos();
            im += (self.w_sin[k] * t + self.phase_q[k]).cos();
        }
        C64::new(re, im) * self.amp
    }
}

/// One antenna's tapped delay line.
#[derive(Debug, Clone)]
struct AntennaTaps {
    /// Tap positions in samples (sparse).
    positions: Vec<usize>,
    /// Quasi-static gains (sparse, aligned with `positions`).
    static_gains: Vec<C64>,
    /// Doppler processes (aligned with `positions`) when `doppler_hz > 0`.
    sos: Vec<SosTap>,
    /// Dense gain vector, `memory + 1` long.
    dense: Vec<C64>,
}

impl AntennaTaps {
    fn refresh_dense_static(&mut self) {
        self.dense.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        for (i, &pos) in self.positions.iter().enumerate() {
            self.dense[pos] += self.static_gains[i];
        }
    }

    fn write_dense_at(&self, t: f64, out: &mut [C64]) {
        out.iter_mut().for_each(|g| *g = C64::new(0.0, 0.0));
        for (i, &pos) in self.positions.iter().enumerate() {
            out[pos] += self.sos[i].eval(t);
        }
    }
}

/// Channel generator: profile + rates. `gen` draws an independent
/// realization.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pdp: PowerDelayProfile,
    sample_rate_hz: f64,
    doppler_hz: f64,
}

impl ChannelModel {
    pub fn new(pdp: PowerDelayProfile, sample_rate_hz: f64, doppler_hz: f64) -> Result<Self> {
        if pdp.is_empty() {
            return Err(Error::InvalidPdp("empty profile".into()));
        }
        if doppler_hz < 0.0 || sample_rate_hz <= 0.0 {
            return Err(Error::InvalidPdp("bad rate parameters".into()));
        }
        Ok(Self {
            pdp,
            sample_rate_hz,
            doppler_hz,
        })
    }

    pub fn memory_samples(&self) -> usize {
        *self
            .pdp
            .tap_sample_indices(self.sample_rate_hz)
            .iter()
            .max()
            .unwrap_or(&0)
    }

    /// Draw a fresh channel realization with independent taps across
    /// antennas and delays.
    pub fn gen(&self, rng: &mut impl Rng) -> ChannelState {
        let positions = self.pdp.tap_sample_indices(self.sample_rate_hz);
        let powers = self.pdp.normalized_linear_powers();
        let memory = *positions.iter().max().unwrap();
        let antennas = std::array::from_fn(|_| {
            let mut taps = AntennaTaps {
                positions: positions.clone(),
                static_gains: Vec::with_capacity(positions.len()),
                sos: Vec::new(),
                dense: vec![C64::new(0.0, 0.0); memory + 1],
            };
            if self.doppler_hz > 0.0 {
                for &p in &powers {
                    taps.sos.push(SosTap::new(p, self.doppler_hz, rng));
                }
                for i in 0..positions.len() {
                    let g = taps.sos[i].eval(0.0);
                    taps.static_gains.push(g);
                }
            } else {
                for &p in &powers {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    taps.static_gains.push(C64::new(re, im) * (p / 2.0).sqrt());
                }
            }
            taps.refresh_dense_static();
            taps
        });
        ChannelState {
            antennas,
            doppler_hz: self.doppler_hz,
            time_s: 0.0,
        }
    }
}

/// A concrete two-antenna channel realization, evolving in time when the
/// Doppler shift is nonzero.
#[derive(Debug, Clone)]
pub struct ChannelState {
    antennas: [AntennaTaps; 2],
    doppler_hz: f64,
    time_s: f64,
}

impl ChannelState {
    /// Channel memory `L` in samples (dense CIR length is `L + 1`).
    pub fn memory(&self) -> usize {
        self.antennas[0].dense.len() - 1
    }

    pub fn doppler_hz(&self) -> f64 {
        self.doppler_hz
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    /// Dense CIR of one antenna at the current time.
    pub fn gains(&self, antenna: usize) -> &[C64] {
        &self.antennas[antenna].dense
    }

    /// Dense CIR of one antenna at an arbitrary absolute time (Doppler mode
    /// only; in quasi-static mode the current gains are returned).
    pub fn write_gains_at(&self, antenna: usize, t_s: f64, out: &mut [C64]) {
        if self.doppler_hz > 0.0 {
            self.antennas[antenna].write_dense_at(t_s, out);
        } else {
            out.copy_from_slice(&self.antennas[antenna].dense);
        }
    }

    /// Advance the fading processes by `dt` seconds. A zero Doppler shift
    /// leaves the state untouched.
    pub fn evolve(&mut self, dt_s: f64) {
        if self.doppler_hz <= 0.0 {
            return;
        }
        self.time_s += dt_s;
        for ant in &mut self.antennas {
            let t = self.time_s;
            for g in ant.dense.iter_mut() {
                *g = C64::new(0.0, 0.0);
            }
            for (i, &pos) in ant.positions.iter().enumerate() {
                ant.dense[pos] += ant.sos[i].eval(t);
            }
        }
    }

    /// N-point per-subcarrier response of both antennas,
    /// `lambda(n) = sum_l h_l exp(+j 2 pi (n-1) l / N)`.
    pub fn freq_response(&self, n_fft: usize) -> Result<FreqResponse> {
        let mut fr = FreqResponse::zeroed(n_fft);
        self.freq_response_into(&mut fr)?;
        Ok(fr)
    }

    /// Allocation-free variant for per-symbol recomputation.
    pub fn freq_response_into(&self, fr: &mut FreqResponse) -> Result<()> {
        let n_fft = fr.n_fft;
        let cir_len = self.antennas[0].dense.len();
        if cir_len > n_fft {
            return Err(Error::CirTooLong {
                cir: cir_len,
                n: n_fft,
            });
        }
        for (ant, taps) in self.antennas.iter().enumerate() {
            let lambda = &mut fr.lambda[ant];
            lambda.iter_mut().for_each(|l| *l = C64::new(0.0, 0.0));
            for (l, &h) in taps.dense.iter().enumerate() {
                if h.norm_sqr() == 0.0 {
                    continue;
                }
                // rotate through bins: exp(+j 2 pi n' l / N)
                let w = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * l as f64 / n_fft as f64);
                let mut cur = C64::new(1.0, 0.0);
                for bin in lambda.iter_mut() {
                    *bin += h * cur;
                    cur *= w;
                }
            }
        }
        Ok(())
    }
}

/// Per-subcarrier frequency response of the two transmit antennas with the
/// Alamouti channel-block views.
#[derive(Debug, Clone)]
pub struct FreqResponse {
    n_fft: usize,
    /// `lambda[antenna][bin0]`, 0-based bins.
    lambda: [Vec<C64>; 2],
}

impl FreqResponse {
    pub fn zeroed(n_fft: usize) -> Self {
        Self {
            n_fft,
            lambda: [
                vec![C64::new(0.0, 0.0); n_fft],
                vec![C64::new(0.0, 0.0); n_fft],
            ],
        }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// `lambda_i(n)` with 1-based subcarrier index.
    pub fn lambda(&self, antenna: usize, n: usize) -> C64 {
        self.lambda[antenna][n - 1]
    }

    /// `Lambda(n) = [[l1, l2], [-l2*, l1*]]`.
    pub fn big_lambda(&self, n: usize) -> AlamoutiMatrix {
        AlamoutiMatrix::new(self.lambda(0, n), self.lambda(1, n))
    }

    /// `LambdaBar(n) = Lambda*(N - n + 2)`.
    pub fn big_lambda_bar(&self, n: usize) -> AlamoutiMatrix {
        self.big_lambda(mirror_bin(n, self.n_fft)).conj()
    }

    /// `|lambda(n)|^2 = |lambda_1(n)|^2 + |lambda_2(n)|^2`.
    pub fn gain_sq(&self, n: usize) -> f64 {
        self.lambda(0, n).norm_sqr() + self.lambda(1, n).norm_sqr()
    }
}

/// One circular complex Gaussian sample with variance `sigma2`.
pub fn awgn_sample(sigma2: f64, rng: &mut impl Rng) -> C64 {
    if sigma2 == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let s = (sigma2 / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// I.i.d. circular complex Gaussian noise, variance `sigma2` per sample.
pub fn awgn(len: usize, sigma2: f64, rng: &mut impl Rng) -> Vec<C64> {
    (0..len).map(|_| awgn_sample(sigma2, rng)).collect()
}
