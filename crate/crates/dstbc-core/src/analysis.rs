//! Closed-form and numerically-integrated BER/SINR predictions for
//! differential Alamouti STBC-OFDM under TX-, RX- and joint I/Q imbalance,
//! plus the asymptotic floor conditions and the equivalent amplitude-loss
//! model.
//!
//! Conventions: `sigma2` is the per-subcarrier noise variance with unit
//! transmit power per subcarrier, so SNR(dB) = -10 log10(sigma2). `rho`
//! values are the linear interference-to-signal ratios `|beta|^2/|alpha|^2`
//! of the front ends. Instantaneous BER of M-PSK at SINR `eta` is modeled as
//! `erfc(sqrt(eta) sin(pi/M)) / log2(M)` and averaged over the fading SINR
//! density:
//! - TX/joint and RX cases use a two-branch diversity (Gamma) SINR density;
//! - the RX asymptotic floor averages over the mirror-gain ratio
//!   `X = |lambda|^2 / |lambda_bar|^2` with density `6x/(1+x)^4`.

use crate::impairments::IqImbalance;
use crate::numerics::integrate_adaptive;
use crate::{Error, Result, C64};
use statrs::function::erf::erfc;

/// Upper limit (in units of the mean-scale parameter) for the Gamma-density
/// SINR integrals; the truncated tail mass is below 1e-15.
const GAMMA_TAIL_CAP: f64 = 40.0;
const QUAD_TOL: f64 = 1e-10;

/// Interference summary of a TX/RX front-end pair, the inputs the BER
/// formulas actually consume.
#[derive(Debug, Clone, Copy)]
pub struct IqiSummary {
    pub rho_t: f64,
    pub rho_r: f64,
    pub abs_alpha_t: f64,
    pub abs_alpha_r: f64,
}

impl IqiSummary {
    pub fn new(tx: &IqImbalance, rx: &IqImbalance) -> Self {
        Self {
            rho_t: tx.rho(),
            rho_r: rx.rho(),
            abs_alpha_t: tx.alpha.norm(),
            abs_alpha_r: rx.alpha.norm(),
        }
    }

    pub fn ideal() -> Self {
        Self {
            rho_t: 0.0,
            rho_r: 0.0,
            abs_alpha_t: 1.0,
            abs_alpha_r: 1.0,
        }
    }
}

/// Which of the paper-style prediction routes to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BerMode {
    /// Quadrature of the instantaneous BER against the SINR density.
    Integral,
    /// The `0.2 (1 + 1.75 SNR_eff / (M^1.9 + 1))^-2` approximation.
    ClosedForm,
}

/// An analytical BER curve; points are clamped into `[0, 0.5]`.
#[derive(Debug, Clone)]
pub struct BerCurve {
    pub scheme: String,
    points: Vec<(f64, f64)>,
}

impl BerCurve {
    pub fn new(scheme: impl Into<String>) -> Self {
        Self {
            scheme: scheme.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, snr_db: f64, ber: f64) {
        self.points.push((snr_db, ber.clamp(0.0, 0.5)));
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

fn bits_per_symbol(m: usize) -> f64 {
    (m as f64).log2()
}

/// Instantaneous M-PSK BER at SINR `eta`.
fn inst_ber(eta: f64, m: usize) -> f64 {
    erfc(eta.sqrt() * (std::f64::consts::PI / m as f64).sin()) / bits_per_symbol(m)
}

/// Mean BER when the SINR is `c` times a unit-mean-per-branch two-branch
/// Gamma variable (density `t e^-t` after normalizing by `c`).
///
/// Substituting `t = u^2` removes the square-root branch point of the
/// erfc argument at the origin, so the quadrature converges geometrically.
fn ber_over_gamma_sinr(c: f64, m: usize) -> Result<f64> {
    if !c.is_finite() {
        return Ok(0.0);
    }
    let s = (std::f64::consts::PI / m as f64).sin() * c.sqrt();
    let scale = 2.0 / bits_per_symbol(m);
    integrate_adaptive(
        |u| scale * u.powi(3) * (-u * u).exp() * erfc(s * u),
        0.0,
        GAMMA_TAIL_CAP.sqrt(),
        QUAD_TOL,
    )
}

/// The shared closed form `0.2 (1 + 1.75 s / (M^1.9 + 1))^-2`.
fn closed_form(s_eff: f64, m: usize) -> f64 {
    if !s_eff.is_finite() {
        return 0.0;
    }
    0.2 * (1.0 + 1.75 * s_eff / ((m as f64).powf(1.9) + 1.0)).powi(-2)
}

/// Minimum error-vector magnitude that moves a unit-power M-PSK point across
/// a decision boundary: `sin(pi/M)`.
pub fn a_min(m: usize) -> f64 {
    (std::f64::consts::PI / m as f64).sin()
}

/// IRR threshold below which TX imbalance produces an asymptotic BER floor:
/// no floor iff `sqrt(rho_t) < sqrt(2) a_min / 4`.
pub fn tx_floor_threshold_irr_db(m: usize) -> f64 {
    -20.0 * (std::f64::consts::SQRT_2 * a_min(m) / 4.0).log10()
}

/// Whether a TX-imbalance floor exists at the given interference ratio.
pub fn tx_floor_exists(rho_t: f64, m: usize) -> bool {
    rho_t.sqrt() >= std::f64::consts::SQRT_2 * a_min(m) / 4.0
}

/// Asymptotic (noise-free) BER under severe TX imbalance.
pub fn tx_floor_ber(rho_t: f64, m: usize) -> f64 {
    if rho_t == 0.0 {
        return 0.0;
    }
    inst_ber(0.5 / rho_t, m)
}

/// Equivalent amplitude loss `2.5 (1 + cot^2(pi/M)) rho_t`; the first-order
/// model is rejected once the loss reaches 0.5.
pub fn epsilon_tx(rho_t: f64, m: usize) -> Result<f64> {
    let cot = 1.0 / (std::f64::consts::PI / m as f64).tan();
    let eps = 2.5 * (1.0 + cot * cot) * rho_t;
    if eps >= 0.5 {
        return Err(Error::EpsilonOutOfRange(eps));
    }
    Ok(eps)
}

/// SINR loss in dB caused by TX imbalance, exact form
/// `-20 log10(|alpha_t|^2 (1 - eps))`.
pub fn tx_snr_loss_db(abs_alpha_t: f64, eps: f64) -> f64 {
    -20.0 * (abs_alpha_t.powi(2) * (1.0 - eps)).log10()
}

/// Average BER under TX imbalance only (no-floor regime model).
pub fn ber_tx(sigma2: f64, iqi: &IqiSummary, m: usize, mode: BerMode) -> Result<f64> {
    let eps = epsilon_tx(iqi.rho_t, m)?;
    if sigma2 == 0.0 {
        return Ok(0.0);
    }
    let gain = iqi.abs_alpha_t.powi(4) * (1.0 - eps).powi(2);
    match mode {
        BerMode::Integral => ber_over_gamma_sinr(gain / (4.0 * sigma2), m),
        BerMode::ClosedForm => Ok(closed_form(gain / sigma2, m)),
    }
}

/// Asymptotic BER floor under RX imbalance, averaged over the mirror-gain
/// ratio density `6x/(1+x)^4`.
///
/// Substituting `x = (v/(1-v))^2` maps the half-line onto `[0, 1]` and
/// removes the square-root branch point, leaving a smooth rational-weight
/// integrand.
pub fn ber_rx_floor(rho_r: f64, m: usize) -> Result<f64> {
    if rho_r == 0.0 {
        return Ok(0.0);
    }
    let s = (std::f64::consts::PI / m as f64).sin() / (2.0 * rho_r).sqrt();
    let scale = 12.0 / bits_per_symbol(m);
    integrate_adaptive(
        |v| {
            let one_m = 1.0 - v;
            let denom = one_m * one_m + v * v;
            scale * v.powi(3) * one_m.powi(3) / denom.powi(4) * erfc(s * v / one_m)
        },
        0.0,
        1.0,
        QUAD_TOL,
    )
}

/// Average BER under RX imbalance; the interference folds into the noise as
/// an equivalent SNR `1 / (rho_r + sigma2)`.
pub fn ber_rx(sigma2: f64, rho_r: f64, m: usize, mode: BerMode) -> Result<f64> {
    let denom = rho_r + sigma2;
    if denom == 0.0 {
        return Ok(0.0);
    }
    match mode {
        BerMode::Integral => ber_over_gamma_sinr(1.0 / (4.0 * denom), m),
        BerMode::ClosedForm => Ok(closed_form(1.0 / denom, m)),
    }
}

/// Average BER under joint TX/RX imbalance: the TX model with the RX
/// interference added to the noise (`sigma2 -> sigma2 + rho_r`).
pub fn ber_joint(sigma2: f64, iqi: &IqiSummary, m: usize, mode: BerMode) -> Result<f64> {
    ber_tx(sigma2 + iqi.rho_r, iqi, m, mode)
}

/// Map coherent-detection operating conditions onto the differential
/// formulas: halve the noise power and both interference ratios.
pub fn coherent_map(sigma2: f64, iqi: &IqiSummary) -> (f64, IqiSummary) {
    (
        sigma2 / 2.0,
        IqiSummary {
            rho_t: iqi.rho_t / 2.0,
            rho_r: iqi.rho_r / 2.0,
            ..*iqi
        },
    )
}

/// SNR at which the RX-imbalance BER curve flattens into its floor, defined
/// as the point where the noise contributes 10% of the image interference:
/// `IRR(dB) + 10 dB`.
pub fn rx_floor_onset_snr_db(rho_r: f64) -> f64 {
    -10.0 * (rho_r / 10.0).log10()
}

/// IRR gap between the closed-form floors of two constellations at equal
/// floor level; level-independent, `10 log10((Mb^1.9 + 1)/(Ma^1.9 + 1))`.
pub fn rx_floor_irr_gap_db(m_a: usize, m_b: usize) -> f64 {
    // solve the closed-form floor for rho at a reference level and compare
    let level = 1e-5;
    let rho_for = |m: usize| {
        let s = (0.2f64 / level).sqrt() - 1.0;
        1.75 / (s * ((m as f64).powf(1.9) + 1.0))
    };
    10.0 * (rho_for(m_a) / rho_for(m_b)).log10()
}

/// SNR degradation left after perfect widely-linear compensation of TX
/// imbalance: `-10 log10(|alpha_t|^2 (1 - rho_t)^2 / (1 + 2 rho_t))`.
pub fn post_comp_tx_degradation_db(iqi: &IqiSummary) -> f64 {
    let f = iqi.abs_alpha_t.powi(2) * (1.0 - iqi.rho_t).powi(2) / (1.0 + 2.0 * iqi.rho_t);
    -10.0 * f.log10()
}

/// The equivalent signal-amplitude losses of the two pairwise error events
/// for an error vector `eps_vec` on a unit M-PSK symbol:
/// `(Im cot(pi/M) - Re, Im cot(pi/M) + Re)`.
pub fn appendix_b_amplitude_losses(eps_vec: C64, m: usize) -> (f64, f64) {
    let cot = 1.0 / (std::f64::consts::PI / m as f64).tan();
    (
        eps_vec.im * cot - eps_vec.re,
        eps_vec.im * cot + eps_vec.re,
    )
}
