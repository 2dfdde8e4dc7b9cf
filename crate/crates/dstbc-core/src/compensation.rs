//! Blind decision-directed I/Q-imbalance compensation.
//!
//! Three estimators share one widely-linear compensation structure
//! `[S_hat; Sbar_hat] = [[I, Gc], [Gbc, I]] [Z'; Zbar']`:
//!
//! - per-subcarrier RLS estimation of the Alamouti compensation matrix
//!   `Gc(n)` from the differential-encoding residuals (works for joint
//!   TX/RX imbalance, no channel knowledge needed);
//! - an RX-only scalar special case where one shared `gamma_r` adapts across
//!   all subcarriers and symbols;
//! - a parameter-based (PB) scheme that extracts the front-end parameters
//!   `(gamma_t, gamma_r)` during a warm-up phase and afterwards links each
//!   mirror pair's matrices through an inverse-conjugate constraint, so both
//!   matrices of a pair receive two effective updates per block.
//!
//! Estimation is driven purely by hard decisions on the compensated blocks;
//! no pilots are involved.

use crate::alamouti::{ml_diff_detect, AlamoutiMatrix, Decision, PskAlphabet};
use crate::impairments::IqImbalance;
use crate::{Result, C64};

/// Compensation matrices with Frobenius norm below this are not inverted by
/// the mirror constraint; the previous mirror estimate is kept instead.
const MIRROR_MIN_NORM: f64 = 1e-8;

/// Sentinel returned by [`kappa`] for a vanishing mirror block.
const KAPPA_SENTINEL: f64 = 1e30;

/// The compensation matrix that zeroes the image-subcarrier leakage for a
/// known channel and known front ends:
/// `Gc(n) = -(A_r B_t Lambda + A_t* B_r LambdaBar)(A_r* A_t* LambdaBar + B_r* B_t Lambda)^{-1}`.
///
/// Used as the RLS convergence target and for perfect-compensation
/// experiments.
pub fn closed_form_gamma_c(
    tx: &IqImbalance,
    rx: &IqImbalance,
    lambda: &AlamoutiMatrix,
    lambda_bar: &AlamoutiMatrix,
) -> Result<AlamoutiMatrix> {
    let num = rx
        .a_mat()
        .mul(&tx.b_mat())
        .mul(lambda)
        .add(&tx.a_mat().conj().mul(&rx.b_mat()).mul(lambda_bar));
    let den = rx
        .a_mat()
        .conj()
        .mul(&tx.a_mat().conj())
        .mul(lambda_bar)
        .add(&rx.b_mat().conj().mul(&tx.b_mat()).mul(lambda));
    Ok(num.mul(&den.inverse()?).scale(-1.0))
}

/// Column-reduced regressors of one subcarrier for one block transition:
/// `xi = [Xi_11, Xi*_21]` and the 2x2 `delta` with columns acting as scalar
/// regressors, where `Xi = Z'_{k+1} - Z'_k U` and
/// `Delta = Zbar'_{k+1} - Zbar'_k U`.
#[derive(Debug, Clone, Copy)]
pub struct Regressors {
    pub xi: [C64; 2],
    /// `delta[row][col]`
    pub delta: [[C64; 2]; 2],
}

/// Build the decision-directed regressors from the raw received blocks of a
/// subcarrier and its mirror, with `u_hat` the (scaled) hard-decision
/// information matrix.
pub fn build_regressors(
    z_k: &AlamoutiMatrix,
    z_k1: &AlamoutiMatrix,
    zb_k: &AlamoutiMatrix,
    zb_k1: &AlamoutiMatrix,
    u_hat: &AlamoutiMatrix,
) -> Regressors {
    let xi = z_k1.sub(&z_k.mul(u_hat));
    let delta = zb_k1.sub(&zb_k.mul(u_hat));
    let d11 = delta.entry(0, 0);
    let d21 = delta.entry(1, 0);
    Regressors {
        xi: [xi.entry(0, 0), xi.entry(1, 0).conj()],
        delta: [[d11, d21.conj()], [d21, -d11.conj()]],
    }
}

/// Exponentially-weighted RLS state for one subcarrier's compensation row
/// `gamma = [gamma_1, gamma_2]`.
///
/// Each block contributes the two columns of `delta` as scalar-observation
/// regressors with targets `-xi`; the recursion solves
/// `min sum mu^(m-i) |xi_i + gamma delta_i|^2` (plus the `P0`
/// regularization). The update drives the residual `e = -xi - gamma delta`
/// to zero, which is the direction that converges to the closed-form
/// compensation matrix.
#[derive(Debug, Clone)]
pub struct RlsState {
    gamma: [C64; 2],
    /// Inverse correlation matrix, kept Hermitian positive-definite.
    p: [[C64; 2]; 2],
    delta_reg: f64,
    /// P re-initializations after numerical loss of positive-definiteness.
    pub reinit_count: u64,
    /// RLS updates plus mirror assignments; the PB scheme produces two per
    /// block in steady state.
    pub effective_updates: u64,
}

impl RlsState {
    pub fn new(delta_reg: f64) -> Self {
        let mut s = Self {
            gamma: [C64::new(0.0, 0.0); 2],
            p: [[C64::new(0.0, 0.0); 2]; 2],
            delta_reg,
            reinit_count: 0,
            effective_updates: 0,
        };
        s.reset_p();
        s
    }

    fn reset_p(&mut self) {
        let inv = 1.0 / self.delta_reg;
        self.p = [
            [C64::new(inv, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(inv, 0.0)],
        ];
    }

    pub fn gamma(&self) -> [C64; 2] {
        self.gamma
    }

    pub fn gamma_c(&self) -> AlamoutiMatrix {
        AlamoutiMatrix::new(self.gamma[0], self.gamma[1])
    }

    /// Overwrite the estimate (mirror constraint); counts as an effective
    /// update but leaves `P` untouched.
    pub fn set_gamma(&mut self, g: AlamoutiMatrix) {
        self.gamma = [g.x1, g.x2];
        self.effective_updates += 1;
    }

    /// Shift the first component without touching counters (used once at the
    /// PB warm-up handover to strip the RX part off the joint estimate).
    pub fn offset_gamma_x1(&mut self, delta: C64) {
        self.gamma[0] += delta;
    }

    fn scalar_update(&mut self, target: C64, delta: [C64; 2], mu: f64) {
        let pd = [
            self.p[0][0] * delta[0] + self.p[0][1] * delta[1],
            self.p[1][0] * delta[0] + self.p[1][1] * delta[1],
        ];
        let denom = mu + (delta[0].conj() * pd[0] + delta[1].conj() * pd[1]).re;
        let g = [pd[0] / denom, pd[1] / denom];
        let y = self.gamma[0] * delta[0] + self.gamma[1] * delta[1];
        let e = target - y;
        self.gamma[0] += e * g[0].conj();
        self.gamma[1] += e * g[1].conj();
        for r in 0..2 {
            for c in 0..2 {
                self.p[r][c] = (self.p[r][c] - g[r] * pd[c].conj()) / mu;
            }
        }
        // keep P numerically Hermitian
        self.p[0][0] = C64::new(self.p[0][0].re, 0.0);
        self.p[1][1] = C64::new(self.p[1][1].re, 0.0);
        let off = (self.p[0][1] + self.p[1][0].conj()) * 0.5;
        self.p[0][1] = off;
        self.p[1][0] = off.conj();
    }

    /// One block's update: both columns of `delta` with targets `-xi`.
    /// A `P` that lost positive-definiteness is re-initialized and counted.
    pub fn update(&mut self, reg: &Regressors, mu: f64) {
        self.update_with_sign(reg, mu, false);
    }

    /// `flip_sign` drives the recursion toward `+xi` instead of `-xi`; only
    /// used by the self-check suite to prove the convergence oracle catches
    /// a sign mutation.
    pub(crate) fn update_with_sign(&mut self, reg: &Regressors, mu: f64, flip_sign: bool) {
        for col in 0..2 {
            let delta = [reg.delta[0][col], reg.delta[1][col]];
            if delta[0].norm_sqr() + delta[1].norm_sqr() == 0.0 {
                continue;
            }
            let target = if flip_sign { reg.xi[col] } else { -reg.xi[col] };
            self.scalar_update(target, delta, mu);
        }
        let det = self.p[0][0].re * self.p[1][1].re - self.p[0][1].norm_sqr();
        if !(self.p[0][0].re > 0.0 && self.p[1][1].re > 0.0 && det > 0.0) || !det.is_finite() {
            self.reset_p();
            self.reinit_count += 1;
        }
        self.effective_updates += 1;
    }
}

/// Scalar RLS for the RX-only special case: one shared `gamma_r` adapted by
/// every subcarrier's regressor pairs, so it learns along frequency as well
/// as time.
#[derive(Debug, Clone)]
pub struct RxOnlyRls {
    pub gamma_r: C64,
    p: f64,
    pub effective_updates: u64,
}

impl RxOnlyRls {
    pub fn new(delta_reg: f64) -> Self {
        Self {
            gamma_r: C64::new(0.0, 0.0),
            p: 1.0 / delta_reg,
            effective_updates: 0,
        }
    }

    fn scalar_update(&mut self, xi: C64, delta: C64, mu: f64) {
        if delta.norm_sqr() == 0.0 {
            return;
        }
        let pd = self.p * delta;
        let denom = mu + (delta.conj() * pd).re;
        let g = pd / denom;
        let e = -xi - self.gamma_r * delta;
        self.gamma_r += e * g.conj();
        self.p = (self.p - (g * delta.conj()).re * self.p) / mu;
        self.effective_updates += 1;
    }

    /// Consume one subcarrier's regressors: the scalar pairs
    /// `(Xi_11, Delta_11)` and `(Xi*_21, Delta*_21)`.
    pub fn update(&mut self, reg: &Regressors, mu: f64) {
        self.scalar_update(reg.xi[0], reg.delta[0][0], mu);
        self.scalar_update(reg.xi[1], reg.delta[0][1], mu);
    }

    pub fn gamma_c(&self) -> AlamoutiMatrix {
        AlamoutiMatrix::diag(self.gamma_r)
    }
}

/// Apply the widely-linear structure to one mirror pair:
/// `S_hat = Z' + Gc Zbar'` and `Sbar_hat = Gbc Z' + Zbar'`.
pub fn compensate(
    z: &AlamoutiMatrix,
    z_bar: &AlamoutiMatrix,
    gc: &AlamoutiMatrix,
    gbc: &AlamoutiMatrix,
) -> (AlamoutiMatrix, AlamoutiMatrix) {
    (z.add(&gc.mul(z_bar)), gbc.mul(z).add(z_bar))
}

/// Frobenius power ratio of a received block to its mirror block,
/// `kappa(n) = |Z'(n)|^2 / |Zbar'(n)|^2`.
pub fn kappa(z: &AlamoutiMatrix, z_bar: &AlamoutiMatrix) -> f64 {
    let d = z_bar.frob_sq();
    if d < 1e-60 {
        KAPPA_SENTINEL
    } else {
        z.frob_sq() / d
    }
}

/// Subcarrier-pair member whose mirror has the larger power (so its
/// compensation matrix is estimated first and inverted last):
/// `n` if `kappa(n) <= 1`, else the image `N - n + 2`.
pub fn choose_n_dagger(kappa_n: f64, n: usize, n_fft: usize) -> usize {
    if kappa_n <= 1.0 {
        n
    } else {
        n_fft - n + 2
    }
}

/// Step sizes and warm-up length of the parameter-based estimator.
#[derive(Debug, Clone, Copy)]
pub struct PbParams {
    pub mu_a: f64,
    pub mu_b: f64,
    pub mu_r: f64,
    /// Warm-up length in OFDM symbols (two per block).
    pub n_ini_symbols: u64,
}

impl Default for PbParams {
    fn default() -> Self {
        Self {
            mu_a: 0.0005,
            mu_b: 0.005,
            mu_r: 0.0001,
            n_ini_symbols: 1300,
        }
    }
}

/// Global front-end parameter estimates of the PB scheme.
///
/// `gamma_r` is the RX compensation scalar (`-beta_r / alpha_r*` at
/// convergence); the TX parameter is carried as the pair
/// `(|gamma_t|^2, gamma_t^2/|gamma_t|^2)` because the mirror constraint only
/// ever consumes those, which keeps the sign ambiguity of `gamma_t` benign.
#[derive(Debug, Clone)]
pub struct PbState {
    pub gamma_r: C64,
    pub a_gamma2: f64,
    pub phi_gamma2: C64,
    pub params: PbParams,
    pub symbols_seen: u64,
}

impl PbState {
    pub fn new(params: PbParams) -> Self {
        Self {
            gamma_r: C64::new(0.0, 0.0),
            a_gamma2: 0.0,
            phi_gamma2: C64::new(1.0, 0.0),
            params,
            symbols_seen: 0,
        }
    }

    pub fn in_warmup(&self) -> bool {
        self.symbols_seen <= self.params.n_ini_symbols
    }

    pub fn tick_block(&mut self) {
        self.symbols_seen += 2;
    }

    /// `gamma_t^2 = A_gamma2 * phi_gamma2`.
    pub fn gamma_t_sq(&self) -> C64 {
        self.phi_gamma2 * self.a_gamma2
    }

    /// Weighted exponential averaging of the RX parameter from a diagonal
    /// entry of an estimated compensation matrix; small `kappa` means the
    /// observation is trusted more.
    pub fn update_gamma_r_weighted(&mut self, gc_entry: C64, kappa_n: f64) {
        self.gamma_r += (gc_entry - self.gamma_r) * (self.params.mu_r / kappa_n);
    }

    /// Two gradient steps on `A_gamma2` and one on `phi_gamma2` (with
    /// renormalization to unit modulus) against the mirror-constraint
    /// relations `w11 = A w21` and `w12 = A phi w22`, where `(w11, w12)` is
    /// the first row of `Gc(n) - Gamma_r` and `(w21, w22)` the first row of
    /// `[(Gbc(n) - Gamma_r)^{-1}]*`.
    pub fn update_gamma_t(&mut self, w11: C64, w12: C64, w21: C64, w22: C64) {
        let a0 = self.a_gamma2;
        let grad1 = 2.0 * a0 * w21.norm_sqr() - 2.0 * (w11.conj() * w21).re;
        let a1 = (a0 - self.params.mu_a * grad1).max(0.0);
        let grad2 = 2.0 * a1 * w22.norm_sqr() - 2.0 * (w12.conj() * w22 * self.phi_gamma2).re;
        let a2 = (a1 - self.params.mu_a * grad2).max(0.0);
        self.a_gamma2 = a2;
        let resid = w12 - self.phi_gamma2 * w22 * a2;
        let grad3 = -(w22.conj() * resid) * (2.0 * a2);
        let phi = self.phi_gamma2 - grad3 * self.params.mu_b;
        if phi.norm() > 1e-30 {
            self.phi_gamma2 = phi / phi.norm();
        }
    }
}

/// Image-subcarrier compensation matrix from the mirror constraint:
/// `Gc(N-n+2) = Gamma_t [(Gc(n))*]^{-1} Gamma_t*`, evaluated entrywise as
/// `(|gamma_t|^2 w1, gamma_t^2 w2)` with `w = [(Gc)*]^{-1}`.
///
/// Returns `None` (keep the previous mirror estimate) when `Gc` is too small
/// to invert.
pub fn mirror_gamma(pb: &PbState, gc: &AlamoutiMatrix) -> Option<AlamoutiMatrix> {
    if gc.power().sqrt() < MIRROR_MIN_NORM {
        return None;
    }
    let w = gc.conj().inverse().ok()?;
    Some(AlamoutiMatrix::new(
        w.x1 * pb.a_gamma2,
        w.x2 * pb.gamma_t_sq(),
    ))
}

/// Raw received blocks of one mirror pair `(n, N-n+2)`; the mirror view of
/// side `n` is `conj` of side `m` and vice versa.
#[derive(Debug, Clone, Copy)]
pub struct PairBlocks {
    pub z_n: AlamoutiMatrix,
    pub z_m: AlamoutiMatrix,
}

/// Hard decisions for both members of a pair.
#[derive(Debug, Clone, Copy)]
pub struct PairDecisions {
    pub n: Decision,
    pub m: Decision,
}

/// Blocks of sustained mirror-conjugate decision agreement after which a
/// pair is declared image-locked and its estimators are re-initialized.
const IMAGE_LOCK_WINDOW: u32 = 16;

/// Adaptive state of one mirror pair (both subcarriers' RLS estimators).
#[derive(Debug, Clone)]
pub struct PairState {
    pub rls_n: RlsState,
    pub rls_m: RlsState,
    steady: bool,
    /// Consecutive blocks in which one side's decisions were exactly the
    /// conjugate of the other's.
    mirror_match_run: u32,
    /// Image-lock recoveries performed.
    pub image_lock_resets: u64,
}

impl PairState {
    pub fn new(delta_reg: f64) -> Self {
        Self::with_phase(delta_reg, false)
    }

    /// Start directly in the PB steady-state phase (a fresh burst after the
    /// warm-up has already completed elsewhere): the zero initial estimate
    /// is then already the TX-only prior and must not be offset.
    pub fn with_phase(delta_reg: f64, steady: bool) -> Self {
        Self {
            rls_n: RlsState::new(delta_reg),
            rls_m: RlsState::new(delta_reg),
            steady,
            mirror_match_run: 0,
            image_lock_resets: 0,
        }
    }

    /// Image-lock watchdog. The decision-directed cost has a spurious
    /// zero-residual solution that nulls the direct stream and decodes the
    /// image instead (it is the exact LS fit whenever the hard decisions
    /// follow the mirror's data). Its signature is unmistakable: one side's
    /// decisions become exactly the conjugate of the other's. After a full
    /// window of agreement both estimators are re-initialized.
    fn watch_image_lock(&mut self, dec: &PairDecisions, order: usize) -> bool {
        let conj_idx = |i: usize| (order - i) % order;
        let matched = dec.n.idx1 == conj_idx(dec.m.idx1) && dec.n.idx2 == conj_idx(dec.m.idx2);
        if matched {
            self.mirror_match_run += 1;
            if self.mirror_match_run >= IMAGE_LOCK_WINDOW {
                let keep = self.steady;
                let reg = self.rls_n.delta_reg;
                let (un, um) = (self.rls_n.effective_updates, self.rls_m.effective_updates);
                let (rn, rm) = (self.rls_n.reinit_count, self.rls_m.reinit_count);
                let resets = self.image_lock_resets;
                *self = Self::with_phase(reg, keep);
                self.rls_n.effective_updates = un;
                self.rls_m.effective_updates = um;
                self.rls_n.reinit_count = rn;
                self.rls_m.reinit_count = rm;
                self.image_lock_resets = resets + 1;
                return true;
            }
        } else {
            self.mirror_match_run = 0;
        }
        false
    }

    fn detect_with(
        prev: &PairBlocks,
        cur: &PairBlocks,
        gc_n: &AlamoutiMatrix,
        gc_m: &AlamoutiMatrix,
        alphabet: &PskAlphabet,
    ) -> PairDecisions {
        let (sp_n, _) = compensate(&prev.z_n, &prev.z_m.conj(), gc_n, &AlamoutiMatrix::ZERO);
        let (sc_n, _) = compensate(&cur.z_n, &cur.z_m.conj(), gc_n, &AlamoutiMatrix::ZERO);
        let (sp_m, _) = compensate(&prev.z_m, &prev.z_n.conj(), gc_m, &AlamoutiMatrix::ZERO);
        let (sc_m, _) = compensate(&cur.z_m, &cur.z_n.conj(), gc_m, &AlamoutiMatrix::ZERO);
        PairDecisions {
            n: ml_diff_detect(&sp_n, &sc_n, alphabet),
            m: ml_diff_detect(&sp_m, &sc_m, alphabet),
        }
    }

    /// One widely-linear block step: compensate with the current estimates,
    /// detect, then RLS-update both subcarriers from the decision-directed
    /// regressors.
    pub fn wl_step(
        &mut self,
        prev: &PairBlocks,
        cur: &PairBlocks,
        alphabet: &PskAlphabet,
        mu: f64,
    ) -> PairDecisions {
        self.wl_step_with_sign(prev, cur, alphabet, mu, false)
    }

    pub(crate) fn wl_step_with_sign(
        &mut self,
        prev: &PairBlocks,
        cur: &PairBlocks,
        alphabet: &PskAlphabet,
        mu: f64,
        flip_sign: bool,
    ) -> PairDecisions {
        let gc_n = self.rls_n.gamma_c();
        let gc_m = self.rls_m.gamma_c();
        let dec = Self::detect_with(prev, cur, &gc_n, &gc_m, alphabet);
        if self.watch_image_lock(&dec, alphabet.order()) {
            return dec;
        }
        let reg_n = build_regressors(
            &prev.z_n,
            &cur.z_n,
            &prev.z_m.conj(),
            &cur.z_m.conj(),
            &dec.n.info,
        );
        self.rls_n.update_with_sign(&reg_n, mu, flip_sign);
        let reg_m = build_regressors(
            &prev.z_m,
            &cur.z_m,
            &prev.z_n.conj(),
            &cur.z_n.conj(),
            &dec.m.info,
        );
        self.rls_m.update_with_sign(&reg_m, mu, flip_sign);
        dec
    }

    /// One parameter-based block step.
    ///
    /// During warm-up this is the plain widely-linear step plus the
    /// `(gamma_t, gamma_r)` parameter updates. Afterwards the pair is first
    /// RX-compensated with the estimated `gamma_r`, the member with the
    /// stronger mirror is RLS-updated, its estimate is mirrored onto the
    /// image, refined there by a second RLS update, and mirrored back, so
    /// both matrices receive two effective updates per block.
    pub fn pb_step(
        &mut self,
        pb: &mut PbState,
        prev: &PairBlocks,
        cur: &PairBlocks,
        alphabet: &PskAlphabet,
        mu: f64,
    ) -> PairDecisions {
        if pb.in_warmup() {
            let dec = self.wl_step(prev, cur, alphabet, mu);
            let kap_n = kappa(&cur.z_n, &cur.z_m.conj());
            let kap_m = kappa(&cur.z_m, &cur.z_n.conj());
            pb.update_gamma_r_weighted(self.rls_n.gamma_c().x1, kap_n);
            pb.update_gamma_r_weighted(self.rls_m.gamma_c().x1, kap_m);
            let gr = AlamoutiMatrix::diag(pb.gamma_r);
            let p = self.rls_n.gamma_c().sub(&gr);
            let q = self.rls_m.gamma_c().sub(&gr);
            if let Ok(qi) = q.inverse() {
                let w = qi.conj();
                pb.update_gamma_t(p.x1, p.x2, w.x1, w.x2);
            }
            return dec;
        }

        if !self.steady {
            // strip the RX part off the joint warm-up estimates; from here
            // on the RLS states track the TX-only matrices of the
            // RX-precompensated system
            self.rls_n.offset_gamma_x1(-pb.gamma_r);
            self.rls_m.offset_gamma_x1(-pb.gamma_r);
            self.steady = true;
        }

        let gr = AlamoutiMatrix::diag(pb.gamma_r);
        let rx_comp = |b: &PairBlocks| PairBlocks {
            z_n: b.z_n.add(&gr.mul(&b.z_m.conj())),
            z_m: b.z_m.add(&gr.mul(&b.z_n.conj())),
        };
        let pprev = rx_comp(prev);
        let pcur = rx_comp(cur);

        let dec = Self::detect_with(
            &pprev,
            &pcur,
            &self.rls_n.gamma_c(),
            &self.rls_m.gamma_c(),
            alphabet,
        );
        if self.watch_image_lock(&dec, alphabet.order()) {
            return dec;
        }

        let kap_n = kappa(&pcur.z_n, &pcur.z_m.conj());
        let n_first = kap_n <= 1.0;
        let (first, second, dec_first, dec_second) = if n_first {
            (&mut self.rls_n, &mut self.rls_m, &dec.n, &dec.m)
        } else {
            (&mut self.rls_m, &mut self.rls_n, &dec.m, &dec.n)
        };
        let (zf_prev, zf_cur, zs_prev, zs_cur) = if n_first {
            (pprev.z_n, pcur.z_n, pprev.z_m, pcur.z_m)
        } else {
            (pprev.z_m, pcur.z_m, pprev.z_n, pcur.z_n)
        };

        let reg = build_regressors(
            &zf_prev,
            &zf_cur,
            &zs_prev.conj(),
            &zs_cur.conj(),
            &dec_first.info,
        );
        first.update(&reg, mu);
        if let Some(g) = mirror_gamma(pb, &first.gamma_c()) {
            second.set_gamma(g);
        }
        let reg = build_regressors(
            &zs_prev,
            &zs_cur,
            &zf_prev.conj(),
            &zf_cur.conj(),
            &dec_second.info,
        );
        second.update(&reg, mu);
        if let Some(g) = mirror_gamma(pb, &second.gamma_c()) {
            first.set_gamma(g);
        }
        dec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alamouti::{diff_encode, make_info_matrix, reference_block};
    use crate::impairments::{apply_fd_iqi, build_phi};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rand_c64(rng: &mut impl Rng) -> C64 {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    fn rand_alamouti(rng: &mut impl Rng) -> AlamoutiMatrix {
        AlamoutiMatrix::new(rand_c64(rng), rand_c64(rng))
    }

    fn rand_unit_info(rng: &mut impl Rng, alph: &PskAlphabet) -> AlamoutiMatrix {
        let m = alph.order();
        make_info_matrix(
            alph.point(rng.random_range(0..m)),
            alph.point(rng.random_range(0..m)),
        )
        .unwrap()
        .scale(std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Noiseless joint-IQI pair source: simulates the mirror pair's
    /// differential chains through the widely-linear model and yields the
    /// raw block pairs plus the true information matrices.
    struct PairSource {
        tx: IqImbalance,
        rx: IqImbalance,
        lam_n: AlamoutiMatrix,
        lam_m: AlamoutiMatrix,
        s_n: AlamoutiMatrix,
        s_m: AlamoutiMatrix,
        alph: PskAlphabet,
    }

    impl PairSource {
        fn new(tx: IqImbalance, rx: IqImbalance, rng: &mut impl Rng, m: usize) -> Self {
            Self {
                tx,
                rx,
                lam_n: rand_alamouti(rng),
                lam_m: rand_alamouti(rng),
                s_n: reference_block(),
                s_m: reference_block(),
                alph: PskAlphabet::new(m).unwrap(),
            }
        }

        fn lambda_bar_n(&self) -> AlamoutiMatrix {
            self.lam_m.conj()
        }

        fn lambda_bar_m(&self) -> AlamoutiMatrix {
            self.lam_n.conj()
        }

        fn emit(&self) -> PairBlocks {
            let phi_n = build_phi(&self.tx, &self.rx, &self.lam_n, &self.lambda_bar_n());
            let phi_m = build_phi(&self.tx, &self.rx, &self.lam_m, &self.lambda_bar_m());
            let zero = AlamoutiMatrix::ZERO;
            let (z_n, _) = apply_fd_iqi(&self.s_n, &self.s_m.conj(), &zero, &zero, &phi_n, &self.rx);
            let (z_m, _) = apply_fd_iqi(&self.s_m, &self.s_n.conj(), &zero, &zero, &phi_m, &self.rx);
            PairBlocks { z_n, z_m }
        }

        fn step(&mut self, rng: &mut impl Rng) -> (AlamoutiMatrix, AlamoutiMatrix, PairBlocks) {
            let u_n = rand_unit_info(rng, &self.alph);
            let u_m = rand_unit_info(rng, &self.alph);
            self.s_n = diff_encode(&self.s_n, &u_n).unwrap();
            self.s_m = diff_encode(&self.s_m, &u_m).unwrap();
            (u_n, u_m, self.emit())
        }
    }

    #[test]
    fn closed_form_special_cases() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let ideal = IqImbalance::ideal();
        let rx = IqImbalance::from_db(1.0, 5.0);

        // TX ideal: channel-independent diagonal -B_r (A_r*)^{-1}
        let expect = C64::new(0.0, 0.0) - rx.beta / rx.alpha.conj();
        for _ in 0..10 {
            let l = rand_alamouti(&mut rng);
            let lb = rand_alamouti(&mut rng);
            let gc = closed_form_gamma_c(&ideal, &rx, &l, &lb).unwrap();
            assert!((gc.x1 - expect).norm() < 1e-12);
            assert!(gc.x2.norm() < 1e-15);
        }

        // both ideal: zero matrix
        let l = rand_alamouti(&mut rng);
        let lb = rand_alamouti(&mut rng);
        let gc = closed_form_gamma_c(&ideal, &ideal, &l, &lb).unwrap();
        assert!(gc.power() < 1e-28);
    }

    #[test]
    fn closed_form_block_diagonalizes_phi() {
        // assembling the full Gamma with Gc(n) and conj(Gc(m)) zeroes the
        // off-diagonal blocks of Gamma * Phi
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let tx = IqImbalance::from_db(1.0, 5.0);
        let rx = IqImbalance::from_db(0.5, 3.0);
        for _ in 0..50 {
            let lam_n = rand_alamouti(&mut rng);
            let lam_m = rand_alamouti(&mut rng);
            let lb_n = lam_m.conj();
            let lb_m = lam_n.conj();
            let phi = build_phi(&tx, &rx, &lam_n, &lb_n);
            let gc_n = closed_form_gamma_c(&tx, &rx, &lam_n, &lb_n).unwrap();
            let gc_m = closed_form_gamma_c(&tx, &rx, &lam_m, &lb_m).unwrap();
            let gbc_n = gc_m.conj();
            // row 1: Phi_12 + Gc Phi_22 = 0
            let top = phi.b12.add(&gc_n.mul(&phi.b22));
            // row 2: Gbc Phi_11 + Phi_21 = 0
            let bottom = gbc_n.mul(&phi.b11).add(&phi.b21);
            assert!(top.power() < 1e-24, "top residual {}", top.power());
            assert!(bottom.power() < 1e-24, "bottom residual {}", bottom.power());
        }
    }

    #[test]
    fn regressors_are_balanced_without_iqi_and_noise() {
        // the differential property holds, so the residual branch xi is
        // identically zero and the estimator has nothing to move on: an RLS
        // fed with these regressors stays exactly at gamma = 0
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let ideal = IqImbalance::ideal();
        let mut src = PairSource::new(ideal, ideal, &mut rng, 4);
        let mut rls = RlsState::new(0.01);
        let mut prev = src.emit();
        for _ in 0..25 {
            let (u_n, _, cur) = src.step(&mut rng);
            let reg = build_regressors(
                &prev.z_n,
                &cur.z_n,
                &prev.z_m.conj(),
                &cur.z_m.conj(),
                &u_n,
            );
            assert!(reg.xi[0].norm() < 1e-12 && reg.xi[1].norm() < 1e-12);
            rls.update(&reg, 0.9);
            prev = cur;
        }
        assert!(rls.gamma_c().power().sqrt() < 1e-10);
    }

    #[test]
    fn regressors_satisfy_closed_form_identity() {
        // noiseless with IQI: xi' + gamma_true * delta' = 0 columnwise
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let tx = IqImbalance::from_db(1.0, 5.0);
        let rx = IqImbalance::from_db(0.5, 3.0);
        for _ in 0..20 {
            let mut src = PairSource::new(tx, rx, &mut rng, 8);
            let gc = closed_form_gamma_c(&tx, &rx, &src.lam_n, &src.lambda_bar_n()).unwrap();
            let prev = src.emit();
            let (u_n, _, cur) = src.step(&mut rng);
            let reg = build_regressors(
                &prev.z_n,
                &cur.z_n,
                &prev.z_m.conj(),
                &cur.z_m.conj(),
                &u_n,
            );
            for c in 0..2 {
                let resid =
                    reg.xi[c] + gc.x1 * reg.delta[0][c] + gc.x2 * reg.delta[1][c];
                assert!(resid.norm() < 1e-12, "column {c} residual {}", resid.norm());
            }
        }
    }

    #[test]
    fn rls_ignores_zero_regressors() {
        let mut rls = RlsState::new(0.01);
        let before = rls.gamma();
        let reg = Regressors {
            xi: [C64::new(0.0, 0.0); 2],
            delta: [[C64::new(0.0, 0.0); 2]; 2],
        };
        rls.update(&reg, 0.9);
        assert_eq!(rls.gamma(), before);
    }

    #[test]
    fn rls_converges_to_closed_form_gamma() {
        // static channel, no noise, genie information matrices
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let tx = IqImbalance::from_db(1.0, 5.0);
        let rx = IqImbalance::from_db(0.5, 3.0);
        let mut src = PairSource::new(tx, rx, &mut rng, 4);
        let gc_true = closed_form_gamma_c(&tx, &rx, &src.lam_n, &src.lambda_bar_n()).unwrap();
        let mut rls = RlsState::new(0.01);
        let mut prev = src.emit();
        for _ in 0..200 {
            let (u_n, _, cur) = src.step(&mut rng);
            let reg = build_regressors(
                &prev.z_n,
                &cur.z_n,
                &prev.z_m.conj(),
                &cur.z_m.conj(),
                &u_n,
            );
            rls.update(&reg, 0.9);
            prev = cur;
        }
        let err = rls.gamma_c().sub(&gc_true).power().sqrt();
        assert!(err < 1e-6, "gamma error {err}");
        assert_eq!(rls.reinit_count, 0);
    }

    #[test]
    fn rls_equals_batch_weighted_least_squares() {
        // recursive estimate == regularized exponentially-weighted normal
        // equations on a fixed 50-block record
        let mut rng = ChaCha12Rng::seed_from_u64(45);
        let mu = 0.9;
        let delta_reg = 0.01;
        let mut rls = RlsState::new(delta_reg);
        let mut record: Vec<(C64, [C64; 2])> = Vec::new();
        for _ in 0..50 {
            let reg = Regressors {
                xi: [rand_c64(&mut rng), rand_c64(&mut rng)],
                delta: [
                    [rand_c64(&mut rng), rand_c64(&mut rng)],
                    [rand_c64(&mut rng), rand_c64(&mut rng)],
                ],
            };
            for col in 0..2 {
                record.push((-reg.xi[col], [reg.delta[0][col], reg.delta[1][col]]));
            }
            rls.update(&reg, mu);
        }
        // batch: gamma = z R^{-1}, R = sum mu^(m-i) d d^H + mu^m reg I,
        // z = sum mu^(m-i) target d^H
        let m_total = record.len();
        let mut r = [[C64::new(0.0, 0.0); 2]; 2];
        let mut z = [C64::new(0.0, 0.0); 2];
        for (i, (target, d)) in record.iter().enumerate() {
            let w = mu.powi((m_total - 1 - i) as i32);
            for a in 0..2 {
                for b in 0..2 {
                    r[a][b] += d[a] * d[b].conj() * w;
                }
                z[a] += *target * d[a].conj() * w;
            }
        }
        let reg_w = mu.powi(m_total as i32) * delta_reg;
        r[0][0] += C64::new(reg_w, 0.0);
        r[1][1] += C64::new(reg_w, 0.0);
        let det = r[0][0] * r[1][1] - r[0][1] * r[1][0];
        let rinv = [
            [r[1][1] / det, -r[0][1] / det],
            [-r[1][0] / det, r[0][0] / det],
        ];
        let gamma_batch = [
            z[0] * rinv[0][0] + z[1] * rinv[1][0],
            z[0] * rinv[0][1] + z[1] * rinv[1][1],
        ];
        let g = rls.gamma();
        assert!(
            (g[0] - gamma_batch[0]).norm() < 1e-8 && (g[1] - gamma_batch[1]).norm() < 1e-8,
            "rls {g:?} vs batch {gamma_batch:?}"
        );
    }

    #[test]
    fn compensate_identity_passthrough() {
        let mut rng = ChaCha12Rng::seed_from_u64(46);
        let z = rand_alamouti(&mut rng);
        let zb = rand_alamouti(&mut rng);
        let (s, sb) = compensate(&z, &zb, &AlamoutiMatrix::ZERO, &AlamoutiMatrix::ZERO);
        assert_eq!(s, z);
        assert_eq!(sb, zb);
    }

    #[test]
    fn perfect_compensation_restores_differential_relation() {
        // with the closed-form matrices the compensated pairs satisfy
        // S_hat_{k+1} = S_hat_k U_{k+1} in the noiseless case
        let mut rng = ChaCha12Rng::seed_from_u64(47);
        let tx = IqImbalance::from_db(1.0, 5.0);
        let rx = IqImbalance::from_db(0.5, 3.0);
        let mut src = PairSource::new(tx, rx, &mut rng, 4);
        let gc_n = closed_form_gamma_c(&tx, &rx, &src.lam_n, &src.lambda_bar_n()).unwrap();
        let gc_m = closed_form_gamma_c(&tx, &rx, &src.lam_m, &src.lambda_bar_m()).unwrap();
        let mut prev = src.emit();
        for _ in 0..20 {
            let (u_n, u_m, cur) = src.step(&mut rng);
            let (sp, _) = compensate(&prev.z_n, &prev.z_m.conj(), &gc_n, &gc_m.conj());
            let (sc, _) = compensate(&cur.z_n, &cur.z_m.conj(), &gc_n, &gc_m.conj());
            let resid = sc.sub(&sp.mul(&u_n));
            assert!(resid.power().sqrt() < 1e-9, "residual {}", resid.power());
            let (sp_m, _) = compensate(&prev.z_m, &prev.z_n.conj(), &gc_m, &gc_n.conj());
            let (sc_m, _) = compensate(&cur.z_m, &cur.z_n.conj(), &gc_m, &gc_n.conj());
            let resid_m = sc_m.sub(&sp_m.mul(&u_m));
            assert!(resid_m.power().sqrt() < 1e-9);
            prev = cur;
        }
    }

    #[test]
    fn rx_only_converges_to_formula_value() {
        let mut rng = ChaCha12Rng::seed_from_u64(48);
        let rx = IqImbalance::from_db(1.0, 5.0);
        let ideal = IqImbalance::ideal();
        let target = C64::new(0.0, 0.0) - rx.beta / rx.alpha.conj();
        let mut state = RxOnlyRls::new(0.01);
        // several pairs share the scalar, mimicking the frequency-direction
        // adaptation
        let mut sources: Vec<PairSource> =
            (0..8).map(|_| PairSource::new(ideal, rx, &mut rng, 4)).collect();
        let mut prevs: Vec<PairBlocks> = sources.iter().map(|s| s.emit()).collect();
        for _ in 0..40 {
            for (src, prev) in sources.iter_mut().zip(prevs.iter_mut()) {
                let (u_n, u_m, cur) = src.step(&mut rng);
                let reg = build_regressors(
                    &prev.z_n,
                    &cur.z_n,
                    &prev.z_m.conj(),
                    &cur.z_m.conj(),
                    &u_n,
                );
                state.update(&reg, 0.9);
                let reg_m = build_regressors(
                    &prev.z_m,
                    &cur.z_m,
                    &prev.z_n.conj(),
                    &cur.z_n.conj(),
                    &u_m,
                );
                state.update(&reg_m, 0.9);
                *prev = cur;
            }
        }
        assert!(
            (state.gamma_r - target).norm() < 1e-6,
            "gamma_r {} vs {target}",
            state.gamma_r
        );
    }

    #[test]
    fn rx_only_stays_near_zero_without_iqi() {
        let mut rng = ChaCha12Rng::seed_from_u64(49);
        let ideal = IqImbalance::ideal();
        let mut src = PairSource::new(ideal, ideal, &mut rng, 4);
        let mut state = RxOnlyRls::new(0.01);
        let mut prev = src.emit();
        for _ in 0..50 {
            let (u_n, _, cur) = src.step(&mut rng);
            let reg = build_regressors(
                &prev.z_n,
                &cur.z_n,
                &prev.z_m.conj(),
                &cur.z_m.conj(),
                &u_n,
            );
            state.update(&reg, 0.9);
            prev = cur;
        }
        assert!(state.gamma_r.norm() < 1e-9);
    }

    #[test]
    fn shared_scalar_converges_half_n_times_faster_than_per_subcarrier() {
        // convergence-count comparison at matched accuracy: the shared
        // scalar sees every subcarrier's regressors within a single block;
        // a per-subcarrier WL estimator needs tens of blocks to reach the
        // accuracy the shared one attains after one.
        let n_fft = 64usize;
        let pairs = n_fft / 2 - 1;
        let rx = IqImbalance::from_db(1.0, 5.0);
        let ideal = IqImbalance::ideal();
        let target = C64::new(0.0, 0.0) - rx.beta / rx.alpha.conj();

        let mut rng = ChaCha12Rng::seed_from_u64(50);
        let mut sources: Vec<PairSource> = (0..pairs)
            .map(|_| PairSource::new(ideal, rx, &mut rng, 4))
            .collect();
        let mut prevs: Vec<PairBlocks> = sources.iter().map(|s| s.emit()).collect();
        let mut shared = RxOnlyRls::new(0.01);

        // one block of shared (frequency-direction) adaptation
        let mut wl_record: Vec<Regressors> = Vec::new();
        for (src, prev) in sources.iter_mut().zip(prevs.iter_mut()) {
            let (u_n, u_m, cur) = src.step(&mut rng);
            let reg_n = build_regressors(
                &prev.z_n,
                &cur.z_n,
                &prev.z_m.conj(),
                &cur.z_m.conj(),
                &u_n,
            );
            let reg_m = build_regressors(
                &prev.z_m,
                &cur.z_m,
                &prev.z_n.conj(),
                &cur.z_n.conj(),
                &u_m,
            );
            shared.update(&reg_n, 0.9);
            shared.update(&reg_m, 0.9);
            wl_record.push(reg_n);
            *prev = cur;
        }
        let shared_err = (shared.gamma_r - target).norm();

        // per-subcarrier WL on one pair until it matches that accuracy
        let mut wl = RlsState::new(0.01);
        let src = &mut sources[0];
        let prev = &mut prevs[0];
        wl.update(&wl_record[0], 0.9);
        let mut wl_blocks = 1u64;
        loop {
            let g = wl.gamma();
            if (g[0] - target).norm().hypot(g[1].norm()) <= shared_err {
                break;
            }
            let (u_n, _, cur) = src.step(&mut rng);
            let reg = build_regressors(
                &prev.z_n,
                &cur.z_n,
                &prev.z_m.conj(),
                &cur.z_m.conj(),
                &u_n,
            );
            wl.update(&reg, 0.9);
            *prev = cur;
            wl_blocks += 1;
            assert!(wl_blocks < 5000, "per-subcarrier estimator never converged");
        }
        assert!(
            wl_blocks >= (n_fft as u64) / 2,
            "shared reached {shared_err:.3e} in 1 block, per-subcarrier needed only {wl_blocks}"
        );
    }

    #[test]
    fn kappa_properties() {
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let z = rand_alamouti(&mut rng);
        assert!((kappa(&z, &z) - 1.0).abs() < 1e-12);
        // reciprocal pair: kappa as seen from the mirror is the inverse
        let zb = rand_alamouti(&mut rng);
        let k_n = kappa(&z, &zb.conj());
        let k_m = kappa(&zb, &z.conj());
        assert!((k_n * k_m - 1.0).abs() < 1e-12);
        assert!(kappa(&z, &AlamoutiMatrix::ZERO) >= 1e29);
        // flat channel, no IQI/noise: kappa tracks the channel gain ratio
        let ideal = IqImbalance::ideal();
        let mut src = PairSource::new(ideal, ideal, &mut rng, 4);
        let blocks = src.emit();
        let expect = src.lam_n.power() / src.lam_m.power();
        assert!((kappa(&blocks.z_n, &blocks.z_m.conj()) / expect - 1.0).abs() < 1e-9);
    }

    #[test]
    fn choose_n_dagger_rule() {
        assert_eq!(choose_n_dagger(0.5, 7, 64), 7);
        assert_eq!(choose_n_dagger(2.0, 7, 64), 59);
        assert_eq!(choose_n_dagger(1.0, 7, 64), 7); // boundary inclusive
    }

    #[test]
    fn gamma_r_weighted_update_fixed_point() {
        let mut pb = PbState::new(PbParams::default());
        pb.gamma_r = C64::new(0.1, -0.05);
        let before = pb.gamma_r;
        pb.update_gamma_r_weighted(before, 0.7);
        assert_eq!(pb.gamma_r, before);
        // mu_r = 0 freezes the estimate
        let mut frozen = PbState::new(PbParams {
            mu_r: 0.0,
            ..PbParams::default()
        });
        frozen.gamma_r = before;
        frozen.update_gamma_r_weighted(C64::new(5.0, 5.0), 1.0);
        assert_eq!(frozen.gamma_r, before);
    }

    #[test]
    fn gamma_t_gradient_converges_on_synthetic_constraint() {
        // omega pairs generated from the exact constraint with a known
        // gamma_t; (A, phi) must approach (|gamma_t|^2, gamma_t^2/|gamma_t|^2)
        let mut rng = ChaCha12Rng::seed_from_u64(52);
        let gamma_t = C64::new(0.21, -0.14);
        let gt = AlamoutiMatrix::diag(gamma_t);
        let mut pb = PbState::new(PbParams {
            mu_a: 0.002,
            mu_b: 0.02,
            ..PbParams::default()
        });
        for _ in 0..4000 {
            let p = rand_alamouti(&mut rng); // Gc(n) - Gamma_r of a random channel
            if p.power() < 1e-3 {
                continue;
            }
            // Q = Gamma_t (P*)^{-1} Gamma_t*
            let q = gt.mul(&p.conj().inverse().unwrap()).mul(&gt.conj());
            let w = q.inverse().unwrap().conj();
            pb.update_gamma_t(p.x1, p.x2, w.x1, w.x2);
        }
        let a_true = gamma_t.norm_sqr();
        let phi_true = gamma_t * gamma_t / a_true;
        assert!(
            (pb.a_gamma2 / a_true - 1.0).abs() < 0.05,
            "A {} vs {a_true}",
            pb.a_gamma2
        );
        assert!(
            (pb.phi_gamma2 - phi_true).norm() < 0.05,
            "phi {} vs {phi_true}",
            pb.phi_gamma2
        );
        // real positive gamma_t pins phi at 1
        let mut pb2 = PbState::new(PbParams::default());
        let gt2 = AlamoutiMatrix::diag(C64::new(0.25, 0.0));
        for _ in 0..500 {
            let p = rand_alamouti(&mut rng);
            if p.power() < 1e-3 {
                continue;
            }
            let q = gt2.mul(&p.conj().inverse().unwrap()).mul(&gt2.conj());
            let w = q.inverse().unwrap().conj();
            pb2.update_gamma_t(p.x1, p.x2, w.x1, w.x2);
        }
        assert!((pb2.phi_gamma2 - C64::new(1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn mirror_constraint_identities() {
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        let tx = IqImbalance::from_db(1.0, 5.0);
        let ideal = IqImbalance::ideal();
        let gamma_t = tx.beta / tx.alpha;
        let mut pb = PbState::new(PbParams::default());
        pb.a_gamma2 = gamma_t.norm_sqr();
        pb.phi_gamma2 = gamma_t * gamma_t / gamma_t.norm_sqr();

        for _ in 0..20 {
            let lam_n = rand_alamouti(&mut rng);
            let lam_m = rand_alamouti(&mut rng);
            // RX ideal: the constraint is exact
            let gc_n = closed_form_gamma_c(&tx, &ideal, &lam_n, &lam_m.conj()).unwrap();
            let gc_m = closed_form_gamma_c(&tx, &ideal, &lam_m, &lam_n.conj()).unwrap();
            let mirrored = mirror_gamma(&pb, &gc_n).unwrap();
            let err = mirrored.sub(&gc_m).power().sqrt();
            assert!(err < 1e-10, "mirror error {err}");
            // involution
            let back = mirror_gamma(&pb, &mirrored).unwrap();
            assert!(back.sub(&gc_n).power().sqrt() < 1e-10);
        }

        // with RX IQI present the constraint only holds to O(rho_t rho_r)
        let rx = IqImbalance::from_db(0.5, 3.0);
        let lam_n = rand_alamouti(&mut rng);
        let lam_m = rand_alamouti(&mut rng);
        let gr = AlamoutiMatrix::diag(C64::new(0.0, 0.0) - rx.beta / rx.alpha.conj());
        let gc_n = closed_form_gamma_c(&tx, &rx, &lam_n, &lam_m.conj()).unwrap();
        let gc_m = closed_form_gamma_c(&tx, &rx, &lam_m, &lam_n.conj()).unwrap();
        let p = gc_n.sub(&gr);
        let q_pred = mirror_gamma(&pb, &p).unwrap();
        let q = gc_m.sub(&gr);
        let resid = q_pred.sub(&q).power().sqrt();
        let scale = 10.0 * tx.rho() * rx.rho() / q.power().sqrt().max(1e-12);
        assert!(
            resid < scale.max(0.02),
            "constraint residual {resid} (scale {scale})"
        );

        // gamma_t = 0 maps everything to zero
        let pb0 = PbState::new(PbParams::default());
        let g = mirror_gamma(&pb0, &gc_n).unwrap();
        assert_eq!(g, AlamoutiMatrix::ZERO);
        // degenerate input is skipped
        assert!(mirror_gamma(&pb, &AlamoutiMatrix::ZERO).is_none());
    }

    #[test]
    fn pb_warmup_matches_plain_wl_path() {
        // identical decisions and gamma trajectories while t <= N_ini
        let mut rng = ChaCha12Rng::seed_from_u64(54);
        let tx = IqImbalance::from_db(1.0, 5.0);
        let rx = IqImbalance::from_db(1.0, 5.0);
        let alph = PskAlphabet::new(4).unwrap();
        let mut src = PairSource::new(tx, rx, &mut rng, 4);
        let mut wl = PairState::new(0.01);
        let mut pbp = PairState::new(0.01);
        let mut pb = PbState::new(PbParams::default());
        let mut prev = src.emit();
        for _ in 0..30 {
            let (_, _, cur) = src.step(&mut rng);
            let d1 = wl.wl_step(&prev, &cur, &alph, 0.9);
            let d2 = pbp.pb_step(&mut pb, &prev, &cur, &alph, 0.9);
            pb.tick_block();
            assert_eq!((d1.n.idx1, d1.n.idx2), (d2.n.idx1, d2.n.idx2));
            assert_eq!((d1.m.idx1, d1.m.idx2), (d2.m.idx1, d2.m.idx2));
            let diff = wl.rls_n.gamma_c().sub(&pbp.rls_n.gamma_c()).power();
            assert!(diff < 1e-24);
            prev = cur;
        }
    }

    #[test]
    fn pb_steady_state_updates_twice_per_block() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let tx = IqImbalance::from_db(1.0, 5.0);
        let rx = IqImbalance::from_db(1.0, 5.0);
        let alph = PskAlphabet::new(4).unwrap();
        let mut src = PairSource::new(tx, rx, &mut rng, 4);
        let mut pair = PairState::new(0.01);
        let mut pb = PbState::new(PbParams {
            n_ini_symbols: 40,
            ..PbParams::default()
        });
        let mut prev = src.emit();
        // run through warm-up
        while pb.in_warmup() {
            let (_, _, cur) = src.step(&mut rng);
            pair.pb_step(&mut pb, &prev, &cur, &alph, 0.9);
            pb.tick_block();
            prev = cur;
        }
        let base_n = pair.rls_n.effective_updates;
        let base_m = pair.rls_m.effective_updates;
        let steady_blocks = 50u64;
        for _ in 0..steady_blocks {
            let (_, _, cur) = src.step(&mut rng);
            pair.pb_step(&mut pb, &prev, &cur, &alph, 0.9);
            pb.tick_block();
            prev = cur;
        }
        assert_eq!(pair.rls_n.effective_updates - base_n, 2 * steady_blocks);
        assert_eq!(pair.rls_m.effective_updates - base_m, 2 * steady_blocks);
    }
}
