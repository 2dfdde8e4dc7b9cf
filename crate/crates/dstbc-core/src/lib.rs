//! Baseband simulation and analysis toolkit for differential Alamouti
//! STBC-OFDM links with transmitter and receiver I/Q imbalance.
//!
//! The crate covers the full chain: M-PSK mapping, differential Alamouti
//! encoding, multipath Rayleigh fading with Doppler time evolution, the
//! frequency-domain widely-linear I/Q-imbalance mixing model (with a
//! time-domain waveform path for validation), closed-form and
//! numerically-integrated BER predictions, and blind decision-directed
//! compensation (per-subcarrier widely-linear RLS, an RX-only scalar special
//! case, and a parameter-based joint estimator that links mirror
//! subcarriers).
//!
//! Entry points:
//! - [`simulator::run_sweep`] drives Monte Carlo BER sweeps from a
//!   [`simulator::SimConfig`].
//! - [`analysis`] evaluates the analytical BER curves the simulator is
//!   checked against.
//! - [`validation`] bundles the self-check oracles used by the CLI
//!   `validate` command.

pub mod alamouti;
pub mod analysis;
pub mod channel;
pub mod compensation;
pub mod impairments;
pub mod numerics;
pub mod simulator;
pub mod validation;

pub use alamouti::{AlamoutiMatrix, PskAlphabet};
pub use analysis::{BerCurve, BerMode, IqiSummary};
pub use channel::{ChannelModel, ChannelState, FreqResponse, PowerDelayProfile};
pub use impairments::{IqImbalance, WlChannelMatrix};
pub use simulator::{BerRecord, SimConfig};

use num_complex::Complex64;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported PSK order {0} (supported: 2, 4, 8)")]
    UnsupportedModulation(usize),
    #[error("information symbols must be unit modulus (|u1| = {0}, |u2| = {1})")]
    NonUnitSymbol(f64, f64),
    #[error("unit-power constraint violated by {0:.3e}")]
    PowerConstraint(f64),
    #[error("singular 2x2 Alamouti block (power {0:.3e})")]
    SingularBlock(f64),
    #[error("invalid power delay profile: {0}")]
    InvalidPdp(String),
    #[error("CIR length {cir} exceeds FFT size {n}")]
    CirTooLong { cir: usize, n: usize },
    #[error("cyclic prefix {cp} shorter than channel memory {mem}")]
    CpTooShort { cp: usize, mem: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("amplitude-loss model out of range (epsilon = {0:.3})")]
    EpsilonOutOfRange(f64),
    #[error("quadrature did not converge (residual {0:.3e})")]
    QuadratureDiverged(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Complex scalar used throughout.
pub type C64 = Complex64;
