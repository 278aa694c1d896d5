//! Weight-hybrid multi-channel receiver.
//!
//! A symbol stream reaches `N_s` signal channels through gains `h_s`; `N_n`
//! further channels observe only noise that is correlated with the signal
//! channels. With the gains and covariance known, [`combiner`] gives the
//! minimum-variance unbiased combiner. Without them, [`em`] estimates gains,
//! block covariance and M-QAM symbols jointly from one observation block.
//! [`harness`] runs Monte Carlo symbol-error-rate sweeps over both.

pub mod channel;
pub mod combiner;
pub mod constellation;
pub mod em;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod rng;

pub use channel::{ChannelModel, ObservationBlock};
pub use combiner::{Architecture, CombinerResult};
pub use constellation::{SymbolAlphabet, SymbolSequence};
pub use em::{CalibrationResult, EmConfig, EmOutcome, EmState};
pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
