//! Simulation harness behind the `whsim` binary.

pub mod decode;
pub mod estimator;
pub mod scenario;
pub mod sweep;

pub use estimator::{BlindEm, Detection, Estimator, EstimatorRegistry, KnownParams, TrialInput};
pub use scenario::Scenario;
pub use sweep::{parse_snr_range, records_to_csv, run_ser_sweep, write_csv, RotationMode, SerRecord, SweepConfig};
