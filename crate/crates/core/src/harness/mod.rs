//! Simulation orchestration: configuration, BER sweeps, complexity figures,
//! result files and the self-test.

pub mod complexity;
pub mod config;
pub mod export;
pub mod selftest;
pub mod sweep;

pub use complexity::{complexity_report, ComplexityConfig, ComplexityParams, ComplexityRow};
pub use config::{noise_variance, MethodKind, MethodSpec, ResolvedMethod, Scenario, SimConfig};
pub use export::{ber_csv_string, export_results, parse_ber_csv, write_outputs, BER_HEADER};
pub use selftest::{run_selftest, Check};
pub use sweep::{frame_seed, run_ber_sweep, run_scenario, BerRecord, IterationRecord, SweepContext, SweepResult};
