//! Double Thompson Sampling for Copeland dueling bandits.
//!
//! [`prefmat`] holds preference matrices and Copeland scores, [`stats`] the
//! win counts and confidence bounds, [`policy`] the D-TS family, [`sim`] the
//! simulated comparison environment and [`bench`] the seeded multi-run
//! harness with its CSV output and diagnostics. [`cli`] backs the
//! `dtsbench` binary.

pub mod bench;
pub mod cli;
pub mod policy;
pub mod prefmat;
pub mod sim;
pub mod stats;

pub use bench::{run_experiment, AggregateResult, BenchError, DatasetSource, ExperimentConfig};
pub use policy::{PairDecision, Policy, PolicyConfig, Variant};
pub use prefmat::{builtin_dataset, load_matrix, CopelandSummary, PreferenceMatrix, DATASET_NAMES};
pub use sim::{DelaySpec, Environment, GridSpec};
pub use stats::{Alpha, WinCountMatrix};
