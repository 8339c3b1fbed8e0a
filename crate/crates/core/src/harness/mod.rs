//! Synthetic data, configuration, statistics and the experiment drivers behind the CLI.

pub mod baseline;
pub mod config;
pub mod experiments;
pub mod report;
pub mod stats;
pub mod synth;

pub use baseline::{baseline_recommend, BaselineKind, BaselineOutcome, Neighbors};
pub use config::ExperimentConfig;
pub use experiments::{run_benchmark, run_sample_probs, run_scaling};
pub use report::{plot_script, render_csv, write_csv, Table};
pub use synth::{gen_synthetic, Law, Synthetic};
