//! Monte-Carlo sweeps over schemes, SNR and target count, plus the CSV and
//! plot outputs of the `isac-sim` binary.

mod aggregate;
mod config;
mod output;
mod sweep;

pub use aggregate::{mean_with_ci, rmse_with_ci, summarize, Estimate, Summary, BOOTSTRAP_RESAMPLES};
pub use config::{parse_list, SceneConfig, Scheme, SimConfig, SweepConfig};
pub use output::{emit_plots, records_csv, summary_csv, write_outputs, RECORD_HEADER, SUMMARY_HEADER};
pub use sweep::{
    configured_nodes, optimized_nodes, random_nodes, run_sweep, run_trial, trial_setup, trial_targets, TrialRecord,
    TrialSetup,
};
