//! File formats, experiment runs and the commands behind the `gogar` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod mdp_file;
pub mod metrics;
mod run;

pub use checkpoint::Checkpoint;
pub use config::{Algorithm, ExperimentConfig};
pub use mdp_file::{load_mdp, parse_mdp, write_mdp};
pub use metrics::{MetricsRecord, MetricsWriter, METRICS_HEADER};
pub use run::{run, RunSummary, CHECKPOINT_FILE, MANIFEST_FILE, METRICS_FILE, TRACE_DIR, TRACE_FILE};
