//! Config-driven experiment protocols, metrics persistence, aggregation,
//! and heatmap emission.

pub mod aggregate;
pub mod config;
pub mod explore;
pub mod heatmap;
pub mod metrics;
pub mod snapshot;
pub mod transfer;

pub use aggregate::{aggregate_runs, AggregateError};
pub use config::{ConfigError, EnvChoice, ExperimentConfig, OUT_ROOT_ENV};
pub use explore::{run_exploration_study, ExploreArtifacts};
pub use heatmap::{emit_heatmap, read_pgm, read_sidecar, sidecar_path, HeatmapError};
pub use metrics::{read_metrics, strip_wall_clock, MetricsRecord, MetricsWriter, SCHEMA_VERSION};
pub use snapshot::{count_field, ir_field, read_run_snapshot, write_run_snapshot, SnapshotError};
pub use transfer::{run_replica, run_transfer_suite, tasks_for_seed};

use std::path::PathBuf;

use thiserror::Error;

/// Failures from the experiment protocols.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("agent {0} has no base/+ir partner in the exploration config")]
    UnpairedAgent(String),
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
