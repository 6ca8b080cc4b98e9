//! Closed-loop simulation, metrics, sweeps and output files.

pub mod episode;
pub mod metrics;
pub mod output;
pub mod sweep;

pub use episode::{consumed_risk, episode_seed, run_episode, run_episode_inspected};
pub use metrics::{EpisodeMetrics, Metric, MetricsRow, METRIC_NAMES};
pub use output::{emit_outputs, write_episode_csv, MetricsWriter};
pub use sweep::{check_convergence, run_point, run_sweep, ConvergenceReport, PairedComparison};
