//! Scenarios, Monte Carlo runs and CSV output.

mod config;
mod monte_carlo;
mod output;
mod scenario;

pub use config::{parse_trackers, RunConfig, TrackerKind};
pub use monte_carlo::{
    build_tracker, evaluate_tracker, run_monte_carlo, run_single, Execution, MetricSeries,
    MonteCarloResult, RunMetrics, SeriesRow,
};
pub use output::{
    series_csv, series_file_name, summary_csv, write_outputs, write_series_csv, GIT_DESCRIBE,
    SERIES_HEADER, SUMMARY_HEADER,
};
pub use scenario::{generate_scenario, simulate_measurements, simulate_scan, ScenarioDefinition, STEPS};
