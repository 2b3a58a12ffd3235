//! CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

use super::monte_carlo::{MetricSeries, MonteCarloResult};

pub const SERIES_HEADER: &str = "k,gospa_total,gospa_loc,gospa_missed,gospa_false,d_center,d_tracks,n_est_mean";
pub const SUMMARY_HEADER: &str = "scenario,tracker,runs,failed_runs,seed,git_describe,gospa_total,gospa_loc,gospa_missed,gospa_false,d_center,d_tracks,n_est_mean";

/// Version string baked in at build time.
pub const GIT_DESCRIBE: &str = env!("TRACK_BENCH_GIT_DESCRIBE");

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-scan series as CSV text.
pub fn series_csv(series: &MetricSeries) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for r in &series.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.gospa_total,
            r.gospa_loc,
            r.gospa_missed,
            r.gospa_false,
            opt(r.d_center),
            opt(r.d_tracks),
            r.n_est_mean
        );
    }
    out
}

pub fn write_series_csv(series: &MetricSeries, path: &Path) -> Result<()> {
    fs::write(path, series_csv(series))?;
    Ok(())
}

/// File name of a tracker's series, e.g. `scenario1_jpda.csv`.
pub fn series_file_name(scenario: u8, series: &MetricSeries) -> String {
    format!("scenario{}_{}.csv", scenario, series.tracker.name())
}

/// Grand means over all scans, one line per tracker.
pub fn summary_csv(result: &MonteCarloResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in &result.series {
        let all = |f: fn(&super::monte_carlo::SeriesRow) -> Option<f64>| s.window_mean(0, u32::MAX, f);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            result.scenario,
            s.tracker.name(),
            result.runs,
            s.failures.len(),
            result.seed,
            GIT_DESCRIBE,
            opt(all(|r| Some(r.gospa_total))),
            opt(all(|r| Some(r.gospa_loc))),
            opt(all(|r| Some(r.gospa_missed))),
            opt(all(|r| Some(r.gospa_false))),
            opt(all(|r| r.d_center)),
            opt(all(|r| r.d_tracks)),
            opt(all(|r| Some(r.n_est_mean))),
        );
    }
    out
}

/// Writes every series plus `summary.csv` into `dir` and returns the paths.
pub fn write_outputs(result: &MonteCarloResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for s in &result.series {
        let p = dir.join(series_file_name(result.scenario, s));
        write_series_csv(s, &p)?;
        paths.push(p);
    }
    let p = dir.join("summary.csv");
    fs::write(&p, summary_csv(result))?;
    paths.push(p);
    Ok(paths)
}
