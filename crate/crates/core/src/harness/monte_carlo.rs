//! Monte Carlo orchestration and per-scan aggregation.

use nalgebra::Vector2;

use crate::bp::BpTracker;
use crate::error::Result;
use crate::jpda::JpdaTracker;
use crate::metrics::{gospa, GospaResult, TrackDistanceSample};
use crate::mht::MhtTracker;
use crate::models::Scan;
use crate::rng::{derive_key, tag};
use crate::tracker::Tracker;

use super::config::{RunConfig, TrackerKind};
use super::scenario::{generate_scenario, simulate_measurements, ScenarioDefinition};

/// How runs are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Data-parallel over runs with the given worker count (0 = pool default).
    #[cfg(feature = "parallel")]
    Parallel(usize),
}

impl Execution {
    /// Parallel when the feature is enabled, sequential otherwise.
    pub fn from_workers(workers: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            if workers == 1 {
                Execution::Sequential
            } else {
                Execution::Parallel(workers)
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = workers;
            Execution::Sequential
        }
    }
}

/// Per-scan metrics of one tracker on one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub gospa: Vec<GospaResult>,
    pub spacing: Vec<TrackDistanceSample>,
    pub n_est: Vec<usize>,
}

/// Across-run means at one scan. Spacing means skip runs with fewer than two
/// estimates and are `None` when no run had two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub k: u32,
    pub gospa_total: f64,
    pub gospa_loc: f64,
    pub gospa_missed: f64,
    pub gospa_false: f64,
    pub d_center: Option<f64>,
    pub d_tracks: Option<f64>,
    pub n_est_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub tracker: TrackerKind,
    pub rows: Vec<SeriesRow>,
    pub runs_ok: usize,
    /// `(run index, error)` for each excluded run.
    pub failures: Vec<(usize, String)>,
}

impl MetricSeries {
    /// Mean of a per-scan column over `k ∈ [lo, hi]`, skipping undefined scans.
    pub fn window_mean(&self, lo: u32, hi: u32, column: impl Fn(&SeriesRow) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.k >= lo && r.k <= hi)
            .filter_map(column)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub scenario: u8,
    pub runs: usize,
    pub seed: u64,
    pub series: Vec<MetricSeries>,
}

impl MonteCarloResult {
    pub fn get(&self, kind: TrackerKind) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.tracker == kind)
    }

    /// Largest fraction of failed runs over the trackers.
    pub fn failure_rate(&self) -> f64 {
        self.series
            .iter()
            .map(|s| s.failures.len() as f64 / self.runs.max(1) as f64)
            .fold(0.0, f64::max)
    }
}

pub fn build_tracker(
    kind: TrackerKind,
    cfg: &RunConfig,
    sc: &ScenarioDefinition,
    run: u64,
) -> Result<Box<dyn Tracker>> {
    let mm = cfg.motion()?;
    let sm = cfg.sensor(sc.roi)?;
    Ok(match kind {
        TrackerKind::Jpda => Box::new(JpdaTracker::new(mm, sm, cfg.jpda())?),
        TrackerKind::Mht => Box::new(MhtTracker::new(mm, sm, cfg.mht())?),
        TrackerKind::Bp => {
            let seed = derive_key(cfg.seed, &[tag::BP_TRACKER, run]);
            Box::new(BpTracker::new(mm, sm, cfg.bp(), seed)?)
        }
    })
}

/// Runs one tracker over a run's scans and scores every scan.
pub fn evaluate_tracker(
    tracker: &mut dyn Tracker,
    sc: &ScenarioDefinition,
    scans: &[Scan],
    cfg: &RunConfig,
) -> Result<RunMetrics> {
    let params = cfg.gospa();
    let mut out = RunMetrics {
        gospa: Vec::with_capacity(scans.len()),
        spacing: Vec::with_capacity(scans.len()),
        n_est: Vec::with_capacity(scans.len()),
    };
    for scan in scans {
        let est: Vec<Vector2<f64>> = tracker.step(scan)?.iter().map(|e| e.state.position()).collect();
        let truth = sc.positions(scan.k);
        out.gospa.push(gospa(&truth, &est, params));
        out.spacing.push(TrackDistanceSample::from_estimates(scan.k, &est, &truth));
        out.n_est.push(est.len());
    }
    Ok(out)
}

/// All enabled trackers on run `run`, sharing one set of scans.
pub fn run_single(cfg: &RunConfig, sc: &ScenarioDefinition, run: u64) -> Vec<Result<RunMetrics>> {
    let sm = match cfg.sensor(sc.roi) {
        Ok(sm) => sm,
        Err(e) => return cfg.trackers.iter().map(|_| Err(e.clone())).collect(),
    };
    let scans = simulate_measurements(sc, &sm, cfg.seed, run);
    cfg.trackers
        .iter()
        .map(|&kind| {
            let mut tracker = build_tracker(kind, cfg, sc, run)?;
            evaluate_tracker(tracker.as_mut(), sc, &scans, cfg)
        })
        .collect()
}

fn aggregate(kind: TrackerKind, steps: u32, results: &[&Result<RunMetrics>]) -> MetricSeries {
    let n = steps as usize;
    let mut sums = vec![[0.0f64; 5]; n];
    let mut center = vec![(0.0f64, 0usize); n];
    let mut tracks = vec![(0.0f64, 0usize); n];
    let mut ok = 0usize;
    let mut failures = Vec::new();
    for (run, r) in results.iter().enumerate() {
        match r {
            Ok(m) => {
                ok += 1;
                for i in 0..n {
                    let g = &m.gospa[i];
                    let s = &mut sums[i];
                    s[0] += g.total;
                    s[1] += g.localization;
                    s[2] += g.missed;
                    s[3] += g.false_;
                    s[4] += m.n_est[i] as f64;
                    if let Some(d) = m.spacing[i].d_center {
                        center[i].0 += d;
                        center[i].1 += 1;
                    }
                    if let Some(d) = m.spacing[i].d_tracks {
                        tracks[i].0 += d;
                        tracks[i].1 += 1;
                    }
                }
            }
            Err(e) => failures.push((run, e.to_string())),
        }
    }
    let denom = ok.max(1) as f64;
    let mean = |(s, c): (f64, usize)| (c > 0).then(|| s / c as f64);
    let rows = (0..n)
        .map(|i| SeriesRow {
            k: i as u32 + 1,
            gospa_total: sums[i][0] / denom,
            gospa_loc: sums[i][1] / denom,
            gospa_missed: sums[i][2] / denom,
            gospa_false: sums[i][3] / denom,
            d_center: mean(center[i]),
            d_tracks: mean(tracks[i]),
            n_est_mean: sums[i][4] / denom,
        })
        .collect();
    MetricSeries {
        tracker: kind,
        rows,
        runs_ok: ok,
        failures,
    }
}

/// Runs `cfg.runs` realisations of the configured scenario. Aggregation walks
/// runs in index order, so the output is identical for any schedule.
pub fn run_monte_carlo(cfg: &RunConfig, exec: Execution) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let sc = generate_scenario(cfg.scenario, cfg.min_separation)?;
    let per_run: Vec<Vec<Result<RunMetrics>>> = match exec {
        Execution::Sequential => (0..cfg.runs as u64).map(|r| run_single(cfg, &sc, r)).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel(workers) => {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| crate::error::TrackError::Config(format!("thread pool: {e}")))?;
            pool.install(|| {
                (0..cfg.runs as u64)
                    .into_par_iter()
                    .map(|r| run_single(cfg, &sc, r))
                    .collect()
            })
        }
    };
    let series = cfg
        .trackers
        .iter()
        .enumerate()
        .map(|(t, &kind)| {
            let column: Vec<&Result<RunMetrics>> = per_run.iter().map(|r| &r[t]).collect();
            aggregate(kind, sc.steps, &column)
        })
        .collect();
    Ok(MonteCarloResult {
        scenario: cfg.scenario,
        runs: cfg.runs,
        seed: cfg.seed,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::TrackError;

    fn small(trackers: &str) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.apply_text(&format!("runs = 2\nseed = 4\ntrackers = {trackers}\nbp_particles = 200")).unwrap();
        cfg
    }

    #[test]
    fn one_run_gives_full_series() {
        let mut cfg = small("jpda");
        cfg.runs = 1;
        let res = run_monte_carlo(&cfg, Execution::Sequential).unwrap();
        assert_eq!(res.series.len(), 1);
        assert_eq!(res.series[0].rows.len(), 300);
        assert_eq!(res.series[0].rows[0].k, 1);
        assert_eq!(res.series[0].runs_ok, 1);
    }

    #[test]
    fn trackers_share_scans() {
        // A tracker's metrics do not depend on which other trackers ran.
        let both = run_monte_carlo(&small("jpda,mht"), Execution::Sequential).unwrap();
        let alone = run_monte_carlo(&small("mht"), Execution::Sequential).unwrap();
        assert_eq!(both.get(TrackerKind::Mht), alone.get(TrackerKind::Mht));
    }

    #[test]
    fn failures_are_excluded_and_counted() {
        let ok: Result<RunMetrics> = Ok(RunMetrics {
            gospa: vec![GospaResult { total: 4.0, localization: 4.0, missed: 0.0, false_: 0.0 }; 3],
            spacing: (1..=3).map(|k| TrackDistanceSample { k, d_center: Some(5.0), d_tracks: None }).collect(),
            n_est: vec![2; 3],
        });
        let bad: Result<RunMetrics> = Err(TrackError::DegenerateTrack);
        let s = aggregate(TrackerKind::Bp, 3, &[&ok, &bad, &ok]);
        assert_eq!(s.runs_ok, 2);
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.failures[0].0, 1);
        assert_eq!(s.rows[2].gospa_total, 4.0);
        assert_eq!(s.rows[0].d_center, Some(5.0));
        assert_eq!(s.rows[0].d_tracks, None);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn schedule_does_not_change_results() {
        let mut cfg = small("jpda,bp");
        cfg.runs = 3;
        let seq = run_monte_carlo(&cfg, Execution::Sequential).unwrap();
        let par = run_monte_carlo(&cfg, Execution::Parallel(3)).unwrap();
        assert_eq!(seq, par);
    }
}
