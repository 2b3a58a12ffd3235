//! The three two-target scenarios and their measurement simulation.
//!
//! Geometry is piecewise linear and deterministic. Both targets exist for
//! the whole run and mirror each other about the x-axis.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Result, TrackError};
use crate::models::{KinematicState, Measurement, Roi, Scan, SensorModel};
use crate::rng::{substream, tag};

pub const STEPS: u32 = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDefinition {
    pub id: u8,
    pub steps: u32,
    pub roi: Roi,
    /// `truth[i][k]` is target `i` at scan `k = 0..=steps`.
    pub truth: [Vec<KinematicState>; 2],
}

impl ScenarioDefinition {
    pub fn positions(&self, k: u32) -> [nalgebra::Vector2<f64>; 2] {
        [self.truth[0][k as usize].position(), self.truth[1][k as usize].position()]
    }
}

fn with_velocities(xs: &[f64], ys: &[f64]) -> Vec<KinematicState> {
    let n = xs.len();
    (0..n)
        .map(|k| {
            let (a, b) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            let span = (b - a) as f64;
            KinematicState::new(xs[k], ys[k], (xs[b] - xs[a]) / span, (ys[b] - ys[a]) / span)
        })
        .collect()
}

/// Builds scenario `id` with the given closest approach.
pub fn generate_scenario(id: u8, min_separation: f64) -> Result<ScenarioDefinition> {
    let h = min_separation / 2.0;
    let ks: Vec<f64> = (0..=STEPS).map(f64::from).collect();
    let (roi, xs, upper): (Roi, Vec<f64>, Vec<f64>) = match id {
        1 => (
            Roi::new(-750.0, 750.0, -750.0, 750.0),
            ks.iter().map(|k| -600.0 + 4.0 * k).collect(),
            ks.iter()
                .map(|&k| {
                    if k <= 100.0 {
                        h + 100.0 - k
                    } else if k <= 200.0 {
                        h
                    } else {
                        h + k - 200.0
                    }
                })
                .collect(),
        ),
        2 => (
            Roi::new(0.0, 1500.0, -750.0, 750.0),
            ks.iter().map(|k| 50.0 + 4.0 * k).collect(),
            ks.iter()
                .map(|&k| {
                    if k <= 150.0 {
                        h
                    } else if k == 151.0 {
                        // Rounds the corner so the turn stays within 1.5 m/s².
                        h + 1.5
                    } else {
                        h + 2.0 * (k - 150.0)
                    }
                })
                .collect(),
        ),
        3 => (
            Roi::new(-750.0, 750.0, -750.0, 750.0),
            ks.iter().map(|k| -600.0 + 4.0 * k).collect(),
            ks.iter().map(|k| -300.0 + 2.0 * k).collect(),
        ),
        other => return Err(TrackError::UnknownScenario(other)),
    };
    let lower: Vec<f64> = upper.iter().map(|y| -y).collect();
    Ok(ScenarioDefinition {
        id,
        steps: STEPS,
        roi,
        truth: [with_velocities(&xs, &upper), with_velocities(&xs, &lower)],
    })
}

/// Measurements of scan `k` for Monte Carlo run `run`.
pub fn simulate_scan(
    sc: &ScenarioDefinition,
    sm: &SensorModel,
    seed: u64,
    run: u64,
    k: u32,
) -> Scan {
    let mut rng = substream(seed, &[tag::MEASUREMENTS, run, u64::from(k)]);
    let noise = Normal::new(0.0, sm.sigma_v).expect("sigma_v validated positive");
    let mut meas = Vec::new();
    for target in &sc.truth {
        if rng.gen::<f64>() < sm.p_d {
            let p = target[k as usize].position();
            meas.push(Measurement::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng)));
        }
    }
    if sm.mu_c > 0.0 {
        let n = Poisson::new(sm.mu_c).expect("mu_c validated positive").sample(&mut rng) as usize;
        let roi = &sm.roi;
        for _ in 0..n {
            meas.push(Measurement::new(
                rng.gen_range(roi.x_min..roi.x_max),
                rng.gen_range(roi.y_min..roi.y_max),
            ));
        }
    }
    meas.shuffle(&mut rng);
    Scan::new(k, meas)
}

/// All scans `k = 1..=steps` of one run.
pub fn simulate_measurements(sc: &ScenarioDefinition, sm: &SensorModel, seed: u64, run: u64) -> Vec<Scan> {
    (1..=sc.steps).map(|k| simulate_scan(sc, sm, seed, run, k)).collect()
}
