//! JPDA filter: per-target MMSE estimates by soft association over all
//! joint events, with M/N confirmation, missed-detection termination and
//! two-point track initiation.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Matrix4, Vector2};

use crate::association::{
    exact_association_marginals, gate, AssociationWeights, GateMatrix, DEFAULT_EVENT_CAP,
};
use crate::error::{invalid, Result};
use crate::models::{
    gaussian2_pdf, innovation, kalman_update, predict_moments, spd_inverse2, DaVectorTarget,
    GaussianBelief, KinematicState, Measurement, MotionModel, Scan, SensorModel,
};
use crate::tracker::{Estimate, Tracker};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JpdaTrack {
    pub id: u64,
    pub belief: GaussianBelief,
    pub status: TrackStatus,
    /// Most recent scan first; `true` when a measurement fell in the gate.
    pub assoc_history: VecDeque<bool>,
    pub missed_streak: u32,
    /// Number of scans since initiation, counting both initiation scans.
    pub age: u32,
}

impl JpdaTrack {
    fn hits_in_window(&self, n: usize) -> usize {
        self.assoc_history.iter().take(n).filter(|&&h| h).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JpdaConfig {
    pub gate_gamma: f64,
    pub confirm_m: usize,
    pub confirm_n: usize,
    pub max_missed: u32,
    /// Largest speed accepted by two-point initiation, m/s.
    pub v_max: f64,
    /// Tentative tracks closer than this squared Mahalanobis distance to
    /// another track are dropped as duplicates.
    pub merge_gamma: f64,
    pub event_cap: usize,
}

impl Default for JpdaConfig {
    fn default() -> Self {
        Self {
            gate_gamma: 13.82,
            confirm_m: 10,
            confirm_n: 16,
            max_missed: 13,
            v_max: 50.0,
            merge_gamma: 2.0,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }
}

impl JpdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.confirm_m == 0 || self.confirm_m > self.confirm_n {
            return Err(invalid("jpda_confirm", "need 1 <= M <= N"));
        }
        if self.max_missed < 1 {
            return Err(invalid("jpda_max_missed", "must be at least 1"));
        }
        if !(self.gate_gamma > 0.0) {
            return Err(invalid("gate_gamma", "must be positive"));
        }
        if !(self.v_max > 0.0) {
            return Err(invalid("jpda_v_max", "must be positive"));
        }
        if !(self.merge_gamma >= 0.0) {
            return Err(invalid("jpda_merge_gamma", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Full filter state between scans.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JpdaState {
    pub tracks: Vec<JpdaTrack>,
    /// Unassociated measurements of the previous scan, kept for initiation.
    pub pending: Vec<Measurement>,
    pub next_id: u64,
}

/// Result of one JPDA recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct JpdaStepOutput {
    pub state: JpdaState,
    /// Association marginals of the tracks that entered the step, in input order.
    pub beta: Vec<Vec<f64>>,
}

/// Unnormalised posterior weight of a joint event: `Π_j psi[j][a_j]`.
pub fn event_posterior(a: &DaVectorTarget, w: &AssociationWeights) -> f64 {
    a.0.iter()
        .enumerate()
        .map(|(j, &m)| w.psi[j][m])
        .product()
}

/// Moment-matched Gaussian of the PDA mixture: weight `beta[0]` on the
/// predicted belief and `beta[m + 1]` on the Kalman update with measurement `m`.
pub fn pda_update(
    predicted: &GaussianBelief,
    beta_row: &[f64],
    scan: &Scan,
    sm: &SensorModel,
) -> Result<GaussianBelief> {
    let mut components: Vec<(f64, GaussianBelief)> = Vec::new();
    if beta_row[0] > 0.0 {
        components.push((beta_row[0], predicted.clone()));
    }
    for (m, z) in scan.measurements.iter().enumerate() {
        let b = beta_row[m + 1];
        if b > 0.0 {
            components.push((b, kalman_update(predicted, z, sm)?));
        }
    }
    let total: f64 = components.iter().map(|c| c.0).sum();
    if components.is_empty() || total <= 0.0 {
        return Ok(predicted.clone());
    }
    let mean = components
        .iter()
        .fold(nalgebra::Vector4::zeros(), |acc, (w, b)| acc + b.mean.0 * *w)
        / total;
    let mut cov = Matrix4::zeros();
    for (w, b) in &components {
        let d = b.mean.0 - mean;
        cov += (b.covariance + d * d.transpose()) * *w;
    }
    cov /= total;
    Ok(GaussianBelief::new(
        KinematicState(mean),
        crate::models::symmetrize(&cov),
    ))
}

/// Two-point initial belief from consecutive unassociated measurements.
pub fn two_point_init(
    previous: &Measurement,
    current: &Measurement,
    mm: &MotionModel,
    sm: &SensorModel,
) -> GaussianBelief {
    let dt = mm.dt;
    let vel = (current.0 - previous.0) / dt;
    let var = sm.sigma_v * sm.sigma_v;
    let mut cov = Matrix4::zeros();
    for i in 0..2 {
        cov[(i, i)] = var;
        cov[(i + 2, i + 2)] = 2.0 * var / (dt * dt);
        cov[(i, i + 2)] = var / dt;
        cov[(i + 2, i)] = var / dt;
    }
    GaussianBelief::new(
        KinematicState::new(current.z1(), current.z2(), vel[0], vel[1]),
        cov,
    )
}

fn position_mahalanobis2(a: &GaussianBelief, b: &GaussianBelief) -> f64 {
    let d: Vector2<f64> = a.mean.position() - b.mean.position();
    let s: Matrix2<f64> = a.covariance.fixed_view::<2, 2>(0, 0) + b.covariance.fixed_view::<2, 2>(0, 0);
    match spd_inverse2(&s) {
        Ok(inv) => (d.transpose() * inv * d)[0],
        Err(_) => f64::INFINITY,
    }
}

/// Track management after the association update.
///
/// Records `hits[i]` for `tracks[i]`, confirms tentative tracks with at least
/// M hits in the last N scans, kills tracks after more than `max_missed`
/// consecutive misses (and tentative tracks that can no longer reach M of
/// their first N scans), drops tentative duplicates, and starts tentative
/// tracks from pairs of unassociated measurements of consecutive scans whose
/// implied speed is at most `v_max`. Returns the surviving tracks and the
/// unassociated measurements left for the next scan.
#[allow(clippy::too_many_arguments)]
pub fn manage_tracks(
    mut tracks: Vec<JpdaTrack>,
    hits: &[bool],
    unassociated: &[Measurement],
    previous_unassociated: &[Measurement],
    next_id: &mut u64,
    cfg: &JpdaConfig,
    mm: &MotionModel,
    sm: &SensorModel,
) -> (Vec<JpdaTrack>, Vec<Measurement>) {
    for (t, &hit) in tracks.iter_mut().zip(hits) {
        t.age += 1;
        t.assoc_history.push_front(hit);
        t.assoc_history.truncate(cfg.confirm_n.max(1));
        t.missed_streak = if hit { 0 } else { t.missed_streak + 1 };
        if t.missed_streak > cfg.max_missed {
            t.status = TrackStatus::Dead;
            continue;
        }
        if t.status == TrackStatus::Tentative {
            let window = cfg.confirm_n.min(t.age as usize);
            let hits_so_far = t.hits_in_window(window);
            if hits_so_far >= cfg.confirm_m {
                t.status = TrackStatus::Confirmed;
            } else {
                let remaining = cfg.confirm_n.saturating_sub(t.age as usize);
                if hits_so_far + remaining < cfg.confirm_m {
                    t.status = TrackStatus::Dead;
                }
            }
        }
    }
    tracks.retain(|t| t.status != TrackStatus::Dead);

    // Youngest tentative duplicates go first.
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by(|&a, &b| tracks[b].id.cmp(&tracks[a].id));
    let mut removed = vec![false; tracks.len()];
    for &i in &order {
        if tracks[i].status != TrackStatus::Tentative {
            continue;
        }
        let duplicate = (0..tracks.len()).any(|k| {
            k != i
                && !removed[k]
                && (tracks[k].status == TrackStatus::Confirmed || tracks[k].id < tracks[i].id)
                && position_mahalanobis2(&tracks[i].belief, &tracks[k].belief) < cfg.merge_gamma
        });
        if duplicate {
            removed[i] = true;
        }
    }
    let mut kept: Vec<JpdaTrack> = tracks
        .into_iter()
        .zip(removed)
        .filter(|(_, r)| !r)
        .map(|(t, _)| t)
        .collect();

    let max_dist = cfg.v_max * mm.dt;
    let mut used_prev = vec![false; previous_unassociated.len()];
    let mut leftover = Vec::new();
    for z in unassociated {
        let nearest = previous_unassociated
            .iter()
            .enumerate()
            .filter(|(i, _)| !used_prev[*i])
            .map(|(i, p)| (i, (z.0 - p.0).norm()))
            .filter(|&(_, d)| d <= max_dist)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((i, _)) => {
                used_prev[i] = true;
                kept.push(JpdaTrack {
                    id: *next_id,
                    belief: two_point_init(&previous_unassociated[i], z, mm, sm),
                    status: TrackStatus::Tentative,
                    assoc_history: VecDeque::from(vec![true, true]),
                    missed_streak: 0,
                    age: 2,
                });
                *next_id += 1;
            }
            None => leftover.push(*z),
        }
    }
    (kept, leftover)
}

/// Association weights and gate of predicted tracks against a scan.
pub fn jpda_weights(
    predicted: &[GaussianBelief],
    scan: &Scan,
    sm: &SensorModel,
    gate_gamma: f64,
) -> Result<(AssociationWeights, GateMatrix)> {
    let n_m = scan.len();
    let mut gm = GateMatrix::new(predicted.len(), n_m);
    let mut psi = Vec::with_capacity(predicted.len());
    for (j, b) in predicted.iter().enumerate() {
        let (zhat, s) = innovation(b, sm);
        let s_inv = spd_inverse2(&s)?;
        let mut row = vec![0.0; n_m + 1];
        row[0] = 1.0 - sm.p_d;
        for (m, z) in scan.measurements.iter().enumerate() {
            if gate(&zhat, &s, z, gate_gamma)? {
                gm.set(j, m, true);
                row[m + 1] = sm.p_d * gaussian2_pdf(&z.0, &zhat, &s, &s_inv) / sm.clutter_intensity(z);
            }
        }
        psi.push(row);
    }
    Ok((AssociationWeights::new(psi, vec![0.0; n_m]), gm))
}

/// One JPDA recursion: predict, gate, marginalise over joint events, PDA
/// update and track management.
pub fn jpda_step(
    state: &JpdaState,
    scan: &Scan,
    mm: &MotionModel,
    sm: &SensorModel,
    cfg: &JpdaConfig,
) -> Result<JpdaStepOutput> {
    let predicted: Vec<GaussianBelief> = state
        .tracks
        .iter()
        .map(|t| predict_moments(&t.belief, mm))
        .collect();
    let (weights, gm) = jpda_weights(&predicted, scan, sm, cfg.gate_gamma)?;
    let marginals = exact_association_marginals(&weights, &gm, cfg.event_cap)?;

    let mut tracks = Vec::with_capacity(state.tracks.len());
    let mut hits = Vec::with_capacity(state.tracks.len());
    for (j, (track, pred)) in state.tracks.iter().zip(&predicted).enumerate() {
        let belief = pda_update(pred, &marginals.beta[j], scan, sm)?;
        // detected when a measurement explains the track better than a miss
        hits.push(marginals.beta[j][0] < 0.5);
        tracks.push(JpdaTrack {
            belief,
            ..track.clone()
        });
    }
    let unassociated: Vec<Measurement> = scan
        .measurements
        .iter()
        .enumerate()
        .filter(|(m, _)| !gm.measurement_gated(*m))
        .map(|(_, z)| *z)
        .collect();
    let mut next_id = state.next_id;
    let (tracks, pending) = manage_tracks(
        tracks,
        &hits,
        &unassociated,
        &state.pending,
        &mut next_id,
        cfg,
        mm,
        sm,
    );
    Ok(JpdaStepOutput {
        state: JpdaState {
            tracks,
            pending,
            next_id,
        },
        beta: marginals.beta,
    })
}

/// Stateful JPDA tracker reporting confirmed tracks.
#[derive(Debug, Clone)]
pub struct JpdaTracker {
    pub state: JpdaState,
    motion: MotionModel,
    sensor: SensorModel,
    config: JpdaConfig,
}

impl JpdaTracker {
    pub fn new(motion: MotionModel, sensor: SensorModel, config: JpdaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: JpdaState::default(),
            motion,
            sensor,
            config,
        })
    }
}

impl Tracker for JpdaTracker {
    fn name(&self) -> &'static str {
        "jpda"
    }

    fn step(&mut self, scan: &Scan) -> Result<Vec<Estimate>> {
        let out = jpda_step(&self.state, scan, &self.motion, &self.sensor, &self.config)?;
        self.state = out.state;
        Ok(self
            .state
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
            .map(|t| Estimate {
                id: t.id,
                state: t.belief.mean,
            })
            .collect())
    }
}
