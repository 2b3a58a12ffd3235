//! Particle-based BP tracker: legacy and new potential targets with
//! existence probabilities, loopy BP for the data association, and
//! existence-thresholded MMSE estimates.
//!
//! New PTs are held as a Gaussian until a measurement falls in their gate.
//! Prediction of a Gaussian is exact, so this only defers drawing the
//! particles; most clutter-born PTs are pruned before that happens.

use nalgebra::{Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::association::{
    bp_association_marginals, mahalanobis2, AssociationMarginals, AssociationWeights, BpOptions,
    GateMatrix,
};
use crate::error::{invalid, Result};
use crate::models::{
    gaussian2_pdf, innovation, position_likelihood, predict_moments, propagate_vector,
    spd_inverse2, Belief, GaussianBelief, KinematicState, MotionModel, ParticleBelief,
    PotentialTarget, PtKind, Scan, SensorModel,
};
use crate::rng::{substream, tag};
use crate::tracker::{Estimate, Tracker};

pub type PtBelief = PotentialTarget;

const STREAM_PREDICT: u64 = 0;
const STREAM_SAMPLE: u64 = 1;
const STREAM_RESAMPLE: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct BpConfig {
    pub particles: usize,
    pub p_th: f64,
    pub p_pr: f64,
    pub bp: BpOptions,
    pub birth_vel_std: f64,
    /// Gate on the moment-matched predicted cloud.
    pub gate_gamma: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            particles: 5000,
            p_th: 0.5,
            p_pr: 1e-5,
            bp: BpOptions::default(),
            birth_vel_std: 10.0,
            gate_gamma: 25.0,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(invalid("bp_particles", "must be positive"));
        }
        if !(0.0 < self.p_pr && self.p_pr < self.p_th && self.p_th < 1.0) {
            return Err(invalid("bp_p_th", "need 0 < P_pr < P_th < 1"));
        }
        if self.bp.max_iter == 0 || !(self.bp.tol > 0.0) {
            return Err(invalid("bp_max_iter", "need max_iter >= 1 and tol > 0"));
        }
        if !(0.0..1.0).contains(&self.bp.damping) {
            return Err(invalid("bp_damping", "must lie in [0, 1)"));
        }
        if !(self.birth_vel_std > 0.0) || !(self.gate_gamma > 0.0) {
            return Err(invalid("bp_birth_vel_std", "must be positive"));
        }
        Ok(())
    }
}

/// Association weights plus the per-particle likelihoods reused by the update.
#[derive(Debug, Clone, PartialEq)]
pub struct PtWeights {
    pub weights: AssociationWeights,
    pub gate: GateMatrix,
    /// `likelihoods[j][e]` holds `f(z_m | x_i)` per particle for the
    /// `e`-th gated measurement `gated[j][e]` of PT `j`.
    pub gated: Vec<Vec<usize>>,
    pub likelihoods: Vec<Vec<Vec<f64>>>,
    /// Particle-averaged likelihood `L_m = Σ_i w_i f(z_m | x_i)`.
    pub averaged: Vec<Vec<f64>>,
}

/// Prediction: survival on the existence and the motion model on the state.
pub fn bp_predict(beliefs: &mut [PtBelief], k: u32, seed: u64, mm: &MotionModel) {
    for pt in beliefs.iter_mut() {
        pt.existence *= mm.p_s;
        pt.kind = PtKind::Legacy;
        match &mut pt.belief {
            Belief::Gaussian(g) => *g = predict_moments(g, mm),
            Belief::Particles(p) => {
                let mut rng = substream(seed, &[tag::BP_TRACKER, k as u64, pt.id, STREAM_PREDICT]);
                for x in p.states.iter_mut() {
                    *x = propagate_vector(x, mm, &mut rng);
                }
            }
        }
    }
}

fn sample_gaussian<R: Rng + ?Sized>(g: &GaussianBelief, n: usize, rng: &mut R) -> ParticleBelief {
    let l = g
        .covariance
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| {
            Matrix4::from_diagonal(&g.covariance.diagonal().map(|v| v.max(0.0).sqrt()))
        });
    let states = (0..n)
        .map(|_| {
            let e = Vector4::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            g.mean.0 + l * e
        })
        .collect();
    ParticleBelief::uniform(states)
}

fn moments(b: &Belief) -> GaussianBelief {
    match b {
        Belief::Gaussian(g) => g.clone(),
        Belief::Particles(p) => p.moments(),
    }
}

/// Gates every PT, draws particles for Gaussian PTs that gate a measurement,
/// and computes `psi` and `ξ`.
pub fn compute_weights(
    beliefs: &mut [PtBelief],
    scan: &Scan,
    k: u32,
    seed: u64,
    sm: &SensorModel,
    cfg: &BpConfig,
) -> Result<PtWeights> {
    let n_m = scan.len();
    let mut gm = GateMatrix::new(beliefs.len(), n_m);
    let mut psi = Vec::with_capacity(beliefs.len());
    let mut gated_all = Vec::with_capacity(beliefs.len());
    let mut lik_all = Vec::with_capacity(beliefs.len());
    let mut avg_all = Vec::with_capacity(beliefs.len());
    for (j, pt) in beliefs.iter_mut().enumerate() {
        let r = pt.existence;
        let mut row = vec![0.0; n_m + 1];
        row[0] = r * (1.0 - sm.p_d) + (1.0 - r);
        let mut gated = Vec::new();
        let mut liks = Vec::new();
        let mut avgs = Vec::new();
        if r > 0.0 && sm.p_d > 0.0 && n_m > 0 {
            let g = moments(&pt.belief);
            let (zhat, s) = innovation(&g, sm);
            for (m, z) in scan.measurements.iter().enumerate() {
                let inside = match mahalanobis2(&zhat, &s, z) {
                    Ok(d2) => d2 <= cfg.gate_gamma,
                    // Collapsed cloud: fall back to a plain distance gate.
                    Err(_) => (z.0 - zhat).norm_squared() <= cfg.gate_gamma * sm.sigma_v * sm.sigma_v,
                };
                if inside {
                    gated.push(m);
                }
            }
            if !gated.is_empty() {
                if let Belief::Gaussian(g) = &pt.belief {
                    let mut rng =
                        substream(seed, &[tag::BP_TRACKER, k as u64, pt.id, STREAM_SAMPLE]);
                    pt.belief = Belief::Particles(sample_gaussian(g, cfg.particles, &mut rng));
                }
                let Belief::Particles(p) = &pt.belief else { unreachable!() };
                for &m in &gated {
                    let z = &scan.measurements[m];
                    let l: Vec<f64> = p
                        .states
                        .iter()
                        .map(|x| position_likelihood(&z.0, &Vector2::new(x[0], x[1]), sm.sigma_v))
                        .collect();
                    let avg: f64 = l.iter().zip(&p.weights).map(|(a, w)| a * w).sum();
                    row[m + 1] = r * sm.p_d * avg / sm.clutter_intensity(z);
                    if row[m + 1] > 0.0 {
                        gm.set(j, m, true);
                    }
                    liks.push(l);
                    avgs.push(avg);
                }
            }
        }
        psi.push(row);
        gated_all.push(gated);
        lik_all.push(liks);
        avg_all.push(avgs);
    }
    let xi = scan
        .measurements
        .iter()
        .map(|z| sm.new_target_weight(z))
        .collect();
    Ok(PtWeights {
        weights: AssociationWeights::new(psi, xi),
        gate: gm,
        gated: gated_all,
        likelihoods: lik_all,
        averaged: avg_all,
    })
}

/// Systematic resampling to `n` equally weighted particles.
pub fn systematic_resample<R: Rng + ?Sized>(p: &ParticleBelief, n: usize, rng: &mut R) -> ParticleBelief {
    let total: f64 = p.weights.iter().sum();
    let step = total / n as f64;
    let mut u = rng.gen::<f64>() * step;
    let mut states = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    for _ in 0..n {
        while i + 1 < p.len() && cum + p.weights[i] < u {
            cum += p.weights[i];
            i += 1;
        }
        states.push(p.states[i]);
        u += step;
    }
    ParticleBelief::uniform(states)
}

/// Belief update of the legacy PTs from the association marginals.
///
/// With `psi0 = r(1 - p_d) + 1 - r` and `L_m` the particle-averaged
/// likelihood, particle `i` is reweighted by
/// `r(1 - p_d) β0 / psi0 + Σ_m β_m f(z_m | x_i) / L_m`, whose weighted sum
/// is the updated existence `1 - β0 (1 - r) / psi0`.
pub fn bp_update(
    beliefs: &mut [PtBelief],
    w: &PtWeights,
    marginals: &AssociationMarginals,
    k: u32,
    seed: u64,
    sm: &SensorModel,
    cfg: &BpConfig,
) {
    for (j, pt) in beliefs.iter_mut().enumerate() {
        let r = pt.existence;
        let beta = &marginals.beta[j];
        let psi0 = w.weights.psi[j][0];
        let claimed: f64 = beta[1..].iter().sum();
        if psi0 <= 0.0 {
            pt.existence = if claimed > 0.0 { 1.0 } else { 0.0 };
        } else {
            pt.existence = (1.0 - beta[0] * (1.0 - r) / psi0).clamp(0.0, 1.0);
        }
        let Belief::Particles(p) = &mut pt.belief else { continue };
        let informative = w.gated[j]
            .iter()
            .enumerate()
            .any(|(e, &m)| beta[m + 1] > 0.0 && w.averaged[j][e] > 0.0);
        if !informative {
            continue;
        }
        let miss = if psi0 > 0.0 { r * (1.0 - sm.p_d) * beta[0] / psi0 } else { 0.0 };
        let mut updated = p.clone();
        for (i, wi) in updated.weights.iter_mut().enumerate() {
            let mut f = miss;
            for (e, &m) in w.gated[j].iter().enumerate() {
                let l = w.averaged[j][e];
                if beta[m + 1] > 0.0 && l > 0.0 {
                    f += beta[m + 1] * w.likelihoods[j][e][i] / l;
                }
            }
            *wi *= f;
        }
        if updated.normalize() <= 0.0 {
            pt.existence = 0.0;
            continue;
        }
        let mut rng = substream(seed, &[tag::BP_TRACKER, k as u64, pt.id, STREAM_RESAMPLE]);
        *p = systematic_resample(&updated, cfg.particles, &mut rng);
    }
}

/// Existence of the new PT introduced by each measurement,
/// `ξ_m / (1 + ξ_m + Σ_j μ_{j→m}) = κ_m ξ_m / (1 + ξ_m)`.
pub fn new_pt_existence(marginals: &AssociationMarginals, xi: &[f64]) -> Vec<f64> {
    marginals
        .kappa
        .iter()
        .zip(xi)
        .map(|(&kappa, &x)| if x > 0.0 { kappa * x / (1.0 + x) } else { 0.0 })
        .collect()
}

/// One new PT per measurement, held as `N([z, 0], diag(σ_v², σ_v², σ_b², σ_b²))`.
pub fn init_new_pts(
    scan: &Scan,
    existence: &[f64],
    next_id: &mut u64,
    sm: &SensorModel,
    cfg: &BpConfig,
) -> Vec<PtBelief> {
    let pv = sm.sigma_v * sm.sigma_v;
    let vv = cfg.birth_vel_std * cfg.birth_vel_std;
    scan.measurements
        .iter()
        .zip(existence)
        .map(|(z, &r)| {
            let id = *next_id;
            *next_id += 1;
            PtBelief {
                id,
                belief: Belief::Gaussian(GaussianBelief::new(
                    KinematicState::new(z.z1(), z.z2(), 0.0, 0.0),
                    Matrix4::from_diagonal(&Vector4::new(pv, pv, vv, vv)),
                )),
                existence: r,
                kind: PtKind::New,
            }
        })
        .collect()
}

/// Drops PTs below `P_pr` and returns MMSE estimates of PTs above `P_th`.
pub fn extract_estimates(beliefs: &mut Vec<PtBelief>, cfg: &BpConfig) -> Vec<Estimate> {
    beliefs.retain(|pt| pt.existence >= cfg.p_pr);
    beliefs
        .iter()
        .filter(|pt| pt.existence > cfg.p_th)
        .map(|pt| Estimate {
            id: pt.id,
            state: match &pt.belief {
                Belief::Gaussian(g) => g.mean,
                Belief::Particles(p) => p.mean(),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpStepOutput {
    pub estimates: Vec<Estimate>,
    pub marginals: AssociationMarginals,
    /// Number of PTs before pruning: legacy PTs plus one per measurement.
    pub pts_before_prune: usize,
}

/// One BP recursion: predict, weights, BP association, update, new PTs,
/// prune and extract.
#[allow(clippy::too_many_arguments)]
pub fn bp_step(
    beliefs: &mut Vec<PtBelief>,
    next_id: &mut u64,
    scan: &Scan,
    seed: u64,
    mm: &MotionModel,
    sm: &SensorModel,
    cfg: &BpConfig,
) -> Result<BpStepOutput> {
    let k = scan.k;
    bp_predict(beliefs, k, seed, mm);
    let w = compute_weights(beliefs, scan, k, seed, sm, cfg)?;
    let marginals = bp_association_marginals(&w.weights, &w.gate, &cfg.bp);
    bp_update(beliefs, &w, &marginals, k, seed, sm, cfg);
    let existence = new_pt_existence(&marginals, &w.weights.xi);
    beliefs.extend(init_new_pts(scan, &existence, next_id, sm, cfg));
    let pts_before_prune = beliefs.len();
    let estimates = extract_estimates(beliefs, cfg);
    Ok(BpStepOutput {
        estimates,
        marginals,
        pts_before_prune,
    })
}

/// Stateful BP tracker.
#[derive(Debug, Clone)]
pub struct BpTracker {
    pub beliefs: Vec<PtBelief>,
    pub next_id: u64,
    seed: u64,
    motion: MotionModel,
    sensor: SensorModel,
    config: BpConfig,
}

impl BpTracker {
    pub fn new(motion: MotionModel, sensor: SensorModel, config: BpConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            beliefs: Vec::new(),
            next_id: 0,
            seed,
            motion,
            sensor,
            config,
        })
    }
}

impl Tracker for BpTracker {
    fn name(&self) -> &'static str {
        "bp"
    }

    fn step(&mut self, scan: &Scan) -> Result<Vec<Estimate>> {
        Ok(bp_step(
            &mut self.beliefs,
            &mut self.next_id,
            scan,
            self.seed,
            &self.motion,
            &self.sensor,
            &self.config,
        )?
        .estimates)
    }
}

/// Closed-form predicted likelihood of a Gaussian PT, used as a reference.
pub fn gaussian_likelihood(g: &GaussianBelief, z: &crate::models::Measurement, sm: &SensorModel) -> Result<f64> {
    let (zhat, s) = innovation(g, sm);
    Ok(gaussian2_pdf(&z.0, &zhat, &s, &spd_inverse2(&s)?))
}
