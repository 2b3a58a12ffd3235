//! Domain types and the probabilistic system model shared by all trackers:
//! near constant-velocity motion, linear-Gaussian position sensor, Poisson
//! clutter and birth, and the single-scan factors `q`, `v` and `Ψ` of the
//! joint posterior.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result, TrackError};

/// Lower bound on the clutter intensity `μ_c·f_c(z)` in m⁻².
///
/// Keeps likelihood ratios finite when `μ_c = 0` or a measurement lies
/// outside the ROI.
pub const MIN_CLUTTER_INTENSITY: f64 = 1e-12;

/// Target state `[x1, x2, v1, v2]` in metres and metres per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState(pub Vector4<f64>);

impl KinematicState {
    pub fn new(x1: f64, x2: f64, v1: f64, v2: f64) -> Self {
        Self(Vector4::new(x1, x2, v1, v2))
    }

    pub fn x1(&self) -> f64 {
        self.0[0]
    }

    pub fn x2(&self) -> f64 {
        self.0[1]
    }

    pub fn v1(&self) -> f64 {
        self.0[2]
    }

    pub fn v2(&self) -> f64 {
        self.0[3]
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.0[0], self.0[1])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Gaussian moments of a kinematic state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: KinematicState,
    pub covariance: Matrix4<f64>,
}

impl GaussianBelief {
    pub fn new(mean: KinematicState, covariance: Matrix4<f64>) -> Self {
        Self { mean, covariance }
    }

    /// Returns `true` if the covariance is symmetric PSD within `1e-9`.
    pub fn is_valid(&self) -> bool {
        let sym = symmetrize(&self.covariance);
        if (sym - self.covariance).abs().max() > 1e-9 * (1.0 + self.covariance.abs().max()) {
            return false;
        }
        sym.symmetric_eigenvalues().iter().all(|&e| e >= -1e-9)
    }
}

/// Weighted particle representation of a kinematic state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBelief {
    pub states: Vec<Vector4<f64>>,
    pub weights: Vec<f64>,
}

impl ParticleBelief {
    /// Equally weighted particles.
    pub fn uniform(states: Vec<Vector4<f64>>) -> Self {
        let w = 1.0 / states.len().max(1) as f64;
        let weights = vec![w; states.len()];
        Self { states, weights }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Rescales the weights to sum to one and returns the previous total.
    pub fn normalize(&mut self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        if total > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= total);
        }
        total
    }

    /// Weighted mean of the particles.
    pub fn mean(&self) -> KinematicState {
        let total: f64 = self.weights.iter().sum();
        let mut acc = Vector4::zeros();
        for (x, &w) in self.states.iter().zip(&self.weights) {
            acc += x * w;
        }
        KinematicState(if total > 0.0 { acc / total } else { acc })
    }

    /// Weighted mean and covariance, used for gating particle clouds.
    pub fn moments(&self) -> GaussianBelief {
        let mean = self.mean();
        let total: f64 = self.weights.iter().sum();
        let mut cov = Matrix4::zeros();
        for (x, &w) in self.states.iter().zip(&self.weights) {
            let d = x - mean.0;
            cov += d * d.transpose() * w;
        }
        if total > 0.0 {
            cov /= total;
        }
        GaussianBelief::new(mean, cov)
    }
}

/// Kinematic belief of a potential target.
#[derive(Debug, Clone, PartialEq)]
pub enum Belief {
    Gaussian(GaussianBelief),
    Particles(ParticleBelief),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtKind {
    Legacy,
    New,
}

/// A potential target: kinematic belief plus existence probability.
///
/// Nonexistence is carried by `1 - existence`; the dummy pdf is never
/// materialised.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTarget {
    pub id: u64,
    pub belief: Belief,
    pub existence: f64,
    pub kind: PtKind,
}

/// Position measurement `[z1, z2]` in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement(pub Vector2<f64>);

impl Measurement {
    pub fn new(z1: f64, z2: f64) -> Self {
        Self(Vector2::new(z1, z2))
    }

    pub fn z1(&self) -> f64 {
        self.0[0]
    }

    pub fn z2(&self) -> f64 {
        self.0[1]
    }
}

/// Measurements of one scan. Index `m` in the list is measurement `m + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub k: u32,
    pub measurements: Vec<Measurement>,
}

impl Scan {
    pub fn new(k: u32, measurements: Vec<Measurement>) -> Self {
        Self { k, measurements }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Measurement with one-based index `m`.
    pub fn get(&self, m: usize) -> Option<&Measurement> {
        m.checked_sub(1).and_then(|i| self.measurements.get(i))
    }
}

/// Near constant-velocity motion with survival probability.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub dt: f64,
    pub sigma_u2: f64,
    pub transition: Matrix4<f64>,
    pub process_noise: Matrix4<f64>,
    /// Lower Cholesky factor of `process_noise` (zero when noise-free).
    pub noise_factor: Matrix4<f64>,
    pub p_s: f64,
}

/// Axis-aligned rectangle in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Roi {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    /// Uniform density on the rectangle.
    pub fn uniform_pdf(&self, p: &Vector2<f64>) -> f64 {
        if self.contains(p) {
            1.0 / self.area()
        } else {
            0.0
        }
    }
}

/// Linear-Gaussian position sensor with Poisson clutter and Poisson birth,
/// both uniform on the ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    pub p_d: f64,
    pub sigma_v: f64,
    pub mu_c: f64,
    pub roi: Roi,
    pub mu_b: f64,
}

impl SensorModel {
    pub fn new(p_d: f64, sigma_v: f64, mu_c: f64, roi: Roi, mu_b: f64) -> Result<Self> {
        if !(p_d > 0.0 && p_d <= 1.0) {
            return Err(invalid("p_d", format!("{p_d} not in (0, 1]")));
        }
        if !(sigma_v > 0.0 && sigma_v.is_finite()) {
            return Err(invalid("sigma_v", format!("{sigma_v} must be positive")));
        }
        if !(mu_c >= 0.0 && mu_c.is_finite()) {
            return Err(invalid("mu_c", format!("{mu_c} must be nonnegative")));
        }
        if !(mu_b >= 0.0 && mu_b.is_finite()) {
            return Err(invalid("mu_b", format!("{mu_b} must be nonnegative")));
        }
        if !(roi.area() > 0.0) {
            return Err(invalid("roi", "empty region"));
        }
        Ok(Self {
            p_d,
            sigma_v,
            mu_c,
            roi,
            mu_b,
        })
    }

    /// Position-selection matrix `H`.
    pub fn observation() -> Matrix2x4<f64> {
        Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    }

    pub fn noise_covariance(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.sigma_v * self.sigma_v
    }

    pub fn clutter_pdf(&self, z: &Measurement) -> f64 {
        self.roi.uniform_pdf(&z.0)
    }

    pub fn birth_pdf(&self, position: &Vector2<f64>) -> f64 {
        self.roi.uniform_pdf(position)
    }

    /// `μ_c·f_c(z)`, floored at [`MIN_CLUTTER_INTENSITY`].
    pub fn clutter_intensity(&self, z: &Measurement) -> f64 {
        (self.mu_c * self.clutter_pdf(z)).max(MIN_CLUTTER_INTENSITY)
    }

    /// New-target weight `ξ(z) = ∫ v(x, 1, 0; z) dx` for a birth pdf that is
    /// uniform in position on the ROI.
    ///
    /// The position integral of `f_b·f(z|x)` is approximated by `f_b(z)`,
    /// which is exact away from the ROI border.
    pub fn new_target_weight(&self, z: &Measurement) -> f64 {
        self.p_d * self.mu_b * self.birth_pdf(&z.0) / self.clutter_intensity(z)
    }
}

/// Target-oriented association vector; entry `j` is the one-based
/// measurement index of PT `j` or 0 for a missed detection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DaVectorTarget(pub Vec<usize>);

/// Measurement-oriented association vector; entry `m` is the one-based
/// legacy PT index or 0 for clutter / new target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DaVectorMeasurement(pub Vec<usize>);

fn nonzero_distinct(v: &[usize]) -> bool {
    let mut seen: Vec<usize> = v.iter().copied().filter(|&x| x != 0).collect();
    let n = seen.len();
    seen.sort_unstable();
    seen.dedup();
    seen.len() == n
}

impl DaVectorTarget {
    /// Valid iff all entries are within `0..=m_k` and nonzero entries are distinct.
    pub fn is_valid(&self, m_k: usize) -> bool {
        self.0.iter().all(|&a| a <= m_k) && nonzero_distinct(&self.0)
    }

    /// The unique measurement-oriented vector consistent with `self`.
    pub fn to_measurement_oriented(&self, m_k: usize) -> Option<DaVectorMeasurement> {
        if !self.is_valid(m_k) {
            return None;
        }
        let mut b = vec![0; m_k];
        for (j, &a) in self.0.iter().enumerate() {
            if a > 0 {
                b[a - 1] = j + 1;
            }
        }
        Some(DaVectorMeasurement(b))
    }
}

impl DaVectorMeasurement {
    pub fn is_valid(&self, j_prev: usize) -> bool {
        self.0.iter().all(|&b| b <= j_prev) && nonzero_distinct(&self.0)
    }

    pub fn to_target_oriented(&self, j_prev: usize) -> Option<DaVectorTarget> {
        if !self.is_valid(j_prev) {
            return None;
        }
        let mut a = vec![0; j_prev];
        for (m, &b) in self.0.iter().enumerate() {
            if b > 0 {
                a[b - 1] = m + 1;
            }
        }
        Some(DaVectorTarget(a))
    }
}

/// Builds the discretised continuous-time constant-velocity model.
pub fn build_motion_model(dt: f64, sigma_u2: f64, p_s: f64) -> Result<MotionModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("T", format!("{dt} must be positive")));
    }
    if !(sigma_u2 >= 0.0 && sigma_u2.is_finite()) {
        return Err(invalid("sigma_u2", format!("{sigma_u2} must be nonnegative")));
    }
    if !(p_s > 0.0 && p_s <= 1.0) {
        return Err(invalid("p_s", format!("{p_s} not in (0, 1]")));
    }
    let mut transition = Matrix4::identity();
    transition[(0, 2)] = dt;
    transition[(1, 3)] = dt;

    let (t3, t2) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0);
    let mut q = Matrix4::zeros();
    q[(0, 0)] = t3;
    q[(1, 1)] = t3;
    q[(0, 2)] = t2;
    q[(2, 0)] = t2;
    q[(1, 3)] = t2;
    q[(3, 1)] = t2;
    q[(2, 2)] = dt;
    q[(3, 3)] = dt;
    let process_noise = q * sigma_u2;
    let noise_factor = if sigma_u2 > 0.0 {
        process_noise
            .cholesky()
            .map(|c| c.l())
            .ok_or_else(|| invalid("sigma_u2", "process noise not positive definite"))?
    } else {
        Matrix4::zeros()
    };
    Ok(MotionModel {
        dt,
        sigma_u2,
        transition,
        process_noise,
        noise_factor,
        p_s,
    })
}

pub fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Kalman prediction of Gaussian moments.
pub fn predict_moments(b: &GaussianBelief, mm: &MotionModel) -> GaussianBelief {
    let a = &mm.transition;
    let mean = a * b.mean.0;
    let cov = a * b.covariance * a.transpose() + mm.process_noise;
    GaussianBelief::new(KinematicState(mean), symmetrize(&cov))
}

/// Draws `A·x + u` with `u ~ N(0, Σ_u)`.
pub fn sample_transition<R: Rng + ?Sized>(
    x: &KinematicState,
    mm: &MotionModel,
    rng: &mut R,
) -> KinematicState {
    KinematicState(propagate_vector(&x.0, mm, rng))
}

#[inline]
pub(crate) fn propagate_vector<R: Rng + ?Sized>(
    x: &Vector4<f64>,
    mm: &MotionModel,
    rng: &mut R,
) -> Vector4<f64> {
    let mut out = mm.transition * x;
    if mm.sigma_u2 > 0.0 {
        let n = Vector4::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        out += mm.noise_factor * n;
    }
    out
}

/// `N(z; H·x, σ_v²·I₂)`.
pub fn measurement_likelihood(z: &Measurement, x: &KinematicState, sm: &SensorModel) -> f64 {
    position_likelihood(&z.0, &x.position(), sm.sigma_v)
}

#[inline]
pub(crate) fn position_likelihood(z: &Vector2<f64>, pos: &Vector2<f64>, sigma: f64) -> f64 {
    let var = sigma * sigma;
    let d2 = (z - pos).norm_squared();
    (-0.5 * d2 / var).exp() / (2.0 * std::f64::consts::PI * var)
}

/// Legacy PT factor `q(x, r, a; z)`.
pub fn legacy_factor_q(
    x: &KinematicState,
    exists: bool,
    a: usize,
    scan: &Scan,
    sm: &SensorModel,
) -> Result<f64> {
    if a > scan.len() {
        return Err(TrackError::IndexOutOfRange {
            index: a,
            max: scan.len(),
        });
    }
    if !exists {
        return Ok(if a == 0 { 1.0 } else { 0.0 });
    }
    Ok(match scan.get(a) {
        None => 1.0 - sm.p_d,
        Some(z) => sm.p_d * measurement_likelihood(z, x, sm) / sm.clutter_intensity(z),
    })
}

/// New PT factor `v(x̄, r̄, b; z)` with the dummy pdf taken as 1.
pub fn new_pt_factor_v(
    x: &KinematicState,
    exists: bool,
    b: usize,
    j_prev: usize,
    z: &Measurement,
    sm: &SensorModel,
) -> Result<f64> {
    if b > j_prev {
        return Err(TrackError::IndexOutOfRange {
            index: b,
            max: j_prev,
        });
    }
    if !exists {
        return Ok(1.0);
    }
    if b != 0 {
        return Ok(0.0);
    }
    let fb = sm.birth_pdf(&x.position());
    Ok(sm.p_d * sm.mu_b * fb * measurement_likelihood(z, x, sm) / sm.clutter_intensity(z))
}

/// Consistency indicator `Ψ_{j,m}(a_j, b_m)` for one-based `j` and `m`.
pub fn consistency_indicator(a_j: usize, b_m: usize, j: usize, m: usize) -> u8 {
    if (a_j == m && b_m != j) || (b_m == j && a_j != m) {
        0
    } else {
        1
    }
}

/// Predicted measurement and innovation covariance of a Gaussian belief.
pub fn innovation(b: &GaussianBelief, sm: &SensorModel) -> (Vector2<f64>, Matrix2<f64>) {
    let h = SensorModel::observation();
    let s = h * b.covariance * h.transpose() + sm.noise_covariance();
    (h * b.mean.0, (s + s.transpose()) * 0.5)
}

/// Inverse of a 2×2 SPD matrix, retrying once with diagonal jitter.
pub fn spd_inverse2(s: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if let Some(c) = s.cholesky() {
        return Ok(c.inverse());
    }
    let jittered = s + Matrix2::identity() * 1e-9;
    jittered
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(TrackError::DegenerateTrack)
}

/// Gaussian density `N(z; mean, S)` given `S⁻¹`.
pub fn gaussian2_pdf(
    z: &Vector2<f64>,
    mean: &Vector2<f64>,
    s: &Matrix2<f64>,
    s_inv: &Matrix2<f64>,
) -> f64 {
    let nu = z - mean;
    let d2 = (nu.transpose() * s_inv * nu)[0];
    (-0.5 * d2).exp() / (2.0 * std::f64::consts::PI * s.determinant().max(0.0).sqrt())
}

/// Standard Kalman measurement update with a position measurement.
pub fn kalman_update(
    b: &GaussianBelief,
    z: &Measurement,
    sm: &SensorModel,
) -> Result<GaussianBelief> {
    let h = SensorModel::observation();
    let (zhat, s) = innovation(b, sm);
    let s_inv = spd_inverse2(&s)?;
    let gain = b.covariance * h.transpose() * s_inv;
    let mean = b.mean.0 + gain * (z.0 - zhat);
    // Joseph form keeps the covariance PSD.
    let i_kh = Matrix4::identity() - gain * h;
    let cov = i_kh * b.covariance * i_kh.transpose()
        + gain * sm.noise_covariance() * gain.transpose();
    Ok(GaussianBelief::new(KinematicState(mean), symmetrize(&cov)))
}
