//! Data-association machinery shared by the trackers: gating, joint-event
//! enumeration, optimal and m-best assignment, exact enumeration marginals
//! and the iterative BP association scheme.

mod assignment;
mod events;
mod marginals;

pub use assignment::{best_assignment, m_best_assignments, Assignment, CostMatrix};
pub use events::{enumerate_joint_events, DEFAULT_EVENT_CAP};
pub use marginals::{
    bp_association_marginals, exact_association_marginals, AssociationMarginals, BpOptions,
};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Result, TrackError};
use crate::models::Measurement;

/// Gate membership of legacy PT `j` (rows) and measurement `m` (columns,
/// zero-based list index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateMatrix {
    rows: usize,
    cols: usize,
    inside: Vec<bool>,
}

impl GateMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            inside: vec![false; rows * cols],
        }
    }

    /// Every pair inside the gate.
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            inside: vec![true; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut gm = Self::new(rows.len(), cols);
        for (j, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged gate matrix");
            for (m, &g) in row.iter().enumerate() {
                gm.set(j, m, g);
            }
        }
        gm
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, j: usize, m: usize) -> bool {
        self.inside[j * self.cols + m]
    }

    pub fn set(&mut self, j: usize, m: usize, value: bool) {
        self.inside[j * self.cols + m] = value;
    }

    /// Gated measurement indices of PT `j`.
    pub fn gated(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.cols).filter(move |&m| self.get(j, m))
    }

    /// Whether measurement `m` lies in the gate of any PT.
    pub fn measurement_gated(&self, m: usize) -> bool {
        (0..self.rows).any(|j| self.get(j, m))
    }

    /// Connected components of the bipartite gate graph. Every PT appears in
    /// exactly one cluster; measurements gated by no PT are omitted.
    pub fn clusters(&self) -> Vec<Cluster> {
        let n = self.rows + self.cols;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for j in 0..self.rows {
            for m in self.gated(j) {
                let (a, b) = (find(&mut parent, j), find(&mut parent, self.rows + m));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut roots: Vec<usize> = Vec::new();
        let mut clusters: Vec<Cluster> = Vec::new();
        for j in 0..self.rows {
            let r = find(&mut parent, j);
            let idx = match roots.iter().position(|&x| x == r) {
                Some(i) => i,
                None => {
                    roots.push(r);
                    clusters.push(Cluster::default());
                    roots.len() - 1
                }
            };
            clusters[idx].targets.push(j);
        }
        for m in 0..self.cols {
            if !self.measurement_gated(m) {
                continue;
            }
            let r = find(&mut parent, self.rows + m);
            if let Some(i) = roots.iter().position(|&x| x == r) {
                clusters[i].measurements.push(m);
            }
        }
        clusters
    }

    /// True when the gated bipartite graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let edges: usize = (0..self.rows).map(|j| self.gated(j).count()).sum();
        let clusters = self.clusters();
        let nodes: usize = clusters
            .iter()
            .map(|c| c.targets.len() + c.measurements.len())
            .sum();
        edges + clusters.len() == nodes
    }
}

/// One connected component of the gate graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cluster {
    pub targets: Vec<usize>,
    pub measurements: Vec<usize>,
}

/// Single-target association weights in likelihood-ratio form.
///
/// `psi[j][0]` is the missed-detection weight of PT `j` and `psi[j][m + 1]`
/// the weight of measurement `m`. `xi[m]` is the new-target weight of
/// measurement `m`; the clutter weight is implicitly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationWeights {
    pub psi: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
}

impl AssociationWeights {
    pub fn new(psi: Vec<Vec<f64>>, xi: Vec<f64>) -> Self {
        debug_assert!(psi.iter().all(|r| r.len() == xi.len() + 1));
        Self { psi, xi }
    }

    pub fn targets(&self) -> usize {
        self.psi.len()
    }

    pub fn measurements(&self) -> usize {
        self.xi.len()
    }
}

/// Chi-square gate on the Mahalanobis distance of the innovation.
pub fn gate(
    pred_meas_mean: &Vector2<f64>,
    innov_cov: &Matrix2<f64>,
    z: &Measurement,
    gamma: f64,
) -> Result<bool> {
    Ok(mahalanobis2(pred_meas_mean, innov_cov, z)? <= gamma)
}

/// Squared Mahalanobis distance `νᵀ S⁻¹ ν`.
pub fn mahalanobis2(
    pred_meas_mean: &Vector2<f64>,
    innov_cov: &Matrix2<f64>,
    z: &Measurement,
) -> Result<f64> {
    let chol = innov_cov.cholesky().ok_or(TrackError::DegenerateTrack)?;
    let nu = z.0 - pred_meas_mean;
    let w = chol.solve(&nu);
    Ok(nu.dot(&w))
}

/// Inverse CDF of the chi-square distribution with two degrees of freedom,
/// `-2 ln(1 - p)`.
pub fn chi2_gate_threshold(prob: f64) -> f64 {
    -2.0 * (-prob).ln_1p()
}
