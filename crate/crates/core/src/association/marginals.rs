use super::events::walk;
use super::{AssociationWeights, GateMatrix};
use crate::error::{Result, TrackError};

/// Marginal association probabilities.
///
/// `beta[j][0]` is the missed-detection probability of PT `j` and
/// `beta[j][m + 1]` the probability that PT `j` generated measurement `m`.
/// `kappa[m]` is the probability that measurement `m` was not generated by
/// any legacy PT.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationMarginals {
    pub beta: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// L∞ message change per iteration (empty for exact marginals).
    pub residuals: Vec<f64>,
}

impl AssociationMarginals {
    /// Probability mass of measurement `m` assigned to legacy PTs.
    pub fn claimed_mass(&self, m: usize) -> f64 {
        self.beta.iter().map(|row| row[m + 1]).sum()
    }
}

/// Settings of the iterative BP association scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Convex weight of the previous measurement-to-target message; 0 disables damping.
    pub damping: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            damping: 0.0,
        }
    }
}

/// Exact association marginals by enumerating all joint events of each
/// connected gate cluster.
///
/// An event `a` has weight `Π_j psi[j][a_j] · Π_{m unclaimed} (1 + ξ_m)`.
/// `cap` bounds the number of events enumerated per cluster.
pub fn exact_association_marginals(
    w: &AssociationWeights,
    gm: &GateMatrix,
    cap: usize,
) -> Result<AssociationMarginals> {
    let (n_t, n_m) = (w.targets(), w.measurements());
    let mut beta = vec![vec![0.0; n_m + 1]; n_t];
    let mut kappa = vec![1.0; n_m];

    for cluster in gm.clusters() {
        if cluster.measurements.is_empty() {
            for &j in &cluster.targets {
                beta[j][0] = 1.0;
            }
            continue;
        }
        // Claimed measurements carry 1/(1+ξ) relative to the all-unclaimed weight.
        let options: Vec<Vec<usize>> = cluster
            .targets
            .iter()
            .map(|&j| {
                std::iter::once(0)
                    .chain(gm.gated(j).map(|m| m + 1))
                    .filter(|&m| m == 0 || w.psi[j][m] > 0.0)
                    .collect()
            })
            .collect();
        let mut local_beta = vec![vec![0.0; n_m + 1]; cluster.targets.len()];
        let mut claimed = vec![0.0; n_m];
        let mut total = 0.0;
        let mut count = 0usize;
        let mut current = vec![0; cluster.targets.len()];
        let mut used = vec![false; n_m + 1];
        walk(&options, 0, &mut current, &mut used, &mut |a| {
            count += 1;
            if count > cap {
                return Err(TrackError::EventCapExceeded { cap });
            }
            let mut weight = 1.0;
            for (local, &m) in a.iter().enumerate() {
                let j = cluster.targets[local];
                weight *= w.psi[j][m];
                if m > 0 {
                    weight /= 1.0 + w.xi[m - 1];
                }
            }
            total += weight;
            for (local, &m) in a.iter().enumerate() {
                local_beta[local][m] += weight;
                if m > 0 {
                    claimed[m - 1] += weight;
                }
            }
            Ok(())
        })?;
        for (local, &j) in cluster.targets.iter().enumerate() {
            if total > 0.0 {
                for (b, l) in beta[j].iter_mut().zip(&local_beta[local]) {
                    *b = l / total;
                }
            } else {
                beta[j][0] = 1.0;
            }
        }
        for &m in &cluster.measurements {
            kappa[m] = if total > 0.0 { 1.0 - claimed[m] / total } else { 1.0 };
        }
    }
    Ok(AssociationMarginals {
        beta,
        kappa,
        converged: true,
        iterations: 0,
        residuals: Vec::new(),
    })
}

/// Loopy BP on the bipartite association graph.
///
/// Target-to-measurement messages
/// `μ_{j→m} = psi[j][m] / (psi[j][0] + Σ_{m'≠m} psi[j][m']·ν_{m'→j})` and
/// measurement-to-target messages
/// `ν_{m→j} = 1 / (1 + ξ_m + Σ_{j'≠j} μ_{j'→m})` are iterated over gated
/// edges until the largest change of `ν` drops below `tol`.
pub fn bp_association_marginals(
    w: &AssociationWeights,
    gm: &GateMatrix,
    opts: &BpOptions,
) -> AssociationMarginals {
    let (n_t, n_m) = (w.targets(), w.measurements());
    let edges: Vec<Vec<usize>> = (0..n_t)
        .map(|j| gm.gated(j).filter(|&m| w.psi[j][m + 1] > 0.0).collect())
        .collect();
    let mut nu: Vec<Vec<f64>> = edges.iter().map(|e| vec![1.0; e.len()]).collect();
    let mut mu: Vec<Vec<f64>> = edges.iter().map(|e| vec![0.0; e.len()]).collect();
    let mut mu_sum = vec![0.0; n_m];
    let mut mu_inf = vec![0usize; n_m];
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let has_edges = edges.iter().any(|e| !e.is_empty());
    let max_iter = if has_edges { opts.max_iter.max(1) } else { 0 };
    for _ in 0..max_iter {
        iterations += 1;
        mu_sum.iter_mut().for_each(|s| *s = 0.0);
        mu_inf.iter_mut().for_each(|c| *c = 0);
        for j in 0..n_t {
            let row = &w.psi[j];
            let total: f64 = row[0]
                + edges[j]
                    .iter()
                    .zip(&nu[j])
                    .map(|(&m, &n)| row[m + 1] * n)
                    .sum::<f64>();
            for (e, &m) in edges[j].iter().enumerate() {
                let denom = total - row[m + 1] * nu[j][e];
                if denom > 0.0 {
                    mu[j][e] = row[m + 1] / denom;
                    mu_sum[m] += mu[j][e];
                } else {
                    mu[j][e] = f64::INFINITY;
                    mu_inf[m] += 1;
                }
            }
        }
        let mut change: f64 = 0.0;
        for j in 0..n_t {
            for (e, &m) in edges[j].iter().enumerate() {
                let own_inf = usize::from(mu[j][e].is_infinite());
                let others = if mu_inf[m] > own_inf {
                    f64::INFINITY
                } else if own_inf == 1 {
                    mu_sum[m]
                } else {
                    mu_sum[m] - mu[j][e]
                };
                let fresh = 1.0 / (1.0 + w.xi[m] + others);
                let updated = (1.0 - opts.damping) * fresh + opts.damping * nu[j][e];
                change = change.max((updated - nu[j][e]).abs());
                nu[j][e] = updated;
            }
        }
        residuals.push(change);
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !has_edges {
        converged = true;
    }

    let mut beta = vec![vec![0.0; n_m + 1]; n_t];
    for j in 0..n_t {
        let row = &w.psi[j];
        beta[j][0] = row[0];
        for (e, &m) in edges[j].iter().enumerate() {
            beta[j][m + 1] = row[m + 1] * nu[j][e];
        }
        let total: f64 = beta[j].iter().sum();
        if total > 0.0 && total.is_finite() {
            beta[j].iter_mut().for_each(|b| *b /= total);
        } else {
            beta[j].iter_mut().for_each(|b| *b = 0.0);
            beta[j][0] = 1.0;
        }
    }
    // Final target-to-measurement messages for κ.
    let mut mu_final = vec![0.0; n_m];
    for j in 0..n_t {
        let row = &w.psi[j];
        let total: f64 = row[0]
            + edges[j]
                .iter()
                .zip(&nu[j])
                .map(|(&m, &n)| row[m + 1] * n)
                .sum::<f64>();
        for (e, &m) in edges[j].iter().enumerate() {
            let denom = total - row[m + 1] * nu[j][e];
            mu_final[m] += if denom > 0.0 {
                row[m + 1] / denom
            } else {
                f64::INFINITY
            };
        }
    }
    let kappa = (0..n_m)
        .map(|m| {
            let keep = 1.0 + w.xi[m];
            if mu_final[m].is_infinite() {
                0.0
            } else {
                keep / (keep + mu_final[m])
            }
        })
        .collect();
    AssociationMarginals {
        beta,
        kappa,
        converged,
        iterations,
        residuals,
    }
}
