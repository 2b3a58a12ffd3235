//! GOSPA with its decomposition, and the D-Center / D-Tracks spacing metrics.

use nalgebra::Vector2;

use crate::association::{best_assignment, CostMatrix};

/// GOSPA value and its components.
///
/// Components are contributions to the `p`-th power of the metric, so they
/// sum to `total^p`; for `p = 1` they are in metres and sum to `total`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GospaResult {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GospaParams {
    pub p: f64,
    pub c: f64,
}

impl Default for GospaParams {
    fn default() -> Self {
        Self { p: 1.0, c: 50.0 }
    }
}

/// GOSPA with `α = 2` between a truth set and an estimate set.
pub fn gospa(truth: &[Vector2<f64>], est: &[Vector2<f64>], params: GospaParams) -> GospaResult {
    let GospaParams { p, c } = params;
    let half = c.powf(p) / 2.0;
    let (localization, n_missed, n_false) = if truth.is_empty() || est.is_empty() {
        (0.0, truth.len(), est.len())
    } else {
        let cost: Vec<Vec<f64>> = truth
            .iter()
            .map(|x| {
                est.iter()
                    .map(|y| {
                        let d = (x - y).norm();
                        if d < c {
                            d.powf(p)
                        } else {
                            f64::INFINITY
                        }
                    })
                    .collect()
            })
            .collect();
        let problem = CostMatrix::new(&cost)
            .with_unassigned_costs(vec![half; truth.len()], vec![half; est.len()]);
        let a = best_assignment(&problem);
        let assigned: Vec<usize> = a.rows.iter().flatten().copied().collect();
        let loc: f64 = a
            .rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|j| cost[i][j]))
            .sum();
        (
            loc,
            truth.len() - assigned.len(),
            est.len() - assigned.len(),
        )
    };
    let missed = half * n_missed as f64;
    let false_ = half * n_false as f64;
    GospaResult {
        total: (localization + missed + false_).powf(1.0 / p),
        localization,
        missed,
        false_,
    }
}

/// Global-nearest-neighbour choice of the estimates closest to two truths.
///
/// Returns indices into `est`, ordered like `truth`. With fewer than two
/// estimates all of them are returned. Ties go to the lexicographically
/// smallest index pair.
pub fn gnn_select_two(est: &[Vector2<f64>], truth: &[Vector2<f64>; 2]) -> Vec<usize> {
    if est.len() < 2 {
        return (0..est.len()).collect();
    }
    let mut best = (f64::INFINITY, 0, 1);
    for a in 0..est.len() {
        for b in 0..est.len() {
            if a == b {
                continue;
            }
            let cost = (est[a] - truth[0]).norm() + (est[b] - truth[1]).norm();
            if cost < best.0 {
                best = (cost, a, b);
            }
        }
    }
    vec![best.1, best.2]
}

/// `(|y1| + |y2|) / 2`.
pub fn d_center(y1: f64, y2: f64) -> f64 {
    (y1.abs() + y2.abs()) / 2.0
}

/// `|y1 - y2|`.
pub fn d_tracks(y1: f64, y2: f64) -> f64 {
    (y1 - y2).abs()
}

/// Spacing metrics at scan `k`, absent when fewer than two estimates exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackDistanceSample {
    pub k: u32,
    pub d_center: Option<f64>,
    pub d_tracks: Option<f64>,
}

impl TrackDistanceSample {
    pub fn from_estimates(k: u32, est: &[Vector2<f64>], truth: &[Vector2<f64>; 2]) -> Self {
        let pick = gnn_select_two(est, truth);
        if pick.len() < 2 {
            return Self {
                k,
                d_center: None,
                d_tracks: None,
            };
        }
        let (y1, y2) = (est[pick[0]].y, est[pick[1]].y);
        Self {
            k,
            d_center: Some(d_center(y1, y2)),
            d_tracks: Some(d_tracks(y1, y2)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    /// Minimum over all partial matchings by recursion.
    fn brute_force(truth: &[Vector2<f64>], est: &[Vector2<f64>], c: f64) -> f64 {
        fn rec(i: usize, truth: &[Vector2<f64>], est: &[Vector2<f64>], used: &mut Vec<bool>, c: f64) -> f64 {
            if i == truth.len() {
                let free = used.iter().filter(|u| !**u).count();
                return free as f64 * c / 2.0;
            }
            let mut best = c / 2.0 + rec(i + 1, truth, est, used, c);
            for j in 0..est.len() {
                let d = (truth[i] - est[j]).norm();
                if !used[j] && d < c {
                    used[j] = true;
                    best = best.min(d + rec(i + 1, truth, est, used, c));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, truth, est, &mut vec![false; est.len()], c)
    }

    #[test]
    fn gospa_examples() {
        let g = GospaParams::default();
        assert_eq!(gospa(&[v(1.0, 2.0)], &[v(1.0, 2.0)], g).total, 0.0);
        let r = gospa(&[v(1.0, 2.0)], &[], g);
        assert_eq!((r.missed, r.total), (25.0, 25.0));
        let r = gospa(&[v(0.0, 0.0), v(200.0, 0.0)], &[v(3.0, 0.0), v(200.0, 4.0)], g);
        assert_relative_eq!(r.localization, 7.0, epsilon = 1e-12);
        assert_relative_eq!(r.total, 7.0, epsilon = 1e-12);
    }

    #[test]
    fn far_point_costs_half_c() {
        let g = GospaParams::default();
        let truth = [v(0.0, 0.0), v(30.0, 10.0)];
        let base = gospa(&truth, &[v(1.0, 1.0), v(29.0, 12.0)], g);
        let more = gospa(&truth, &[v(1.0, 1.0), v(29.0, 12.0), v(500.0, 500.0)], g);
        assert_relative_eq!(more.total - base.total, 25.0, epsilon = 1e-12);
        // d >= c is cheaper unassigned
        let r = gospa(&[v(0.0, 0.0)], &[v(60.0, 0.0)], g);
        assert_eq!((r.localization, r.missed, r.false_), (0.0, 25.0, 25.0));
    }

    fn point_set() -> impl Strategy<Value = Vec<Vector2<f64>>> {
        prop::collection::vec((-60.0f64..60.0, -60.0f64..60.0), 0..=5)
            .prop_map(|v| v.into_iter().map(|(x, y)| Vector2::new(x, y)).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn gospa_metric_properties(a in point_set(), b in point_set()) {
            let g = GospaParams::default();
            let ab = gospa(&a, &b, g);
            let ba = gospa(&b, &a, g);
            prop_assert!((ab.total - brute_force(&a, &b, 50.0)).abs() < 1e-9);
            prop_assert!((ab.total - ba.total).abs() < 1e-9);
            prop_assert!((ab.total - (ab.localization + ab.missed + ab.false_)).abs() < 1e-9);
            prop_assert!(gospa(&a, &a, g).total.abs() < 1e-12);
            prop_assert!(ab.total >= 0.0);
        }
    }

    #[test]
    fn gnn_examples() {
        let truth = [v(0.0, 5.0), v(0.0, -5.0)];
        assert_eq!(gnn_select_two(&[v(0.0, -5.0), v(0.0, 5.0)], &truth), vec![1, 0]);
        assert_eq!(gnn_select_two(&[v(0.0, 4.0), v(300.0, 0.0), v(0.0, -6.0)], &truth), vec![0, 2]);
        // both estimates on the centre line: either pairing costs the same
        assert_eq!(gnn_select_two(&[v(0.0, 0.0), v(0.0, 0.0)], &truth), vec![0, 1]);
        assert_eq!(gnn_select_two(&[v(1.0, 1.0)], &truth), vec![0]);
        assert!(gnn_select_two(&[], &truth).is_empty());
    }

    #[test]
    fn spacing_examples() {
        assert_eq!(d_center(7.0, -7.0), 7.0);
        assert_eq!(d_center(5.0, -5.0), 5.0);
        assert_eq!(d_center(0.0, 0.0), 0.0);
        assert_eq!(d_tracks(5.0, -5.0), 10.0);
        assert_eq!(d_tracks(3.0, 3.0), 0.0);
        assert_eq!(d_tracks(8.0, -8.0), 16.0);
        let truth = [v(0.0, 5.0), v(0.0, -5.0)];
        let s = TrackDistanceSample::from_estimates(3, &[v(0.0, 1.0)], &truth);
        assert_eq!((s.d_center, s.d_tracks), (None, None));
        let s = TrackDistanceSample::from_estimates(3, &[v(0.0, 8.0), v(0.0, -6.0)], &truth);
        assert_eq!((s.d_center, s.d_tracks), (Some(7.0), Some(14.0)));
    }
}
