//! Optimal 2-D assignment with optional "unassigned" costs and Murty's
//! m-best enumeration.
//!
//! Rows may stay unassigned at `row_unassigned[i]`, columns at
//! `col_unassigned[j]`. Forbidden pairs carry `f64::INFINITY`. The problem
//! is solved on the usual `(rows + cols)`-square augmentation with a
//! shortest-augmenting-path Hungarian kernel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Rectangular assignment problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    cost: Vec<f64>,
    row_unassigned: Vec<f64>,
    col_unassigned: Vec<f64>,
}

impl CostMatrix {
    /// Every row must be assigned (unassigned cost `+∞`), columns may stay
    /// free at zero cost.
    pub fn new(cost: &[Vec<f64>]) -> Self {
        let rows = cost.len();
        let cols = cost.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows * cols);
        for r in cost {
            assert_eq!(r.len(), cols, "ragged cost matrix");
            flat.extend_from_slice(r);
        }
        Self {
            rows,
            cols,
            cost: flat,
            row_unassigned: vec![f64::INFINITY; rows],
            col_unassigned: vec![0.0; cols],
        }
    }

    pub fn with_unassigned_costs(mut self, rows: Vec<f64>, cols: Vec<f64>) -> Self {
        assert_eq!(rows.len(), self.rows);
        assert_eq!(cols.len(), self.cols);
        self.row_unassigned = rows;
        self.col_unassigned = cols;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cost[i * self.cols + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.cost[i * self.cols + j] = v;
    }

    pub fn row_unassigned(&self, i: usize) -> f64 {
        self.row_unassigned[i]
    }

    pub fn col_unassigned(&self, j: usize) -> f64 {
        self.col_unassigned[j]
    }

    /// Total cost of a row → column-or-unassigned map.
    pub fn evaluate(&self, rows: &[Option<usize>]) -> f64 {
        let mut used = vec![false; self.cols];
        let mut total = 0.0;
        for (i, r) in rows.iter().enumerate() {
            match *r {
                Some(j) => {
                    used[j] = true;
                    total += self.get(i, j);
                }
                None => total += self.row_unassigned[i],
            }
        }
        total
            + used
                .iter()
                .enumerate()
                .filter(|(_, &u)| !u)
                .map(|(j, _)| self.col_unassigned[j])
                .sum::<f64>()
    }
}

/// Solution of an assignment problem. `rows[i]` is the column of row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub rows: Vec<Option<usize>>,
    pub cost: f64,
    /// `false` when no assignment of finite cost exists; forbidden pairs are
    /// then reported as unassigned and `cost` is `+∞`.
    pub feasible: bool,
}

/// Minimum-cost assignment of rows to columns or "unassigned".
pub fn best_assignment(cost: &CostMatrix) -> Assignment {
    let (r, c) = (cost.rows, cost.cols);
    if r == 0 {
        let rows = Vec::new();
        let total = cost.evaluate(&rows);
        return Assignment {
            rows,
            feasible: total.is_finite(),
            cost: total,
        };
    }
    let n = r + c;
    let finite_max = cost
        .cost
        .iter()
        .chain(&cost.row_unassigned)
        .chain(&cost.col_unassigned)
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    // Any solution using a forbidden entry costs more than every feasible one.
    let big = (finite_max + 1.0) * (n as f64 + 1.0) * 4.0;
    let clamp = |v: f64| if v.is_finite() { v } else { big };

    let mut square = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            square[i * n + j] = match (i < r, j < c) {
                (true, true) => clamp(cost.get(i, j)),
                (true, false) => {
                    if j - c == i {
                        clamp(cost.row_unassigned[i])
                    } else {
                        big
                    }
                }
                (false, true) => {
                    if i - r == j {
                        clamp(cost.col_unassigned[j])
                    } else {
                        big
                    }
                }
                (false, false) => 0.0,
            };
        }
    }
    let row_to_col = hungarian(&square, n);

    let mut rows = vec![None; r];
    let mut feasible = true;
    for (i, slot) in rows.iter_mut().enumerate() {
        let j = row_to_col[i];
        if j < c {
            if cost.get(i, j).is_finite() {
                *slot = Some(j);
            } else {
                feasible = false;
            }
        } else if !cost.row_unassigned[i].is_finite() {
            feasible = false;
        }
    }
    let total = cost.evaluate(&rows);
    feasible &= total.is_finite();
    Assignment {
        rows,
        cost: if feasible { total } else { f64::INFINITY },
        feasible,
    }
}

/// Shortest augmenting path Hungarian algorithm on an `n × n` matrix.
/// Returns the column assigned to each row.
fn hungarian(a: &[f64], n: usize) -> Vec<usize> {
    // One-based potentials as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    Col(usize),
    Unassigned,
}

impl From<Option<usize>> for Choice {
    fn from(o: Option<usize>) -> Self {
        o.map_or(Choice::Unassigned, Choice::Col)
    }
}

#[derive(Debug, Clone)]
struct Node {
    forced: Vec<Option<Choice>>,
    forbidden: Vec<Vec<Choice>>,
    solution: Assignment,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Min-heap on (cost, creation order).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .solution
            .cost
            .total_cmp(&self.solution.cost)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn constrained(base: &CostMatrix, forced: &[Option<Choice>], forbidden: &[Vec<Choice>]) -> CostMatrix {
    let mut c = base.clone();
    for (i, bans) in forbidden.iter().enumerate() {
        for b in bans {
            match *b {
                Choice::Col(j) => c.set(i, j, f64::INFINITY),
                Choice::Unassigned => c.row_unassigned[i] = f64::INFINITY,
            }
        }
    }
    for (i, f) in forced.iter().enumerate() {
        match *f {
            Some(Choice::Col(j)) => {
                for jj in 0..c.cols {
                    if jj != j {
                        c.set(i, jj, f64::INFINITY);
                    }
                }
                for ii in 0..c.rows {
                    if ii != i {
                        c.set(ii, j, f64::INFINITY);
                    }
                }
                c.row_unassigned[i] = f64::INFINITY;
                c.col_unassigned[j] = f64::INFINITY;
            }
            Some(Choice::Unassigned) => {
                for jj in 0..c.cols {
                    c.set(i, jj, f64::INFINITY);
                }
            }
            None => {}
        }
    }
    c
}

/// The `m` lowest-cost distinct assignments in nondecreasing cost order
/// (Murty's partitioning over row choices). Returns fewer when fewer
/// feasible assignments exist.
pub fn m_best_assignments(cost: &CostMatrix, m: usize) -> Vec<Assignment> {
    let mut out = Vec::new();
    if m == 0 {
        return out;
    }
    let first = best_assignment(cost);
    if !first.feasible {
        return out;
    }
    let r = cost.rows;
    let mut seq = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        forced: vec![None; r],
        forbidden: vec![Vec::new(); r],
        solution: first,
        seq,
    });
    while let Some(node) = heap.pop() {
        let choices: Vec<Choice> = node.solution.rows.iter().map(|&o| o.into()).collect();
        let mut forced = node.forced.clone();
        for i in 0..r {
            if node.forced[i].is_some() {
                continue;
            }
            let mut forbidden = node.forbidden.clone();
            forbidden[i].push(choices[i]);
            let sub = best_assignment(&constrained(cost, &forced, &forbidden));
            if sub.feasible {
                seq += 1;
                heap.push(Node {
                    forced: forced.clone(),
                    forbidden,
                    solution: sub,
                    seq,
                });
            }
            forced[i] = Some(choices[i]);
        }
        out.push(node.solution);
        if out.len() == m {
            break;
        }
    }
    out
}
