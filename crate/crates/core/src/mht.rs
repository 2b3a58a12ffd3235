//! Track-oriented MHT over a sliding window: one hypothesis tree per track,
//! exact global-hypothesis selection by branch and bound, and N-scan pruning.

use std::collections::HashMap;

use nalgebra::{Matrix4, Vector4};

use crate::association::mahalanobis2;
use crate::error::{invalid, Result};
use crate::models::{
    innovation, kalman_update, predict_moments, symmetrize, GaussianBelief, KinematicState,
    Measurement, MotionModel, Scan, SensorModel,
};
use crate::tracker::{Estimate, Tracker};

#[derive(Debug, Clone, PartialEq)]
pub struct MhtConfig {
    pub gate_gamma: f64,
    /// Window depth N of the N-scan decision.
    pub depth: usize,
    pub confirm_m: u32,
    pub confirm_n: u32,
    pub max_missed: u32,
    pub leaf_cap: usize,
    pub search_cap: usize,
    pub birth_vel_std: f64,
}

impl Default for MhtConfig {
    fn default() -> Self {
        Self {
            gate_gamma: 13.82,
            depth: 5,
            confirm_m: 12,
            confirm_n: 24,
            max_missed: 13,
            leaf_cap: 300,
            search_cap: 1_000_000,
            birth_vel_std: 10.0,
        }
    }
}

impl MhtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(invalid("mht_depth", "must be at least 1"));
        }
        if self.confirm_m == 0 || self.confirm_m > self.confirm_n || self.confirm_n > 32 {
            return Err(invalid("mht_confirm", "need 1 <= M <= N <= 32"));
        }
        if self.leaf_cap < 1 || self.search_cap < 1 {
            return Err(invalid("mht_leaf_cap", "caps must be positive"));
        }
        if !(self.gate_gamma > 0.0) || !(self.birth_vel_std > 0.0) {
            return Err(invalid("gate_gamma", "must be positive"));
        }
        Ok(())
    }
}

/// One node of a track tree: the association decision at `scan` and the
/// resulting belief.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackHypothesis {
    pub parent: Option<usize>,
    pub scan: u32,
    /// 0 for a missed detection, `m + 1` for measurement `m` of `scan`.
    pub meas: usize,
    pub score: f64,
    pub increment: f64,
    pub predicted: GaussianBelief,
    pub filtered: GaussianBelief,
    /// Bit `i` set when the node `i` scans back was a hit.
    pub hits: u32,
    pub missed_streak: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackTree {
    pub id: u64,
    pub root_scan: u32,
    pub nodes: Vec<TrackHypothesis>,
    pub leaves: Vec<usize>,
    pub confirmed: bool,
}

impl TrackTree {
    /// Single-node tree holding a known belief, with zero score.
    pub fn from_belief(id: u64, scan: u32, belief: GaussianBelief) -> Self {
        Self {
            id,
            root_scan: scan,
            nodes: vec![TrackHypothesis {
                parent: None,
                scan,
                meas: 0,
                score: 0.0,
                increment: 0.0,
                predicted: belief.clone(),
                filtered: belief,
                hits: 0,
                missed_streak: 0,
            }],
            leaves: vec![0],
            confirmed: false,
        }
    }

    pub fn leaf(&self, i: usize) -> &TrackHypothesis {
        &self.nodes[self.leaves[i]]
    }

    /// Node indices from `node` back to the root, newest first.
    pub fn chain(&self, node: usize) -> Vec<usize> {
        let mut out = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    fn claims(&self, node: usize) -> Vec<(u32, usize)> {
        self.chain(node)
            .into_iter()
            .map(|n| &self.nodes[n])
            .filter(|n| n.meas > 0)
            .map(|n| (n.scan, n.meas))
            .collect()
    }

    fn ancestor_at(&self, node: usize, scan: u32) -> Option<usize> {
        self.chain(node).into_iter().find(|&n| self.nodes[n].scan == scan)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HypothesisForest {
    pub trees: Vec<TrackTree>,
    pub next_id: u64,
    /// Most recent scan folded into the forest.
    pub k: u32,
}

/// Chosen leaf per tree (index into `leaves`), `None` when the track is
/// declared nonexistent.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalHypothesis {
    pub selection: Vec<Option<usize>>,
    pub score: f64,
    /// False when the search cap forced the greedy fallback.
    pub exact: bool,
}

fn log_gaussian2(d2: f64, s: &nalgebra::Matrix2<f64>) -> f64 {
    -0.5 * d2 - (2.0 * std::f64::consts::PI).ln() - 0.5 * s.determinant().ln()
}

/// Log-likelihood ratio of a hit against clutter.
pub fn hit_increment(pred: &GaussianBelief, z: &Measurement, sm: &SensorModel) -> Result<f64> {
    let (zhat, s) = innovation(pred, sm);
    let d2 = mahalanobis2(&zhat, &s, z)?;
    Ok(sm.p_d.ln() + log_gaussian2(d2, &s) - sm.clutter_intensity(z).ln())
}

/// Belief of a track born from a single measurement.
pub fn birth_belief(z: &Measurement, sm: &SensorModel, vel_std: f64) -> GaussianBelief {
    let pv = sm.sigma_v * sm.sigma_v;
    let vv = vel_std * vel_std;
    GaussianBelief::new(
        KinematicState::new(z.z1(), z.z2(), 0.0, 0.0),
        Matrix4::from_diagonal(&Vector4::new(pv, pv, vv, vv)),
    )
}

/// Grows every leaf by one scan and adds one birth tree per measurement.
pub fn extend_hypotheses(
    forest: &mut HypothesisForest,
    scan: &Scan,
    mm: &MotionModel,
    sm: &SensorModel,
    cfg: &MhtConfig,
) -> Result<()> {
    forest.k = scan.k;
    let miss_inc = (1.0 - sm.p_d).ln();
    for tree in &mut forest.trees {
        let mut children: Vec<TrackHypothesis> = Vec::new();
        for &leaf in &tree.leaves {
            let node = &tree.nodes[leaf];
            let pred = predict_moments(&node.filtered, mm);
            let (zhat, s) = innovation(&pred, sm);
            if sm.p_d < 1.0 {
                children.push(TrackHypothesis {
                    parent: Some(leaf),
                    scan: scan.k,
                    meas: 0,
                    score: node.score + miss_inc,
                    increment: miss_inc,
                    predicted: pred.clone(),
                    filtered: pred.clone(),
                    hits: node.hits << 1,
                    missed_streak: node.missed_streak + 1,
                });
            }
            for (m, z) in scan.measurements.iter().enumerate() {
                let d2 = mahalanobis2(&zhat, &s, z)?;
                if d2 > cfg.gate_gamma {
                    continue;
                }
                let inc = sm.p_d.ln() + log_gaussian2(d2, &s) - sm.clutter_intensity(z).ln();
                children.push(TrackHypothesis {
                    parent: Some(leaf),
                    scan: scan.k,
                    meas: m + 1,
                    score: node.score + inc,
                    increment: inc,
                    predicted: pred.clone(),
                    filtered: kalman_update(&pred, z, sm)?,
                    hits: (node.hits << 1) | 1,
                    missed_streak: 0,
                });
            }
        }
        if children.len() > cfg.leaf_cap {
            let mut order: Vec<usize> = (0..children.len()).collect();
            order.sort_by(|&a, &b| children[b].score.total_cmp(&children[a].score).then(a.cmp(&b)));
            let mut keep = vec![false; children.len()];
            order.iter().take(cfg.leaf_cap).for_each(|&i| keep[i] = true);
            children = children
                .into_iter()
                .zip(keep)
                .filter(|(_, k)| *k)
                .map(|(c, _)| c)
                .collect();
        }
        let start = tree.nodes.len();
        tree.leaves = (start..start + children.len()).collect();
        tree.nodes.extend(children);
    }
    forest.trees.retain(|t| !t.leaves.is_empty());

    for (m, z) in scan.measurements.iter().enumerate() {
        let xi = sm.new_target_weight(z);
        if !(xi > 0.0) {
            continue;
        }
        let belief = birth_belief(z, sm, cfg.birth_vel_std);
        let score = xi.ln();
        forest.trees.push(TrackTree {
            id: forest.next_id,
            root_scan: scan.k,
            nodes: vec![TrackHypothesis {
                parent: None,
                scan: scan.k,
                meas: m + 1,
                score,
                increment: score,
                predicted: belief.clone(),
                filtered: belief,
                hits: 1,
                missed_streak: 0,
            }],
            leaves: vec![0],
            confirmed: false,
        });
        forest.next_id += 1;
    }
    Ok(())
}

struct Candidate {
    leaf: usize,
    score: f64,
    /// Dense ids of the claimed `(scan, measurement)` pairs.
    claims: Vec<usize>,
}

struct Search<'a> {
    trees: &'a [usize],
    options: &'a [Vec<Candidate>],
    suffix: Vec<f64>,
    used: Vec<bool>,
    current: Vec<Option<usize>>,
    best: Vec<Option<usize>>,
    best_score: f64,
    visited: usize,
    cap: usize,
}

impl Search<'_> {
    fn run(&mut self, depth: usize, score: f64) -> bool {
        self.visited += 1;
        if self.visited > self.cap {
            return false;
        }
        if depth == self.trees.len() {
            if score > self.best_score {
                self.best_score = score;
                self.best = self.current.clone();
            }
            return true;
        }
        if score + self.suffix[depth] <= self.best_score {
            return true;
        }
        let t = self.trees[depth];
        for (i, c) in self.options[t].iter().enumerate() {
            // options are sorted by score, so the rest cannot do better
            if score + c.score + self.suffix[depth + 1] <= self.best_score {
                break;
            }
            if c.claims.iter().any(|&cl| self.used[cl]) {
                continue;
            }
            c.claims.iter().for_each(|&cl| self.used[cl] = true);
            self.current[depth] = Some(i);
            let ok = self.run(depth + 1, score + c.score);
            c.claims.iter().for_each(|&cl| self.used[cl] = false);
            if !ok {
                return false;
            }
        }
        self.current[depth] = None;
        self.run(depth + 1, score)
    }
}

/// Maximum-score compatible selection of at most one leaf per tree.
///
/// Leaves with nonpositive score can never beat declaring the track
/// nonexistent (score 0), so only positive leaves are searched. Trees are
/// clustered by shared measurement claims and each cluster is solved by
/// depth-first branch and bound; past `search_cap` nodes a cluster falls
/// back to greedy selection and the result is flagged inexact.
pub fn select_global_hypothesis(forest: &HypothesisForest, search_cap: usize) -> GlobalHypothesis {
    let n = forest.trees.len();
    let mut ids: HashMap<(u32, usize), usize> = HashMap::new();
    let mut owner: Vec<usize> = Vec::new();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut options: Vec<Vec<Candidate>> = Vec::with_capacity(n);
    for (t, tree) in forest.trees.iter().enumerate() {
        let mut opts = Vec::new();
        for (i, &node) in tree.leaves.iter().enumerate() {
            let score = tree.nodes[node].score;
            if score <= 0.0 {
                continue;
            }
            let mut claims = Vec::new();
            for cl in tree.claims(node) {
                let next = ids.len();
                let id = *ids.entry(cl).or_insert(next);
                if id == owner.len() {
                    owner.push(t);
                } else {
                    let (a, b) = (find(&mut parent, owner[id]), find(&mut parent, t));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                claims.push(id);
            }
            opts.push(Candidate { leaf: i, score, claims });
        }
        opts.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.leaf.cmp(&b.leaf)));
        options.push(opts);
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<usize, usize> = HashMap::new();
    for t in 0..n {
        if options[t].is_empty() {
            continue;
        }
        let r = find(&mut parent, t);
        let c = *index.entry(r).or_insert_with(|| {
            clusters.push(Vec::new());
            clusters.len() - 1
        });
        clusters[c].push(t);
    }

    let mut selection = vec![None; n];
    let mut total = 0.0;
    let mut exact = true;
    for members in &mut clusters {
        // strongest trees first tightens the bound early
        members.sort_by(|&a, &b| options[b][0].score.total_cmp(&options[a][0].score).then(a.cmp(&b)));
        let members: &[usize] = members;
        let mut suffix = vec![0.0; members.len() + 1];
        for d in (0..members.len()).rev() {
            suffix[d] = suffix[d + 1] + options[members[d]][0].score;
        }
        let (greedy_pick, greedy_score) = greedy(members, &options, ids.len());
        let mut search = Search {
            trees: members,
            options: &options,
            suffix,
            used: vec![false; ids.len()],
            current: vec![None; members.len()],
            best: greedy_pick.clone(),
            best_score: greedy_score,
            visited: 0,
            cap: search_cap,
        };
        let chosen = if search.run(0, 0.0) {
            total += search.best_score;
            search.best
        } else {
            exact = false;
            total += greedy_score;
            greedy_pick
        };
        for (d, &t) in members.iter().enumerate() {
            selection[t] = chosen[d].map(|i| options[t][i].leaf);
        }
    }
    GlobalHypothesis {
        selection,
        score: total,
        exact,
    }
}

fn greedy(members: &[usize], options: &[Vec<Candidate>], n_claims: usize) -> (Vec<Option<usize>>, f64) {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        let sa = options[members[a]].first().map_or(0.0, |c| c.score);
        let sb = options[members[b]].first().map_or(0.0, |c| c.score);
        sb.total_cmp(&sa).then(a.cmp(&b))
    });
    let mut used = vec![false; n_claims];
    let mut pick = vec![None; members.len()];
    let mut score = 0.0;
    for d in order {
        for (i, c) in options[members[d]].iter().enumerate() {
            if c.claims.iter().all(|&cl| !used[cl]) {
                c.claims.iter().for_each(|&cl| used[cl] = true);
                pick[d] = Some(i);
                score += c.score;
                break;
            }
        }
    }
    (pick, score)
}

/// N-scan pruning: commits the decision at scan `k - N + 1`.
///
/// Selected trees keep only leaves that agree with the selected leaf at the
/// committed scan, and the ancestor at that scan becomes the new root.
/// Unselected trees rooted at or before the committed scan are discarded.
pub fn n_scan_prune(forest: &mut HypothesisForest, gh: &GlobalHypothesis, depth: usize) {
    if (forest.k as usize) < depth {
        return;
    }
    let commit = forest.k + 1 - depth as u32;
    let trees = std::mem::take(&mut forest.trees);
    for (tree, sel) in trees.into_iter().zip(&gh.selection) {
        if tree.root_scan > commit {
            forest.trees.push(tree);
            continue;
        }
        let Some(leaf) = sel else { continue };
        forest.trees.push(prune_tree(tree, *leaf, commit));
    }
}

fn prune_tree(tree: TrackTree, selected_leaf: usize, commit: u32) -> TrackTree {
    let anchor = tree
        .ancestor_at(tree.leaves[selected_leaf], commit)
        .expect("selected leaf spans the committed scan");
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<TrackHypothesis> = Vec::new();
    let mut leaves = Vec::new();
    for &leaf in &tree.leaves {
        let chain = tree.chain(leaf);
        let Some(pos) = chain.iter().position(|&n| n == anchor) else {
            continue;
        };
        // Oldest first so parents are inserted before children.
        for &n in chain[..=pos].iter().rev() {
            if remap.contains_key(&n) {
                continue;
            }
            let mut node = tree.nodes[n].clone();
            node.parent = if n == anchor { None } else { node.parent.map(|p| remap[&p]) };
            remap.insert(n, nodes.len());
            nodes.push(node);
        }
        leaves.push(remap[&leaf]);
    }
    TrackTree {
        id: tree.id,
        root_scan: commit,
        nodes,
        leaves,
        confirmed: tree.confirmed,
    }
}

/// Rauch-Tung-Striebel smoothing along a branch given oldest first.
pub fn rts_smooth(branch: &[&TrackHypothesis], mm: &MotionModel) -> Vec<GaussianBelief> {
    let n = branch.len();
    let mut out: Vec<GaussianBelief> = branch.iter().map(|b| b.filtered.clone()).collect();
    for t in (0..n.saturating_sub(1)).rev() {
        let next_pred = &branch[t + 1].predicted;
        let Some(p_inv) = next_pred.covariance.try_inverse() else {
            continue;
        };
        let f = &branch[t].filtered;
        let c = f.covariance * mm.transition.transpose() * p_inv;
        let mean = f.mean.0 + c * (out[t + 1].mean.0 - next_pred.mean.0);
        let cov = f.covariance + c * (out[t + 1].covariance - next_pred.covariance) * c.transpose();
        out[t] = GaussianBelief::new(KinematicState(mean), symmetrize(&cov));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhtStepOutput {
    /// Filtered estimates of confirmed tracks at the current scan.
    pub estimates: Vec<Estimate>,
    /// Smoothed estimates at the scan committed by this step.
    pub finalized: Vec<Estimate>,
    pub global: GlobalHypothesis,
}

/// One MHT recursion: extend, select, confirm or terminate, emit, prune.
pub fn mht_step(
    forest: &mut HypothesisForest,
    scan: &Scan,
    mm: &MotionModel,
    sm: &SensorModel,
    cfg: &MhtConfig,
) -> Result<MhtStepOutput> {
    extend_hypotheses(forest, scan, mm, sm, cfg)?;
    let mut gh = select_global_hypothesis(forest, cfg.search_cap);

    let window_mask = if cfg.confirm_n >= 32 { u32::MAX } else { (1u32 << cfg.confirm_n) - 1 };
    let mut estimates = Vec::new();
    let mut terminated = vec![false; forest.trees.len()];
    for (t, tree) in forest.trees.iter_mut().enumerate() {
        let Some(leaf) = gh.selection[t] else { continue };
        let node = tree.leaf(leaf);
        let (streak, hits, state) = (node.missed_streak, node.hits, node.filtered.mean);
        if streak > cfg.max_missed {
            terminated[t] = true;
            continue;
        }
        if (hits & window_mask).count_ones() >= cfg.confirm_m {
            tree.confirmed = true;
        }
        if tree.confirmed {
            estimates.push(Estimate { id: tree.id, state });
        }
    }

    let mut finalized = Vec::new();
    if (forest.k as usize) >= cfg.depth {
        let commit = forest.k + 1 - cfg.depth as u32;
        for (t, tree) in forest.trees.iter().enumerate() {
            let Some(leaf) = gh.selection[t] else { continue };
            if !tree.confirmed || terminated[t] || tree.root_scan > commit {
                continue;
            }
            let mut chain = tree.chain(tree.leaves[leaf]);
            chain.reverse();
            let branch: Vec<&TrackHypothesis> = chain.iter().map(|&n| &tree.nodes[n]).collect();
            let smoothed = rts_smooth(&branch, mm);
            if let Some(pos) = branch.iter().position(|n| n.scan == commit) {
                finalized.push(Estimate {
                    id: tree.id,
                    state: smoothed[pos].mean,
                });
            }
        }
    }

    if terminated.iter().any(|&d| d) {
        let trees = std::mem::take(&mut forest.trees);
        let selection = std::mem::take(&mut gh.selection);
        for ((tree, sel), dead) in trees.into_iter().zip(selection).zip(&terminated) {
            if !dead {
                forest.trees.push(tree);
                gh.selection.push(sel);
            }
        }
    }
    n_scan_prune(forest, &gh, cfg.depth);
    Ok(MhtStepOutput {
        estimates,
        finalized,
        global: gh,
    })
}

/// Stateful MHT tracker reporting confirmed tracks of the selected global
/// hypothesis.
#[derive(Debug, Clone)]
pub struct MhtTracker {
    pub forest: HypothesisForest,
    motion: MotionModel,
    sensor: SensorModel,
    config: MhtConfig,
}

impl MhtTracker {
    pub fn new(motion: MotionModel, sensor: SensorModel, config: MhtConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            forest: HypothesisForest::default(),
            motion,
            sensor,
            config,
        })
    }
}

impl Tracker for MhtTracker {
    fn name(&self) -> &'static str {
        "mht"
    }

    fn step(&mut self, scan: &Scan) -> Result<Vec<Estimate>> {
        Ok(mht_step(&mut self.forest, scan, &self.motion, &self.sensor, &self.config)?.estimates)
    }
}
