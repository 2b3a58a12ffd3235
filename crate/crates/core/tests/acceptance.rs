//! Acceptance checks. Prints one `criterion N: PASS|FAIL` line each.
//!
//! Failing criteria are reported, not turned into a test failure; set
//! `ACCEPTANCE_STRICT=1` to exit nonzero when any criterion fails.

use std::time::Instant;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use track_bench::association::{
    bp_association_marginals, exact_association_marginals, AssociationWeights, BpOptions, GateMatrix,
    DEFAULT_EVENT_CAP,
};
use track_bench::harness::{
    run_monte_carlo, write_outputs, Execution, MetricSeries, MonteCarloResult, RunConfig, TrackerKind,
};
use track_bench::jpda::two_point_init;
use track_bench::metrics::{gospa, GospaParams};
use track_bench::mht::{extend_hypotheses, select_global_hypothesis, HypothesisForest, MhtConfig, TrackTree};
use track_bench::models::{
    build_motion_model, sample_transition, GaussianBelief, KinematicState, Measurement, MotionModel, Roi, Scan,
    SensorModel,
};
use track_bench::tracker::Tracker;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------- criterion 1

fn random_instance(rng: &mut ChaCha8Rng) -> (AssociationWeights, GateMatrix) {
    let nt = rng.gen_range(1..=3);
    let nm = rng.gen_range(1..=4);
    let gm = GateMatrix::from_rows(
        &(0..nt)
            .map(|_| (0..nm).map(|_| rng.gen_bool(0.6)).collect())
            .collect::<Vec<_>>(),
    );
    let psi = (0..nt)
        .map(|j| {
            std::iter::once(rng.gen_range(0.05..1.0))
                .chain((0..nm).map(|m| if gm.get(j, m) { rng.gen_range(0.0..50.0) } else { 0.0 }))
                .collect()
        })
        .collect();
    let xi = (0..nm).map(|_| rng.gen_range(0.0..0.5)).collect();
    (AssociationWeights::new(psi, xi), gm)
}

/// Marginals by enumerating every joint event directly.
fn brute_marginals(w: &AssociationWeights, gm: &GateMatrix) -> Vec<Vec<f64>> {
    let (nt, nm) = (w.targets(), w.measurements());
    let mut beta = vec![vec![0.0; nm + 1]; nt];
    let mut total = 0.0;
    let mut a = vec![0usize; nt];
    fn rec(
        j: usize,
        a: &mut Vec<usize>,
        w: &AssociationWeights,
        gm: &GateMatrix,
        beta: &mut [Vec<f64>],
        total: &mut f64,
    ) {
        let (nt, nm) = (w.targets(), w.measurements());
        if j == nt {
            let mut weight: f64 = (0..nt).map(|t| w.psi[t][a[t]]).product();
            for m in 0..nm {
                if !a.contains(&(m + 1)) {
                    weight *= 1.0 + w.xi[m];
                }
            }
            *total += weight;
            for t in 0..nt {
                beta[t][a[t]] += weight;
            }
            return;
        }
        for choice in 0..=nm {
            if choice > 0 && (!gm.get(j, choice - 1) || a[..j].contains(&choice)) {
                continue;
            }
            a[j] = choice;
            rec(j + 1, a, w, gm, beta, total);
        }
        a[j] = 0;
    }
    rec(0, &mut a, w, gm, &mut beta, &mut total);
    for row in &mut beta {
        row.iter_mut().for_each(|b| *b /= total);
    }
    beta
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut exact_err, mut forest_err, mut tv_worst) = (0.0f64, 0.0f64, 0.0f64);
    let (mut loopy_rows, mut loopy_over, mut forests) = (0, 0, 0);
    for _ in 0..200 {
        let (w, gm) = random_instance(&mut rng);
        let oracle = brute_marginals(&w, &gm);
        let exact = exact_association_marginals(&w, &gm, DEFAULT_EVENT_CAP).expect("exact marginals");
        let bp = bp_association_marginals(&w, &gm, &BpOptions::default());
        let forest = gm.is_forest();
        forests += usize::from(forest);
        for (j, row) in oracle.iter().enumerate() {
            let mut tv = 0.0;
            for (m, &p) in row.iter().enumerate() {
                exact_err = exact_err.max((exact.beta[j][m] - p).abs());
                tv += (bp.beta[j][m] - p).abs();
                if forest {
                    forest_err = forest_err.max((bp.beta[j][m] - p).abs());
                }
            }
            if !forest {
                let tv = tv / 2.0;
                loopy_rows += 1;
                loopy_over += usize::from(tv > 0.1);
                tv_worst = tv_worst.max(tv);
            }
        }
    }
    outcome(
        exact_err <= 1e-10 && forest_err <= 1e-10 && loopy_over == 0,
        format!(
            "exact max err {exact_err:.1e}; BP on {forests} forests max err {forest_err:.1e}; \
             loopy rows with TV > 0.1: {loopy_over}/{loopy_rows} (worst {tv_worst:.3})"
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Best compatible choice of leaf-or-nothing per tree, by full enumeration.
fn brute_force_selection(forest: &HypothesisForest) -> f64 {
    fn claims(tree: &TrackTree, node: usize) -> Vec<(u32, usize)> {
        tree.chain(node)
            .into_iter()
            .map(|n| &tree.nodes[n])
            .filter(|n| n.meas > 0)
            .map(|n| (n.scan, n.meas))
            .collect()
    }
    fn rec(f: &HypothesisForest, t: usize, used: &mut Vec<(u32, usize)>) -> f64 {
        if t == f.trees.len() {
            return 0.0;
        }
        let mut best = rec(f, t + 1, used);
        let tree = &f.trees[t];
        for &leaf in &tree.leaves {
            let c = claims(tree, leaf);
            if c.iter().any(|x| used.contains(x)) {
                continue;
            }
            let n = used.len();
            used.extend(c);
            best = best.max(tree.nodes[leaf].score + rec(f, t + 1, used));
            used.truncate(n);
        }
        best
    }
    rec(forest, 0, &mut Vec::new())
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mm = build_motion_model(1.0, 0.1, 0.995).expect("motion model");
    let sm = SensorModel::new(0.9, 10.0, 5.0, Roi::new(-100.0, 100.0, -100.0, 100.0), 0.0).expect("sensor");
    let cfg = MhtConfig::default();
    let mut worst = 0.0f64;
    let mut nontrivial = 0;
    for _ in 0..50 {
        let n_tracks = rng.gen_range(1..=2);
        let mut forest = HypothesisForest::default();
        for id in 0..n_tracks {
            let cov = Matrix4::from_diagonal(&Vector4::new(100.0, 100.0, 25.0, 25.0));
            let mean = KinematicState::new(15.0 * id as f64, rng.gen_range(-5.0..5.0), 0.0, 0.0);
            forest.trees.push(TrackTree::from_belief(id as u64, 0, GaussianBelief::new(mean, cov)));
        }
        forest.next_id = n_tracks as u64;
        for k in 1..=3u32 {
            let n = rng.gen_range(0..=3);
            let meas = (0..n)
                .map(|_| Measurement::new(rng.gen_range(-30.0..45.0), rng.gen_range(-30.0..30.0)))
                .collect();
            extend_hypotheses(&mut forest, &Scan::new(k, meas), &mm, &sm, &cfg).expect("extend");
        }
        let gh = select_global_hypothesis(&forest, cfg.search_cap);
        let oracle = brute_force_selection(&forest);
        nontrivial += usize::from(oracle > 0.0);
        worst = worst.max((gh.score - oracle).abs());
    }
    outcome(
        worst <= 1e-9,
        format!("max |score - exhaustive| {worst:.1e} over 50 windows ({nontrivial} with positive optimum)"),
    )
}

// ---------------------------------------------------------------- criterion 3

fn brute_gospa(truth: &[Vector2<f64>], est: &[Vector2<f64>], c: f64) -> f64 {
    fn rec(i: usize, truth: &[Vector2<f64>], est: &[Vector2<f64>], used: &mut Vec<bool>, c: f64) -> f64 {
        if i == truth.len() {
            return used.iter().filter(|u| !**u).count() as f64 * c / 2.0;
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

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let params = GospaParams::default();
    let set = |rng: &mut ChaCha8Rng| -> Vec<Vector2<f64>> {
        let n = rng.gen_range(0..=5);
        (0..n)
            .map(|_| Vector2::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)))
            .collect()
    };
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..500 {
        let (a, b, c) = (set(&mut rng), set(&mut rng), set(&mut rng));
        let ab = gospa(&a, &b, params);
        let ba = gospa(&b, &a, params);
        let bc = gospa(&b, &c, params);
        let ac = gospa(&a, &c, params);
        worst = worst
            .max((ab.total - brute_gospa(&a, &b, params.c)).abs())
            .max((ab.total - (ab.localization + ab.missed + ab.false_)).abs())
            .max((ab.total - ba.total).abs())
            .max(gospa(&a, &a, params).total.abs());
        if ab.total < 0.0 || ac.total > ab.total + bc.total + 1e-9 {
            violations += 1;
        }
        if a != b && ab.total <= 0.0 {
            violations += 1;
        }
    }
    outcome(
        worst <= 1e-9 && violations == 0,
        format!("max deviation {worst:.1e}; axiom violations {violations} over 500 pairs"),
    )
}

// ---------------------------------------------------------------- criterion 4

/// Plain Kalman filter for the linear-Gaussian model.
struct Kalman {
    f: Matrix4<f64>,
    q: Matrix4<f64>,
    h: Matrix2x4<f64>,
    r: Matrix2<f64>,
}

impl Kalman {
    fn new(mm: &MotionModel, sigma_v: f64) -> Self {
        Self {
            f: mm.transition,
            q: mm.process_noise,
            h: Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
            r: Matrix2::identity() * sigma_v * sigma_v,
        }
    }

    fn step(&self, x: &Vector4<f64>, p: &Matrix4<f64>, z: &Vector2<f64>) -> (Vector4<f64>, Matrix4<f64>) {
        let xp = self.f * x;
        let pp = self.f * p * self.f.transpose() + self.q;
        let s = self.h * pp * self.h.transpose() + self.r;
        let gain = pp * self.h.transpose() * s.try_inverse().expect("innovation covariance");
        let xu = xp + gain * (z - self.h * xp);
        let pu = (Matrix4::identity() - gain * self.h) * pp;
        (xu, (pu + pu.transpose()) * 0.5)
    }
}

fn consistency_models() -> (RunConfig, MotionModel, SensorModel) {
    let mut cfg = RunConfig::default();
    // no gating, so every measurement updates the track as in the plain filter
    cfg.apply_text("p_d = 1\nmu_c = 0\ngate_gamma = 1e9").expect("config");
    let roi = Roi::new(-750.0, 750.0, -750.0, 750.0);
    let (mm, sm) = (cfg.motion().expect("motion"), cfg.sensor(roi).expect("sensor"));
    (cfg, mm, sm)
}

fn single_target_run(mm: &MotionModel, sm: &SensorModel, run: u64) -> (Vec<KinematicState>, Vec<Measurement>) {
    let mut rng = ChaCha8Rng::seed_from_u64(4000 + run);
    let noise = Normal::new(0.0, sm.sigma_v).expect("noise");
    let mut x = KinematicState::new(-200.0, 100.0, 4.0, -2.0);
    let (mut truth, mut meas) = (Vec::new(), Vec::new());
    for _ in 0..100 {
        x = sample_transition(&x, mm, &mut rng);
        meas.push(Measurement::new(x.x1() + noise.sample(&mut rng), x.x2() + noise.sample(&mut rng)));
        truth.push(x);
    }
    (truth, meas)
}

fn criterion_4() -> Outcome {
    let (cfg, mm, sm) = consistency_models();
    let kf = Kalman::new(&mm, sm.sigma_v);
    let (mut jpda_err, mut mht_err) = (0.0f64, 0.0f64);
    let (mut jpda_missing, mut mht_missing, mut bp_missing) = (0, 0, 0);
    let (mut kf_se, mut bp_se, mut n_se) = (0.0, 0.0, 0usize);
    let birth_vel = cfg.mht().birth_vel_std;
    for run in 0..50u64 {
        let (truth, meas) = single_target_run(&mm, &sm, run);
        let scans: Vec<Scan> = meas.iter().enumerate().map(|(i, z)| Scan::new(i as u32 + 1, vec![*z])).collect();

        // JPDA starts from the two-point initial belief of the first two scans.
        let mut jpda = track_bench::jpda::JpdaTracker::new(mm.clone(), sm.clone(), cfg.jpda()).expect("jpda");
        let init = two_point_init(&meas[0], &meas[1], &mm, &sm);
        let (mut x, mut p) = (init.mean.0, init.covariance);
        for (i, scan) in scans.iter().enumerate() {
            if i >= 2 {
                (x, p) = kf.step(&x, &p, &meas[i].0);
            }
            let est = jpda.step(scan).expect("jpda step");
            if i >= 10 {
                match est.as_slice() {
                    [e] => jpda_err = jpda_err.max((e.state.0 - x).amax()),
                    _ => jpda_missing += 1,
                }
            }
        }

        // MHT and BP start from the birth belief of the first measurement.
        let mut mht =
            track_bench::mht::MhtTracker::new(mm.clone(), sm.clone(), cfg.mht()).expect("mht");
        let mut bp = track_bench::bp::BpTracker::new(mm.clone(), sm.clone(), cfg.bp(), 9000 + run).expect("bp");
        let mut x = Vector4::new(meas[0].z1(), meas[0].z2(), 0.0, 0.0);
        let mut p = Matrix4::from_diagonal(&Vector4::new(
            sm.sigma_v * sm.sigma_v,
            sm.sigma_v * sm.sigma_v,
            birth_vel * birth_vel,
            birth_vel * birth_vel,
        ));
        for (i, scan) in scans.iter().enumerate() {
            if i >= 1 {
                (x, p) = kf.step(&x, &p, &meas[i].0);
            }
            let est = mht.step(scan).expect("mht step");
            if i >= 11 {
                match est.as_slice() {
                    [e] => mht_err = mht_err.max((e.state.0 - x).amax()),
                    _ => mht_missing += 1,
                }
            }
            let pos = truth[i].position();
            kf_se += (Vector2::new(x[0], x[1]) - pos).norm_squared();
            match bp.step(scan).expect("bp step").as_slice() {
                [e] => bp_se += (e.state.position() - pos).norm_squared(),
                _ => bp_missing += 1,
            }
            n_se += 1;
        }
    }
    let kf_rmse = (kf_se / n_se as f64).sqrt();
    let bp_rmse = (bp_se / n_se as f64).sqrt();
    let ratio = bp_rmse / kf_rmse;
    outcome(
        jpda_err < 1e-8
            && mht_err < 1e-8
            && jpda_missing + mht_missing + bp_missing == 0
            && (ratio - 1.0).abs() <= 0.15,
        format!(
            "JPDA max err {jpda_err:.1e}, MHT max err {mht_err:.1e}; BP RMSE {bp_rmse:.3} vs KF {kf_rmse:.3} \
             (ratio {ratio:.3}); scans without exactly one estimate: jpda {jpda_missing} mht {mht_missing} bp {bp_missing}"
        ),
    )
}

// ------------------------------------------------------------- criteria 5-8

fn monte_carlo(scenario: u8, trackers: &str, runs: usize) -> MonteCarloResult {
    let mut cfg = RunConfig::default();
    cfg.apply_text(&format!("scenario = {scenario}\nruns = {runs}\nseed = 1\ntrackers = {trackers}"))
        .expect("config");
    run_monte_carlo(&cfg, Execution::from_workers(0)).expect("monte carlo")
}

fn series(res: &MonteCarloResult, kind: TrackerKind) -> &MetricSeries {
    let s = res.get(kind).expect("tracker present");
    assert!(s.failures.is_empty(), "{} runs failed: {:?}", kind.name(), s.failures);
    s
}

fn window(s: &MetricSeries, lo: u32, hi: u32, col: fn(&track_bench::harness::SeriesRow) -> Option<f64>) -> f64 {
    s.window_mean(lo, hi, col).unwrap_or(f64::NAN)
}

fn criteria_5_6(res: &MonteCarloResult) -> (Outcome, Outcome) {
    let (jpda, mht, bp) = (
        series(res, TrackerKind::Jpda),
        series(res, TrackerKind::Mht),
        series(res, TrackerKind::Bp),
    );
    let jpda_dtr = window(jpda, 150, 200, |r| r.d_tracks);
    let bp_dtr = window(bp, 150, 200, |r| r.d_tracks);
    let loc_mean = window(jpda, 100, 200, |r| Some(r.gospa_loc));
    let peak = jpda
        .rows
        .iter()
        .filter(|r| r.k > 200 && r.k < 240)
        .map(|r| r.gospa_loc)
        .fold(f64::NEG_INFINITY, f64::max);
    let c5 = outcome(
        jpda_dtr < 6.0 && (7.0..=13.0).contains(&bp_dtr) && peak >= 1.5 * loc_mean,
        format!(
            "JPDA D-Tracks[150,200] {jpda_dtr:.2} m (< 6), BP {bp_dtr:.2} m (in [7,13]); \
             JPDA loc peak (200,240) {peak:.2} vs 1.5 x mean[100,200] {:.2}",
            1.5 * loc_mean
        ),
    );
    let mht_dc = window(mht, 120, 180, |r| r.d_center);
    let bp_dc = window(bp, 120, 180, |r| r.d_center);
    let c6 = outcome(
        mht_dc > 5.0 && mht_dc > bp_dc,
        format!("MHT D-Center[120,180] {mht_dc:.2} m vs 5 m and BP {bp_dc:.2} m"),
    );
    (c5, c6)
}

fn criterion_7(res: &MonteCarloResult) -> Outcome {
    let loc = window(series(res, TrackerKind::Jpda), 20, 140, |r| Some(r.gospa_loc));
    let missed = |k| window(series(res, k), 20, 140, |r| Some(r.gospa_missed));
    let (mj, mm, mb) = (missed(TrackerKind::Jpda), missed(TrackerKind::Mht), missed(TrackerKind::Bp));
    outcome(
        (loc - 5.0).abs() <= 2.0 && mj > mm && mj > mb,
        format!("JPDA loc[20,140] {loc:.2} m (5 +/- 2); missed JPDA {mj:.2} MHT {mm:.2} BP {mb:.2}"),
    )
}

fn criterion_8(res: &MonteCarloResult) -> Outcome {
    let loc = |k, lo, hi| window(series(res, k), lo, hi, |r| Some(r.gospa_loc));
    let (mht, bp) = (loc(TrackerKind::Mht, 125, 175), loc(TrackerKind::Bp, 125, 175));
    let (near, after) = (loc(TrackerKind::Jpda, 125, 175), loc(TrackerKind::Jpda, 175, 225));
    outcome(
        mht > bp && near < after,
        format!("loc[125,175] MHT {mht:.2} vs BP {bp:.2}; JPDA [125,175] {near:.2} vs [175,225] {after:.2}"),
    )
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.apply_text("scenario = 3\nruns = 8\nseed = 9\ntrackers = jpda,mht,bp").expect("config");
    let dirs = [tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir")];
    let mut files = Vec::new();
    for (workers, dir) in [1usize, 8].into_iter().zip(&dirs) {
        let res = run_monte_carlo(&cfg, Execution::from_workers(workers)).expect("monte carlo");
        files.push(write_outputs(&res, dir.path()).expect("write"));
    }
    let mut mismatched = Vec::new();
    for (a, b) in files[0].iter().zip(&files[1]) {
        if std::fs::read(a).expect("read") != std::fs::read(b).expect("read") {
            mismatched.push(a.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
        }
    }
    outcome(
        mismatched.is_empty() && files[0].len() == files[1].len(),
        format!("{} files compared, mismatched: {mismatched:?}", files[0].len()),
    )
}

fn main() {
    // `cargo test` passes filter arguments; this target runs everything.
    let mut failed = 0;
    let mut report = |n: u32, o: Outcome, started: Instant| {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("criterion {n}: {verdict} ({}; {:.1} s)", o.detail, started.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    report(1, criterion_1(), t);
    let t = Instant::now();
    report(2, criterion_2(), t);
    let t = Instant::now();
    report(3, criterion_3(), t);
    let t = Instant::now();
    report(4, criterion_4(), t);

    let t = Instant::now();
    let s1 = monte_carlo(1, "jpda,mht,bp", 100);
    let (c5, c6) = criteria_5_6(&s1);
    report(5, c5, t);
    report(6, c6, t);
    let t = Instant::now();
    report(7, criterion_7(&monte_carlo(2, "jpda,mht,bp", 100)), t);
    let t = Instant::now();
    report(8, criterion_8(&monte_carlo(3, "jpda,mht,bp", 100)), t);
    let t = Instant::now();
    report(9, criterion_9(), t);

    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
