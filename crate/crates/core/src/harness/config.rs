//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::association::{BpOptions, DEFAULT_EVENT_CAP};
use crate::bp::BpConfig;
use crate::error::{Result, TrackError};
use crate::jpda::JpdaConfig;
use crate::metrics::GospaParams;
use crate::mht::MhtConfig;
use crate::models::{build_motion_model, MotionModel, Roi, SensorModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrackerKind {
    Jpda,
    Mht,
    Bp,
}

impl TrackerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrackerKind::Jpda => "jpda",
            TrackerKind::Mht => "mht",
            TrackerKind::Bp => "bp",
        }
    }
}

impl FromStr for TrackerKind {
    type Err = TrackError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "jpda" => Ok(TrackerKind::Jpda),
            "mht" => Ok(TrackerKind::Mht),
            "bp" => Ok(TrackerKind::Bp),
            other => Err(TrackError::Config(format!("unknown tracker '{other}'"))),
        }
    }
}

/// Parses a comma-separated tracker list such as `jpda,mht,bp`.
pub fn parse_trackers(s: &str) -> Result<Vec<TrackerKind>> {
    let mut out: Vec<TrackerKind> = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let kind: TrackerKind = part.parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(TrackError::Config("no trackers selected".into()));
    }
    Ok(out)
}

/// Every tunable of a Monte Carlo run. Defaults reproduce the published setup.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: u8,
    pub runs: usize,
    pub seed: u64,
    pub trackers: Vec<TrackerKind>,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,

    pub dt: f64,
    pub sigma_u2: f64,
    pub p_s: f64,
    pub p_d: f64,
    pub sigma_v: f64,
    pub mu_c: f64,
    pub mu_b: f64,
    pub gate_gamma: f64,
    pub event_cap: usize,
    /// Closest approach of the two targets in scenarios 1 and 2, metres.
    pub min_separation: f64,

    pub jpda_confirm_m: usize,
    pub jpda_confirm_n: usize,
    pub jpda_max_missed: u32,
    pub jpda_v_max: f64,
    pub jpda_merge_gamma: f64,

    pub mht_depth: usize,
    pub mht_confirm_m: u32,
    pub mht_confirm_n: u32,
    pub mht_max_missed: u32,
    pub mht_leaf_cap: usize,
    pub mht_search_cap: usize,
    pub mht_birth_vel_std: f64,

    pub bp_particles: usize,
    pub bp_p_th: f64,
    pub bp_p_pr: f64,
    pub bp_max_iter: usize,
    pub bp_tol: f64,
    pub bp_damping: f64,
    pub bp_birth_vel_std: f64,
    pub bp_gate_gamma: f64,

    pub gospa_c: f64,
    pub gospa_p: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let jpda = JpdaConfig::default();
        let mht = MhtConfig::default();
        let bp = BpConfig::default();
        Self {
            scenario: 1,
            runs: 1000,
            seed: 1,
            trackers: vec![TrackerKind::Jpda, TrackerKind::Mht, TrackerKind::Bp],
            workers: 0,
            dt: 1.0,
            sigma_u2: 0.1,
            p_s: 0.995,
            p_d: 0.9,
            sigma_v: 10.0,
            mu_c: 10.0,
            mu_b: 0.01,
            gate_gamma: 13.82,
            event_cap: DEFAULT_EVENT_CAP,
            min_separation: 10.0,
            jpda_confirm_m: jpda.confirm_m,
            jpda_confirm_n: jpda.confirm_n,
            jpda_max_missed: jpda.max_missed,
            jpda_v_max: jpda.v_max,
            jpda_merge_gamma: jpda.merge_gamma,
            mht_depth: mht.depth,
            mht_confirm_m: mht.confirm_m,
            mht_confirm_n: mht.confirm_n,
            mht_max_missed: mht.max_missed,
            mht_leaf_cap: mht.leaf_cap,
            mht_search_cap: mht.search_cap,
            mht_birth_vel_std: mht.birth_vel_std,
            bp_particles: bp.particles,
            bp_p_th: bp.p_th,
            bp_p_pr: bp.p_pr,
            bp_max_iter: bp.bp.max_iter,
            bp_tol: bp.bp.tol,
            bp_damping: bp.bp.damping,
            bp_birth_vel_std: bp.birth_vel_std,
            bp_gate_gamma: bp.gate_gamma,
            gospa_c: 50.0,
            gospa_p: 1.0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| TrackError::Config(format!("bad value '{value}' for key '{key}'")))
}

impl RunConfig {
    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "scenario" => self.scenario = parse_value(key, v)?,
            "runs" => self.runs = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "trackers" => self.trackers = parse_trackers(v)?,
            "workers" => self.workers = parse_value(key, v)?,
            "dt" => self.dt = parse_value(key, v)?,
            "sigma_u2" => self.sigma_u2 = parse_value(key, v)?,
            "p_s" => self.p_s = parse_value(key, v)?,
            "p_d" => self.p_d = parse_value(key, v)?,
            "sigma_v" => self.sigma_v = parse_value(key, v)?,
            "mu_c" => self.mu_c = parse_value(key, v)?,
            "mu_b" => self.mu_b = parse_value(key, v)?,
            "gate_gamma" => self.gate_gamma = parse_value(key, v)?,
            "event_cap" => self.event_cap = parse_value(key, v)?,
            "min_separation" => self.min_separation = parse_value(key, v)?,
            "jpda_confirm_m" => self.jpda_confirm_m = parse_value(key, v)?,
            "jpda_confirm_n" => self.jpda_confirm_n = parse_value(key, v)?,
            "jpda_max_missed" => self.jpda_max_missed = parse_value(key, v)?,
            "jpda_v_max" => self.jpda_v_max = parse_value(key, v)?,
            "jpda_merge_gamma" => self.jpda_merge_gamma = parse_value(key, v)?,
            "mht_depth" => self.mht_depth = parse_value(key, v)?,
            "mht_confirm_m" => self.mht_confirm_m = parse_value(key, v)?,
            "mht_confirm_n" => self.mht_confirm_n = parse_value(key, v)?,
            "mht_max_missed" => self.mht_max_missed = parse_value(key, v)?,
            "mht_leaf_cap" => self.mht_leaf_cap = parse_value(key, v)?,
            "mht_search_cap" => self.mht_search_cap = parse_value(key, v)?,
            "mht_birth_vel_std" => self.mht_birth_vel_std = parse_value(key, v)?,
            "bp_particles" => self.bp_particles = parse_value(key, v)?,
            "bp_p_th" => self.bp_p_th = parse_value(key, v)?,
            "bp_p_pr" => self.bp_p_pr = parse_value(key, v)?,
            "bp_max_iter" => self.bp_max_iter = parse_value(key, v)?,
            "bp_tol" => self.bp_tol = parse_value(key, v)?,
            "bp_damping" => self.bp_damping = parse_value(key, v)?,
            "bp_birth_vel_std" => self.bp_birth_vel_std = parse_value(key, v)?,
            "bp_gate_gamma" => self.bp_gate_gamma = parse_value(key, v)?,
            "gospa_c" => self.gospa_c = parse_value(key, v)?,
            "gospa_p" => self.gospa_p = parse_value(key, v)?,
            _ => return Err(TrackError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` text on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| TrackError::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrackError::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Serialises every key so that `from_text(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let trackers: Vec<&str> = self.trackers.iter().map(|t| t.name()).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("scenario", self.scenario.to_string()),
            ("runs", self.runs.to_string()),
            ("seed", self.seed.to_string()),
            ("trackers", trackers.join(",")),
            ("workers", self.workers.to_string()),
            ("dt", self.dt.to_string()),
            ("sigma_u2", self.sigma_u2.to_string()),
            ("p_s", self.p_s.to_string()),
            ("p_d", self.p_d.to_string()),
            ("sigma_v", self.sigma_v.to_string()),
            ("mu_c", self.mu_c.to_string()),
            ("mu_b", self.mu_b.to_string()),
            ("gate_gamma", self.gate_gamma.to_string()),
            ("event_cap", self.event_cap.to_string()),
            ("min_separation", self.min_separation.to_string()),
            ("jpda_confirm_m", self.jpda_confirm_m.to_string()),
            ("jpda_confirm_n", self.jpda_confirm_n.to_string()),
            ("jpda_max_missed", self.jpda_max_missed.to_string()),
            ("jpda_v_max", self.jpda_v_max.to_string()),
            ("jpda_merge_gamma", self.jpda_merge_gamma.to_string()),
            ("mht_depth", self.mht_depth.to_string()),
            ("mht_confirm_m", self.mht_confirm_m.to_string()),
            ("mht_confirm_n", self.mht_confirm_n.to_string()),
            ("mht_max_missed", self.mht_max_missed.to_string()),
            ("mht_leaf_cap", self.mht_leaf_cap.to_string()),
            ("mht_search_cap", self.mht_search_cap.to_string()),
            ("mht_birth_vel_std", self.mht_birth_vel_std.to_string()),
            ("bp_particles", self.bp_particles.to_string()),
            ("bp_p_th", self.bp_p_th.to_string()),
            ("bp_p_pr", self.bp_p_pr.to_string()),
            ("bp_max_iter", self.bp_max_iter.to_string()),
            ("bp_tol", self.bp_tol.to_string()),
            ("bp_damping", self.bp_damping.to_string()),
            ("bp_birth_vel_std", self.bp_birth_vel_std.to_string()),
            ("bp_gate_gamma", self.bp_gate_gamma.to_string()),
            ("gospa_c", self.gospa_c.to_string()),
            ("gospa_p", self.gospa_p.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TrackError::Config(msg));
        if !(1..=3).contains(&self.scenario) {
            return Err(TrackError::UnknownScenario(self.scenario));
        }
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        if self.trackers.is_empty() {
            return bad("no trackers selected".into());
        }
        if !(self.min_separation > 0.0 && self.min_separation < 200.0) {
            return bad("min_separation must lie in (0, 200)".into());
        }
        if !(self.gospa_c > 0.0) || !(self.gospa_p >= 1.0) {
            return bad("need gospa_c > 0 and gospa_p >= 1".into());
        }
        if self.event_cap < 1 {
            return bad("event_cap must be positive".into());
        }
        let cfg_err = |e: TrackError| TrackError::Config(e.to_string());
        self.motion().map_err(cfg_err)?;
        self.sensor(Roi::new(-750.0, 750.0, -750.0, 750.0)).map_err(cfg_err)?;
        self.jpda().validate().map_err(cfg_err)?;
        self.mht().validate().map_err(cfg_err)?;
        self.bp().validate().map_err(cfg_err)?;
        Ok(())
    }

    pub fn motion(&self) -> Result<MotionModel> {
        build_motion_model(self.dt, self.sigma_u2, self.p_s)
    }

    pub fn sensor(&self, roi: Roi) -> Result<SensorModel> {
        SensorModel::new(self.p_d, self.sigma_v, self.mu_c, roi, self.mu_b)
    }

    pub fn jpda(&self) -> JpdaConfig {
        JpdaConfig {
            gate_gamma: self.gate_gamma,
            confirm_m: self.jpda_confirm_m,
            confirm_n: self.jpda_confirm_n,
            max_missed: self.jpda_max_missed,
            v_max: self.jpda_v_max,
            merge_gamma: self.jpda_merge_gamma,
            event_cap: self.event_cap,
        }
    }

    pub fn mht(&self) -> MhtConfig {
        MhtConfig {
            gate_gamma: self.gate_gamma,
            depth: self.mht_depth,
            confirm_m: self.mht_confirm_m,
            confirm_n: self.mht_confirm_n,
            max_missed: self.mht_max_missed,
            leaf_cap: self.mht_leaf_cap,
            search_cap: self.mht_search_cap,
            birth_vel_std: self.mht_birth_vel_std,
        }
    }

    pub fn bp(&self) -> BpConfig {
        BpConfig {
            particles: self.bp_particles,
            p_th: self.bp_p_th,
            p_pr: self.bp_p_pr,
            bp: BpOptions {
                max_iter: self.bp_max_iter,
                tol: self.bp_tol,
                damping: self.bp_damping,
            },
            birth_vel_std: self.bp_birth_vel_std,
            gate_gamma: self.bp_gate_gamma,
        }
    }

    pub fn gospa(&self) -> GospaParams {
        GospaParams {
            p: self.gospa_p,
            c: self.gospa_c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = RunConfig::from_text("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!((cfg.dt, cfg.sigma_u2, cfg.sigma_v, cfg.mu_c, cfg.mu_b), (1.0, 0.1, 10.0, 10.0, 0.01));
        assert_eq!((cfg.p_s, cfg.gate_gamma, cfg.bp_particles), (0.995, 13.82, 5000));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::from_text("p_s = 1.2"), Err(TrackError::Config(_))));
        assert!(matches!(RunConfig::from_text("colour = red"), Err(TrackError::Config(_))));
        assert!(matches!(RunConfig::from_text("runs"), Err(TrackError::Config(_))));
        assert!(matches!(RunConfig::from_text("runs = many"), Err(TrackError::Config(_))));
        assert!(matches!(RunConfig::from_text("trackers = jpda,kf"), Err(TrackError::Config(_))));
        assert!(matches!(RunConfig::from_text("scenario = 4"), Err(TrackError::UnknownScenario(4))));
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nscenario = 3\nruns=17\ntrackers = bp,jpda\nmu_c = 2.5\nbp_tol = 1e-7\n").unwrap();
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.trackers, vec![TrackerKind::Bp, TrackerKind::Jpda]);
    }
}
