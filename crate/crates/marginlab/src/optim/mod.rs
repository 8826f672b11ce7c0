//! The three optimizers — gradient flow, gradient descent, averaged SGD —
//! plus the explicit 2-D recursion driving the lower-bound analysis. Every
//! run starts at the origin and records a checkpointed trajectory.
//!
//! Step indexing: a checkpoint labelled `t` holds the state after `t` update
//! steps, so label 0 is the origin and the final checkpoint label equals the
//! configured step count. Risk along a smooth-loss descent run is
//! nonincreasing, so a bound stated for the t-th iterate also holds for the
//! state after t updates.

mod flow;

pub use flow::run_flow;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{margin_profile, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::loss::{empirical_risk, risk_gradient_into, Loss};
use crate::util::fmt_f64;

/// Target number of geometric checkpoints per run (endpoints always included).
pub const DEFAULT_CHECKPOINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Flow,
    Gd,
    Sgd,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Flow => write!(f, "flow"),
            Method::Gd => write!(f, "gd"),
            Method::Sgd => write!(f, "sgd"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub eta: f64,
    pub steps: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            eta: 1.0,
            steps: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub eta: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            eta: 1.0,
            steps: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub t_end: f64,
    pub rel_tol: f64,
    pub checkpoints: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            t_end: 100.0,
            rel_tol: 1e-8,
            checkpoints: DEFAULT_CHECKPOINTS,
        }
    }
}

/// The resolved configuration a trajectory was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunConfig {
    Flow(FlowConfig),
    Gd(GdConfig),
    Sgd(SgdConfig),
}

impl RunConfig {
    pub fn method(&self) -> Method {
        match self {
            RunConfig::Flow(_) => Method::Flow,
            RunConfig::Gd(_) => Method::Gd,
            RunConfig::Sgd(_) => Method::Sgd,
        }
    }

    /// Step count for descent methods, time horizon for flow.
    pub fn horizon(&self) -> f64 {
        match self {
            RunConfig::Flow(c) => c.t_end,
            RunConfig::Gd(c) => c.steps as f64,
            RunConfig::Sgd(c) => c.steps as f64,
        }
    }

    pub fn eta(&self) -> Option<f64> {
        match self {
            RunConfig::Flow(_) => None,
            RunConfig::Gd(c) => Some(c.eta),
            RunConfig::Sgd(c) => Some(c.eta),
        }
    }

    pub fn rel_tol(&self) -> Option<f64> {
        match self {
            RunConfig::Flow(c) => Some(c.rel_tol),
            _ => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            RunConfig::Sgd(c) => Some(c.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Update count (descent) or continuous time (flow).
    pub step_or_time: f64,
    pub w: Vec<f64>,
    /// Exact empirical risk of `w`, recomputable.
    pub risk: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: RunConfig,
    pub loss: Loss,
    pub dataset_tag: String,
    pub checkpoints: Vec<Checkpoint>,
    pub final_w: Vec<f64>,
    /// Mean of the pre-update iterates; SGD only.
    pub averaged_w: Option<Vec<f64>>,
    /// Running max of the iterate norm over every step, not only checkpoints.
    pub max_norm_seen: f64,
}

impl Trajectory {
    pub fn method(&self) -> Method {
        self.config.method()
    }

    pub fn final_risk(&self) -> f64 {
        self.checkpoints
            .last()
            .expect("trajectory has checkpoints")
            .risk
    }

    pub fn tag(&self) -> String {
        let mut t = format!("{}:{}:{}", self.method(), self.loss, self.config.horizon());
        if let Some(eta) = self.config.eta() {
            t.push_str(&format!(":eta={eta}"));
        }
        if let Some(seed) = self.config.seed() {
            t.push_str(&format!(":seed={seed}"));
        }
        format!("{t}:{}", self.dataset_tag)
    }

    /// Write the checkpoint table as CSV. Margin quantile columns are
    /// computed against `dataset` on demand; they are empty at the origin
    /// where the predictor has no direction.
    pub fn write_csv(&self, dataset: &Dataset, path: &Path) -> Result<()> {
        let mut out = String::from("step_or_time,risk,norm,min_margin,q10_margin,q50_margin\n");
        for ck in &self.checkpoints {
            let (lo, q10, q50) = match margin_profile(dataset, &ck.w) {
                Ok(prof) => (
                    fmt_f64(prof.min()),
                    fmt_f64(prof.margin_at_quantile(0.1)),
                    fmt_f64(prof.margin_at_quantile(0.5)),
                ),
                Err(_) => (String::new(), String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{},{lo},{q10},{q50}\n",
                fmt_f64(ck.step_or_time),
                fmt_f64(ck.risk),
                fmt_f64(ck.norm),
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Full machine-readable record (`final.json`).
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let record = serde_json::json!({
            "method": self.method(),
            "final_w": self.final_w,
            "averaged_w": self.averaged_w,
            "max_norm_seen": self.max_norm_seen,
            "seeds": self.config.seed().map(|s| vec![s]).unwrap_or_default(),
            "config": self.config,
            "loss": self.loss,
            "dataset_tag": self.dataset_tag,
            "checkpoints": self.checkpoints,
        });
        fs::write(path, serde_json::to_string_pretty(&record)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(format!("{}", path.display())));
        }
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        let config: RunConfig = serde_json::from_value(v["config"].clone())?;
        let loss: Loss = serde_json::from_value(v["loss"].clone())?;
        let checkpoints: Vec<Checkpoint> = serde_json::from_value(v["checkpoints"].clone())?;
        let final_w: Vec<f64> = serde_json::from_value(v["final_w"].clone())?;
        let averaged_w: Option<Vec<f64>> = serde_json::from_value(v["averaged_w"].clone())?;
        let max_norm_seen: f64 = serde_json::from_value(v["max_norm_seen"].clone())?;
        let dataset_tag: String =
            serde_json::from_value(v["dataset_tag"].clone()).unwrap_or_default();
        if checkpoints.is_empty() {
            return Err(Error::Parse("trajectory has no checkpoints".into()));
        }
        Ok(Trajectory {
            config,
            loss,
            dataset_tag,
            checkpoints,
            final_w,
            averaged_w,
            max_norm_seen,
        })
    }
}

/// Geometric step grid {0, 1, ..., total} with about `target` interior points.
pub(crate) fn checkpoint_steps(total: usize, target: usize) -> Vec<usize> {
    let mut set = BTreeSet::new();
    set.insert(0);
    set.insert(total.min(1));
    set.insert(total);
    if total > 1 && target > 1 {
        let lt = (total as f64).ln();
        for i in 0..target {
            let v = (lt * i as f64 / (target - 1) as f64).exp().round() as usize;
            set.insert(v.clamp(1, total));
        }
    }
    set.into_iter().collect()
}

/// Full-gradient descent from the origin with a constant step size.
pub fn run_gd(dataset: &Dataset, loss: Loss, cfg: &GdConfig) -> Result<Trajectory> {
    if !(cfg.eta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "eta {} must be positive",
            cfg.eta
        )));
    }
    let d = dataset.dim();
    let mut w = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let grid = checkpoint_steps(cfg.steps, DEFAULT_CHECKPOINTS);
    let mut checkpoints = Vec::with_capacity(grid.len());
    let mut gi = 0;
    let mut max_norm = 0.0_f64;

    record(&mut checkpoints, 0.0, &w, dataset, loss, 0.0)?;
    gi += 1;

    for t in 1..=cfg.steps {
        risk_gradient_into(dataset, loss, &w, &mut grad)?;
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= cfg.eta * gj;
        }
        let n = norm(&w);
        if !n.is_finite() {
            return Err(Error::NonFinite { at: t as f64 });
        }
        max_norm = max_norm.max(n);
        if gi < grid.len() && grid[gi] == t {
            record(&mut checkpoints, t as f64, &w, dataset, loss, n)?;
            gi += 1;
        }
    }

    Ok(Trajectory {
        config: RunConfig::Gd(*cfg),
        loss,
        dataset_tag: dataset.tag().to_string(),
        checkpoints,
        final_w: w,
        averaged_w: None,
        max_norm_seen: max_norm,
    })
}

/// Single-sample stochastic gradient descent from the origin, returning the
/// average of the pre-update iterates alongside the final one. The index
/// stream is uniform on the dataset and deterministic per seed.
pub fn run_sgd(dataset: &Dataset, loss: Loss, cfg: &SgdConfig) -> Result<Trajectory> {
    if !(cfg.eta > 0.0) {
        return Err(Error::InvalidParam(format!(
            "eta {} must be positive",
            cfg.eta
        )));
    }
    let d = dataset.dim();
    let m = dataset.m();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; d];
    let mut acc = vec![0.0; d];
    let grid = checkpoint_steps(cfg.steps, DEFAULT_CHECKPOINTS);
    let mut checkpoints = Vec::with_capacity(grid.len());
    let mut gi = 0;
    let mut max_norm = 0.0_f64;

    record(&mut checkpoints, 0.0, &w, dataset, loss, 0.0)?;
    gi += 1;

    for t in 1..=cfg.steps {
        for (a, wj) in acc.iter_mut().zip(&w) {
            *a += wj;
        }
        let i = rng.random_range(0..m);
        let x = dataset.point(i);
        let lp = loss.deriv(dot(x, &w));
        for (wj, xj) in w.iter_mut().zip(x) {
            *wj -= cfg.eta * (lp * xj);
        }
        let n = norm(&w);
        if !n.is_finite() {
            return Err(Error::NonFinite { at: t as f64 });
        }
        max_norm = max_norm.max(n);
        if gi < grid.len() && grid[gi] == t {
            record(&mut checkpoints, t as f64, &w, dataset, loss, n)?;
            gi += 1;
        }
    }

    if cfg.steps > 0 {
        let inv = 1.0 / cfg.steps as f64;
        for a in acc.iter_mut() {
            *a *= inv;
        }
    }

    Ok(Trajectory {
        config: RunConfig::Sgd(*cfg),
        loss,
        dataset_tag: dataset.tag().to_string(),
        checkpoints,
        final_w: w,
        averaged_w: Some(acc),
        max_norm_seen: max_norm,
    })
}

fn record(
    out: &mut Vec<Checkpoint>,
    label: f64,
    w: &[f64],
    dataset: &Dataset,
    loss: Loss,
    norm: f64,
) -> Result<()> {
    out.push(Checkpoint {
        step_or_time: label,
        w: w.to_vec(),
        risk: empirical_risk(dataset, loss, w)?,
        norm,
    });
    Ok(())
}

/// One row of the scalar coordinates along the two-cluster descent run:
/// the majority coordinate `r`, the minority-aligned coordinate `s`, and
/// the minority margin `u = -r/2 + 3 gamma s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub t: usize,
    pub r: f64,
    pub s: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundTrace {
    pub rows: Vec<LowerBoundRow>,
    pub gamma: f64,
    pub epsilon: f64,
    pub eta: f64,
}

impl LowerBoundTrace {
    /// First 1-based index t with `u_t > 0`, if any.
    pub fn first_crossing(&self) -> Option<usize> {
        self.rows.iter().find(|row| row.u > 0.0).map(|row| row.t)
    }
}

/// Exact scalar recursion for logistic-loss descent on the two-cluster
/// dataset, in the plane coordinates `r = w(1)`, `s = w(2)`. Matches
/// `run_gd` on the matching dataset whenever `epsilon * m` is an integer.
/// Rows are 1-based with `r_1 = s_1 = 0`; `steps` updates produce
/// `steps + 1` rows.
pub fn lowerbound_recursion(
    gamma: f64,
    epsilon: f64,
    eta: f64,
    steps: usize,
) -> Result<LowerBoundTrace> {
    if !(gamma > 0.0 && gamma <= 0.125) {
        return Err(Error::InvalidParam(format!(
            "gamma {gamma} outside (0, 1/8]"
        )));
    }
    if !(epsilon > 0.0 && epsilon <= 0.125) {
        return Err(Error::InvalidParam(format!(
            "epsilon {epsilon} outside (0, 1/8]"
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidParam(format!("eta {eta} outside (0, 1]")));
    }
    let loss = Loss::Logistic;
    let mut rows = Vec::with_capacity(steps + 1);
    let (mut r, mut s) = (0.0_f64, 0.0_f64);
    rows.push(LowerBoundRow { t: 1, r, s, u: 0.0 });
    for t in 1..=steps {
        let u = -0.5 * r + 3.0 * gamma * s;
        let du = loss.deriv(u);
        let next_r = r - (1.0 - epsilon) * eta * loss.deriv(r) + 0.5 * epsilon * eta * du;
        let next_s = s - 3.0 * gamma * epsilon * eta * du;
        r = next_r;
        s = next_s;
        let u_next = -0.5 * r + 3.0 * gamma * s;
        rows.push(LowerBoundRow {
            t: t + 1,
            r,
            s,
            u: u_next,
        });
    }
    Ok(LowerBoundTrace {
        rows,
        gamma,
        epsilon,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_separable;
    use crate::data::Dataset;

    fn unit_x() -> Dataset {
        Dataset::new(vec![vec![1.0, 0.0]], vec![1.0, 0.0], 1.0, "unit-x").unwrap()
    }

    #[test]
    fn checkpoint_grid_shape() {
        assert_eq!(checkpoint_steps(0, 64), vec![0]);
        assert_eq!(checkpoint_steps(1, 64), vec![0, 1]);
        let g = checkpoint_steps(10_000, 64);
        assert_eq!(g[0], 0);
        assert_eq!(g[1], 1);
        assert_eq!(*g.last().unwrap(), 10_000);
        assert!(g.len() <= 66);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn gd_hand_recursion_exponential() {
        let traj = run_gd(
            &unit_x(),
            Loss::Exponential,
            &GdConfig { eta: 1.0, steps: 2 },
        )
        .unwrap();
        // after one update: (1, 0); after two: (1 + e^{-1}, 0)
        let after_one = &traj.checkpoints[1];
        assert_eq!(after_one.step_or_time, 1.0);
        assert!((after_one.w[0] - 1.0).abs() < 1e-15);
        assert!((traj.final_w[0] - (1.0 + (-1.0_f64).exp())).abs() < 1e-15);
        assert_eq!(traj.final_w[1], 0.0);
    }

    #[test]
    fn gd_hand_recursion_logistic() {
        let traj = run_gd(&unit_x(), Loss::Logistic, &GdConfig { eta: 1.0, steps: 1 }).unwrap();
        assert_eq!(traj.final_w, vec![0.5, 0.0]);
    }

    #[test]
    fn gd_zero_steps() {
        let ds = generate_separable(5, 3, 0.4, 1).unwrap();
        let traj = run_gd(&ds, Loss::Logistic, &GdConfig { eta: 1.0, steps: 0 }).unwrap();
        assert_eq!(traj.final_w, vec![0.0; 3]);
        assert_eq!(traj.final_risk(), Loss::Logistic.value_at_zero());
        assert_eq!(traj.checkpoints.len(), 1);
    }

    #[test]
    fn gd_risk_monotone_under_smoothness() {
        let ds = generate_separable(30, 4, 0.3, 5).unwrap();
        let traj = run_gd(
            &ds,
            Loss::Logistic,
            &GdConfig {
                eta: 1.0,
                steps: 500,
            },
        )
        .unwrap();
        for pair in traj.checkpoints.windows(2) {
            assert!(pair[1].risk <= pair[0].risk * (1.0 + 1e-15));
        }
    }

    #[test]
    fn gd_diverges_to_non_finite_with_huge_eta() {
        // Two points pulling in conflicting directions: a large step leaves
        // one margin deeply negative and the exponential gradient explodes.
        let ds = Dataset::new(
            vec![vec![0.99, 0.099], vec![-0.7, 0.3]],
            vec![0.0, 1.0],
            0.099,
            "conflict",
        )
        .unwrap();
        let res = run_gd(
            &ds,
            Loss::Exponential,
            &GdConfig {
                eta: 1000.0,
                steps: 10,
            },
        );
        assert!(matches!(res, Err(Error::NonFinite { .. })), "{res:?}");
    }

    #[test]
    fn sgd_single_point_average() {
        let traj = run_sgd(
            &unit_x(),
            Loss::Logistic,
            &SgdConfig {
                eta: 1.0,
                steps: 2,
                seed: 9,
            },
        )
        .unwrap();
        // pre-update iterates are (0,0) and (0.5,0)
        assert_eq!(traj.averaged_w.as_deref().unwrap(), &[0.25, 0.0]);
        assert_eq!(traj.checkpoints[1].w, vec![0.5, 0.0]);
    }

    #[test]
    fn sgd_one_step_average_is_origin() {
        let ds = generate_separable(7, 3, 0.3, 4).unwrap();
        let traj = run_sgd(
            &ds,
            Loss::Logistic,
            &SgdConfig {
                eta: 1.0,
                steps: 1,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(traj.averaged_w.as_deref().unwrap(), &[0.0; 3]);
    }

    #[test]
    fn sgd_deterministic_per_seed() {
        let ds = generate_separable(20, 4, 0.25, 8).unwrap();
        let cfg = SgdConfig {
            eta: 1.0,
            steps: 200,
            seed: 77,
        };
        let a = run_sgd(&ds, Loss::Logistic, &cfg).unwrap();
        let b = run_sgd(&ds, Loss::Logistic, &cfg).unwrap();
        assert_eq!(a, b);
        let c = run_sgd(&ds, Loss::Logistic, &SgdConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a.final_w, c.final_w);
    }

    #[test]
    fn sgd_equals_gd_on_single_point_dataset() {
        let ds = unit_x();
        for steps in [1, 3, 17, 100] {
            let gd = run_gd(&ds, Loss::Logistic, &GdConfig { eta: 1.0, steps }).unwrap();
            let sgd = run_sgd(
                &ds,
                Loss::Logistic,
                &SgdConfig {
                    eta: 1.0,
                    steps,
                    seed: 5,
                },
            )
            .unwrap();
            assert_eq!(gd.final_w, sgd.final_w);
            assert_eq!(gd.max_norm_seen, sgd.max_norm_seen);
            assert_eq!(gd.checkpoints, sgd.checkpoints);
        }
    }

    #[test]
    fn checkpoint_risks_recomputable() {
        let ds = generate_separable(15, 3, 0.3, 6).unwrap();
        let traj = run_gd(
            &ds,
            Loss::Logistic,
            &GdConfig {
                eta: 1.0,
                steps: 200,
            },
        )
        .unwrap();
        for ck in &traj.checkpoints {
            let again = empirical_risk(&ds, Loss::Logistic, &ck.w).unwrap();
            assert_eq!(again.to_bits(), ck.risk.to_bits());
            assert!(traj.max_norm_seen >= ck.norm);
        }
    }

    #[test]
    fn recursion_first_step_reference() {
        let trace = lowerbound_recursion(0.125, 0.125, 1.0, 1).unwrap();
        assert_eq!(
            trace.rows[0],
            LowerBoundRow {
                t: 1,
                r: 0.0,
                s: 0.0,
                u: 0.0
            }
        );
        let row = trace.rows[1];
        assert!((row.r - 13.0 / 32.0).abs() < 1e-15);
        assert!((row.s - 3.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn recursion_zero_steps() {
        let trace = lowerbound_recursion(0.1, 0.05, 0.5, 0).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].t, 1);
    }

    #[test]
    fn recursion_u_consistent_with_coordinates() {
        let trace = lowerbound_recursion(0.125, 0.038, 1.0, 64).unwrap();
        for row in &trace.rows {
            let u = -0.5 * row.r + 3.0 * trace.gamma * row.s;
            assert!((u - row.u).abs() <= 1e-15);
        }
        assert!(trace
            .first_crossing()
            .is_none_or(|t| t as f64 >= 19.0 / (480.0 * 0.125 * 0.125 * 0.038)));
    }

    #[test]
    fn recursion_param_box() {
        assert!(lowerbound_recursion(0.2, 0.1, 1.0, 1).is_err());
        assert!(lowerbound_recursion(0.1, 0.2, 1.0, 1).is_err());
        assert!(lowerbound_recursion(0.1, 0.1, 1.5, 1).is_err());
    }

    #[test]
    fn trajectory_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_separable(10, 3, 0.3, 11).unwrap();
        let traj = run_sgd(
            &ds,
            Loss::Logistic,
            &SgdConfig {
                eta: 1.0,
                steps: 50,
                seed: 3,
            },
        )
        .unwrap();
        let path = dir.path().join("final.json");
        traj.save_json(&path).unwrap();
        let back = Trajectory::load_json(&path).unwrap();
        assert_eq!(traj, back);
    }
}
