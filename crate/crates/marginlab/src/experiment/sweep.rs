//! Grid sweeps over (method, loss, gamma, m, T, seed) cells with per-cell
//! error isolation. Cells run in parallel; each derives its random streams
//! from (seed, cell index) so outputs are independent of scheduling order,
//! and all files are written serially afterwards so re-runs are
//! byte-identical. Wall-clock time goes to a sidecar only.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{certify, BoundQuery, BoundReport};
use crate::data::{generate_separable, margin_profile, Dataset};
use crate::error::{Error, Result};
use crate::experiment::{estimate_generalization, DistributionSpec, SampleLaw};
use crate::loss::Loss;
use crate::optim::{
    run_flow, run_gd, run_sgd, FlowConfig, GdConfig, Method, SgdConfig, Trajectory,
};
use crate::util::{fmt_f64, mix_seed};

/// Environment variable capping sweep parallelism.
pub const THREADS_ENV: &str = "MARGINLAB_THREADS";

/// One bound ask inside a sweep config; `gamma` is filled per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRequest {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl BoundRequest {
    pub fn kind_only(kind: &str) -> Self {
        BoundRequest {
            kind: kind.into(),
            alpha: None,
            p: None,
            b: None,
            c: None,
        }
    }

    fn query(&self, gamma: f64) -> Result<BoundQuery> {
        BoundQuery::build(&self.kind, gamma, self.alpha, self.p, self.b, self.c)
    }
}

fn default_dim() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    pub losses: Vec<Loss>,
    pub gammas: Vec<f64>,
    pub ms: Vec<usize>,
    /// Step counts for descent methods; time horizons for flow.
    pub ts: Vec<f64>,
    pub eta: f64,
    #[serde(default = "default_dim")]
    pub d: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub bounds: Vec<BoundRequest>,
    /// When set, estimate the generalization error on this many fresh samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_test: Option<usize>,
    pub output_dir: PathBuf,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("methods", self.methods.is_empty()),
            ("losses", self.losses.is_empty()),
            ("gammas", self.gammas.is_empty()),
            ("ms", self.ms.is_empty()),
            ("ts", self.ts.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidParam(format!("sweep grid {name} is empty")));
            }
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParam("eta must be positive".into()));
        }
        if self.d == 0 {
            return Err(Error::InvalidParam("d must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    index: usize,
    method: Method,
    loss: Loss,
    gamma: f64,
    m: usize,
    t: f64,
    seed: u64,
}

impl Cell {
    // eta lives on the config, not the cell; it is threaded in for naming.
    fn id(&self, eta: f64) -> String {
        format!(
            "{}_{}_g{}_m{}_T{}_eta{eta}_s{}",
            self.method, self.loss, self.gamma, self.m, self.t, self.seed
        )
    }
}

#[derive(Debug)]
struct CellOutcome {
    id: String,
    master_row: Option<String>,
    reports: Vec<(String, BoundReport)>,
    statuses: Vec<(String, String)>, // (bound kind or "-", message)
}

/// Run every grid cell, certify the requested bounds, and persist one report
/// JSON per (cell, bound), a master CSV, and a status CSV. Returns the output
/// directory. Per-cell failures become status rows; the sweep never aborts.
pub fn run_sweep(cfg: &SweepConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(out.join("reports"))?;

    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for &loss in &cfg.losses {
            for &gamma in &cfg.gammas {
                for &m in &cfg.ms {
                    for &t in &cfg.ts {
                        for &seed in &cfg.seeds {
                            cells.push(Cell {
                                index: cells.len(),
                                method,
                                loss,
                                gamma,
                                m,
                                t,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }

    let run_cells = |cells: &[Cell]| -> Vec<CellOutcome> {
        cells.par_iter().map(|cell| run_cell(cfg, *cell)).collect()
    };
    let outcomes = match threads_from_env() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParam(format!("{THREADS_ENV}: {e}")))?
            .install(|| run_cells(&cells)),
        None => run_cells(&cells),
    };

    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;

    let mut master = String::from(
        "method,loss,gamma,m,T,eta,seed,final_risk,max_norm,min_margin,gen_error,gen_halfwidth,bounds_satisfied_count,bounds_total\n",
    );
    let mut status = String::from("cell,bound,status\n");
    for oc in &outcomes {
        if let Some(row) = &oc.master_row {
            master.push_str(row);
            master.push('\n');
        }
        for (kind, report) in &oc.reports {
            let path = out.join("reports").join(format!("{}__{kind}.json", oc.id));
            fs::write(path, serde_json::to_string_pretty(report)?)?;
        }
        for (kind, msg) in &oc.statuses {
            status.push_str(&format!("{},{kind},{}\n", oc.id, msg.replace(',', ";")));
        }
    }
    fs::write(out.join("master.csv"), master)?;
    fs::write(out.join("status.csv"), status)?;
    // Wall-clock goes in a sidecar so content files stay reproducible.
    fs::write(
        out.join("sidecar.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "finished_unix_ms": std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or_default(),
            "cells": cells.len(),
        }))?,
    )?;
    Ok(out)
}

fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
}

fn run_cell(cfg: &SweepConfig, cell: Cell) -> CellOutcome {
    let id = cell.id(cfg.eta);
    let mut statuses = Vec::new();
    let dataset_seed = mix_seed(cell.seed, 2 * cell.index as u64);
    let run_seed = mix_seed(cell.seed, 2 * cell.index as u64 + 1);

    let built = generate_separable(cell.m, cfg.d, cell.gamma, dataset_seed)
        .and_then(|ds| run_method(&ds, cfg, &cell, run_seed).map(|traj| (ds, traj)));
    let (dataset, traj) = match built {
        Ok(pair) => pair,
        Err(e) => {
            statuses.push(("-".to_string(), format!("error: {e}")));
            return CellOutcome {
                id,
                master_row: None,
                reports: Vec::new(),
                statuses,
            };
        }
    };

    let mut reports = Vec::new();
    let mut satisfied = 0usize;
    for req in &cfg.bounds {
        match req
            .query(cell.gamma)
            .and_then(|q| certify(&traj, &dataset, &q))
        {
            Ok(report) => {
                if report.satisfied {
                    satisfied += 1;
                }
                reports.push((req.kind.clone(), report));
            }
            Err(Error::IncompatibleQuery(msg)) => {
                statuses.push((req.kind.clone(), format!("uncertified combination: {msg}")));
            }
            Err(Error::PreconditionNotMet(msg)) => {
                statuses.push((req.kind.clone(), format!("precondition not met: {msg}")));
            }
            Err(e) => {
                statuses.push((req.kind.clone(), format!("error: {e}")));
            }
        }
    }

    let (gen_error, gen_halfwidth) = match cfg.gen_test {
        Some(n_test) => {
            let dist = DistributionSpec {
                w0: dataset.witness().to_vec(),
                gamma: cell.gamma,
                d: cfg.d,
                law: SampleLaw::BallRejection,
                seed_domain: id.clone(),
            };
            match estimate_generalization(
                &traj.final_w,
                &dist,
                n_test,
                mix_seed(cell.seed, 3 * cell.index as u64 + 2),
            ) {
                Ok(est) => (fmt_f64(est.error_rate), fmt_f64(est.wilson_halfwidth)),
                Err(e) => {
                    statuses.push(("gen_error".into(), format!("error: {e}")));
                    (String::new(), String::new())
                }
            }
        }
        None => (String::new(), String::new()),
    };

    let min_margin = margin_profile(&dataset, &traj.final_w)
        .map(|p| fmt_f64(p.min()))
        .unwrap_or_default();
    let master_row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        cell.method,
        cell.loss,
        cell.gamma,
        cell.m,
        cell.t,
        cfg.eta,
        cell.seed,
        fmt_f64(traj.final_risk()),
        fmt_f64(traj.max_norm_seen),
        min_margin,
        gen_error,
        gen_halfwidth,
        satisfied,
        cfg.bounds.len(),
    );
    CellOutcome {
        id,
        master_row: Some(master_row),
        reports,
        statuses,
    }
}

fn run_method(ds: &Dataset, cfg: &SweepConfig, cell: &Cell, run_seed: u64) -> Result<Trajectory> {
    match cell.method {
        Method::Gd => run_gd(
            ds,
            cell.loss,
            &GdConfig {
                eta: cfg.eta,
                steps: cell.t as usize,
            },
        ),
        Method::Sgd => run_sgd(
            ds,
            cell.loss,
            &SgdConfig {
                eta: cfg.eta,
                steps: cell.t as usize,
                seed: run_seed,
            },
        ),
        Method::Flow => run_flow(
            ds,
            cell.loss,
            &FlowConfig {
                t_end: cell.t,
                rel_tol: 1e-8,
                checkpoints: 64,
            },
        ),
    }
}
