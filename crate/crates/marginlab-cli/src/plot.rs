//! Tidy long-format plot data: one `(series, x, y)` CSV aggregating every
//! trajectory under a report directory, with matching bound curves overlaid
//! where the run qualifies for one. No rendering; downstream plotting tools
//! consume the CSV directly.

use std::fs;
use std::path::{Path, PathBuf};

use marginlab::optim::{Method, RunConfig};
use marginlab::util::fmt_f64;
use marginlab::{Dataset, Error, Loss, Trajectory};

use crate::commands::read_dir_sorted;
use crate::CliError;

struct Series<'a> {
    name: String,
    rows: Vec<(f64, f64)>,
    out: &'a mut String,
}

impl<'a> Series<'a> {
    fn flush(self) {
        for (x, y) in self.rows {
            self.out
                .push_str(&format!("{},{},{}\n", self.name, fmt_f64(x), fmt_f64(y)));
        }
    }
}

/// Walk `dir` for `trajectory.csv` files, emit `plot_data.csv` in `dir`.
pub fn emit_plot_data(dir: &Path) -> Result<PathBuf, CliError> {
    let mut found = Vec::new();
    collect_trajectory_dirs(dir, dir, &mut found).map_err(|e| CliError::Runtime(e.to_string()))?;
    if found.is_empty() {
        return Err(CliError::Runtime(
            Error::MissingInput(format!("no trajectory.csv under {}", dir.display())).to_string(),
        ));
    }

    let mut out = String::from("series,x,y\n");
    for (rel, sub) in found {
        let label = if rel.is_empty() { ".".to_string() } else { rel };
        emit_one_run(&sub, &label, &mut out)?;
    }
    let path = dir.join("plot_data.csv");
    fs::write(&path, out).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("plot data -> {}", path.display());
    Ok(path)
}

fn collect_trajectory_dirs(
    root: &Path,
    dir: &Path,
    found: &mut Vec<(String, PathBuf)>,
) -> std::io::Result<()> {
    if dir.join("trajectory.csv").exists() {
        let rel = dir
            .strip_prefix(root)
            .unwrap_or(dir)
            .to_string_lossy()
            .replace(',', "_");
        found.push((rel, dir.to_path_buf()));
    }
    for entry in read_dir_sorted(dir)? {
        if entry.is_dir() {
            collect_trajectory_dirs(root, &entry, found)?;
        }
    }
    Ok(())
}

fn emit_one_run(sub: &Path, label: &str, out: &mut String) -> Result<(), CliError> {
    let text = fs::read_to_string(sub.join("trajectory.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut risk = Vec::new();
    let mut norm = Vec::new();
    let mut min_margin = Vec::new();
    let mut q50 = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            continue;
        }
        let x: f64 = match cols[0].parse() {
            Ok(v) => v,
            Err(_) => continue,
        };
        if let Ok(y) = cols[1].parse::<f64>() {
            risk.push((x, y));
        }
        if let Ok(y) = cols[2].parse::<f64>() {
            norm.push((x, y));
        }
        if let Ok(y) = cols[3].parse::<f64>() {
            min_margin.push((x, y));
        }
        if let Ok(y) = cols[5].parse::<f64>() {
            q50.push((x, y));
        }
    }
    for (name, rows) in [
        ("risk", risk.clone()),
        ("norm", norm),
        ("min_margin", min_margin),
        ("q50_margin", q50),
    ] {
        Series {
            name: format!("{name}:{label}"),
            rows,
            out,
        }
        .flush();
    }

    // Overlays need the run record and the dataset's witness margin.
    let trajectory = match Trajectory::load_json(&sub.join("final.json")) {
        Ok(t) => t,
        Err(_) => return Ok(()),
    };
    let gamma = Dataset::load(sub, "dataset").map(|d| d.gamma()).ok();

    if trajectory.checkpoints.first().map(|ck| ck.w.len()) == Some(2) {
        let rows = trajectory
            .checkpoints
            .iter()
            .map(|ck| (ck.w[0], ck.w[1]))
            .collect();
        Series {
            name: format!("path:{label}"),
            rows,
            out,
        }
        .flush();
    }

    if let Some(gamma) = gamma {
        let curve: Option<Box<dyn Fn(f64) -> Option<f64>>> =
            match (&trajectory.config, trajectory.loss) {
                (RunConfig::Gd(c), Loss::Logistic) if c.eta == 1.0 => {
                    Some(Box::new(move |t: f64| {
                        marginlab::bounds::gd_logistic_risk_bound(gamma, t as usize).ok()
                    }))
                }
                (RunConfig::Flow(_), Loss::Exponential) => Some(Box::new(move |t: f64| {
                    marginlab::bounds::flow_risk_bound(gamma, t).ok()
                })),
                _ => None,
            };
        if let Some(curve) = curve {
            let rows = risk
                .iter()
                .filter(|(t, _)| *t > 0.0)
                .filter_map(|(t, _)| curve(*t).map(|b| (*t, b)))
                .collect();
            let name = format!("bound_risk:{label}");
            Series { name, rows, out }.flush();
        }
        let _ = Method::Flow; // method-specific overlays only, by design
    }
    Ok(())
}
