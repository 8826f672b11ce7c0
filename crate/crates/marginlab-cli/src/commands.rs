//! Subcommand implementations. Every command echoes its fully-resolved
//! configuration into its output directory and writes only reproducible
//! content (no timestamps), so re-runs with identical flags are
//! byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use marginlab::bounds::{BoundQuery, BoundReport};
use marginlab::experiment::{DistributionSpec, SampleLaw, SweepConfig};
use marginlab::optim::{FlowConfig, GdConfig, SgdConfig};
use marginlab::{
    adversarial_dataset, certify, estimate_generalization, figure1_dataset, generate_separable,
    inittime_check, run_flow, run_gd, run_sgd, Dataset, Error, Loss, Trajectory,
};

use crate::plot::emit_plot_data;
use crate::{
    CliError, GenErrorArgs, InittimeArgs, LowerboundArgs, RunArgs, SweepArgs, VerifyArgs, EXIT_OK,
    EXIT_PRECONDITION, EXIT_VIOLATED,
};

type CmdResult = Result<u8, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    fs::write(
        path,
        serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn run(args: RunArgs) -> CmdResult {
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(e.to_string()))?;

    let dataset = match &args.data_in {
        Some(dir) => Dataset::load(dir, "dataset")?,
        None => generate_separable(args.m, args.d, args.gamma, args.seed)
            .map_err(|e| usage(e.to_string()))?,
    };
    dataset.save(out, "dataset")?;

    let trajectory = match args.method.as_str() {
        "gd" => run_gd(
            &dataset,
            args.loss,
            &GdConfig {
                eta: args.eta,
                steps: args.steps,
            },
        )?,
        "sgd" => run_sgd(
            &dataset,
            args.loss,
            &SgdConfig {
                eta: args.eta,
                steps: args.steps,
                seed: args.seed,
            },
        )?,
        "flow" => run_flow(
            &dataset,
            args.loss,
            &FlowConfig {
                t_end: args.t_end,
                rel_tol: args.rel_tol,
                checkpoints: args.checkpoints,
            },
        )?,
        other => {
            return Err(usage(format!(
                "unknown method {other:?}; expected flow, gd or sgd"
            )))
        }
    };

    write_json(
        &out.join("config.json"),
        &json!({
            "subcommand": "run",
            "method": args.method,
            "loss": args.loss,
            "gamma": args.gamma,
            "m": dataset.m(),
            "d": dataset.dim(),
            "steps": args.steps,
            "t_end": args.t_end,
            "eta": args.eta,
            "seed": args.seed,
            "rel_tol": args.rel_tol,
            "checkpoints": args.checkpoints,
            "data_in": args.data_in,
            "out": out,
        }),
    )?;
    trajectory.write_csv(&dataset, &out.join("trajectory.csv"))?;
    trajectory.save_json(&out.join("final.json"))?;

    println!(
        "run {} {} on {}: final risk {:.6e}, max norm {:.6}",
        args.method,
        args.loss,
        dataset.tag(),
        trajectory.final_risk(),
        trajectory.max_norm_seen
    );
    if args.plot_data {
        emit_plot_data(out)?;
    }
    Ok(EXIT_OK)
}

/// Shared by verify/sweep outcomes: fold report flags into an exit code.
pub(crate) fn exit_from_outcomes(reports: &[BoundReport], preconditions_hit: usize) -> u8 {
    let violated = reports.iter().any(|r| r.certified && !r.satisfied);
    if violated {
        EXIT_VIOLATED
    } else if preconditions_hit > 0 {
        EXIT_PRECONDITION
    } else {
        EXIT_OK
    }
}

pub fn verify(args: VerifyArgs) -> CmdResult {
    let dir = &args.input;
    let dataset = Dataset::load(dir, "dataset")?;
    let trajectory = Trajectory::load_json(&dir.join("final.json"))?;
    let gamma = args.gamma.unwrap_or_else(|| dataset.gamma());

    let reports_dir = dir.join("reports");
    fs::create_dir_all(&reports_dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(
        &reports_dir.join("verify_config.json"),
        &json!({
            "subcommand": "verify",
            "in": dir,
            "bounds": args.bounds,
            "gamma": gamma,
            "alpha": args.alpha,
            "p": args.p,
            "b": args.b,
            "c": args.c,
        }),
    )?;

    let mut reports = Vec::new();
    let mut preconditions_hit = 0usize;
    for kind in &args.bounds {
        let query = BoundQuery::build(kind, gamma, args.alpha, args.p, args.b, args.c)
            .map_err(|e| usage(e.to_string()))?;
        match certify(&trajectory, &dataset, &query) {
            Ok(report) => {
                println!(
                    "{kind}: {} (theoretical {:.6e}, empirical {:.6e}{})",
                    if report.satisfied {
                        "satisfied"
                    } else {
                        "VIOLATED"
                    },
                    report.theoretical,
                    report.empirical,
                    if report.certified {
                        ""
                    } else {
                        ", not certified"
                    },
                );
                write_json(
                    &reports_dir.join(format!("{kind}.json")),
                    &serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
                )?;
                reports.push(report);
            }
            Err(Error::PreconditionNotMet(msg)) => {
                println!("{kind}: precondition not met ({msg})");
                preconditions_hit += 1;
            }
            Err(Error::IncompatibleQuery(msg)) | Err(Error::WrongMethod { got: msg, .. }) => {
                return Err(usage(format!("{kind}: {msg}")));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(exit_from_outcomes(&reports, preconditions_hit))
}

pub fn lowerbound(args: LowerboundArgs) -> CmdResult {
    let out = &args.out;
    fs::create_dir_all(out.join("reports")).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(
        &out.join("config.json"),
        &json!({
            "subcommand": "lowerbound",
            "m": args.m,
            "gamma": args.gamma,
            "steps": args.steps,
            "eta": args.eta,
            "figure1": args.figure1,
            "out": out,
        }),
    )?;

    if !(args.eta > 0.0 && args.eta <= 1.0) {
        return Err(usage(format!("eta {} outside (0, 1]", args.eta)));
    }

    let mut reports = Vec::new();
    for &steps in &args.steps {
        let sub = out.join(format!("T{steps}"));
        fs::create_dir_all(&sub).map_err(|e| CliError::Runtime(e.to_string()))?;
        let (dataset, meta) = if args.figure1 {
            figure1_dataset(args.m).map_err(|e| usage(e.to_string()))?
        } else {
            adversarial_dataset(args.m, args.gamma, steps).map_err(|e| usage(e.to_string()))?
        };
        dataset.save(&sub, "dataset")?;
        let trajectory = run_gd(
            &dataset,
            Loss::Logistic,
            &GdConfig {
                eta: args.eta,
                steps,
            },
        )?;
        trajectory.write_csv(&dataset, &sub.join("trajectory.csv"))?;
        trajectory.save_json(&sub.join("final.json"))?;
        if args.figure1 {
            println!(
                "T={steps}: figure-1 illustration (minority fraction {}), no certification",
                meta.epsilon
            );
            continue;
        }
        let report = certify(
            &trajectory,
            &dataset,
            &BoundQuery::LowerboundViolations { gamma: args.gamma },
        )?;
        println!(
            "T={steps}: guaranteed {} misclassified, observed {} -> {}",
            report.theoretical,
            report.empirical,
            if report.satisfied {
                "satisfied"
            } else {
                "VIOLATED"
            }
        );
        write_json(
            &out.join("reports")
                .join(format!("lowerbound_T{steps}.json")),
            &serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
        )?;
        reports.push(report);
    }
    if args.plot_data {
        emit_plot_data(out)?;
    }
    Ok(exit_from_outcomes(&reports, 0))
}

pub fn inittime(args: InittimeArgs) -> CmdResult {
    let out = &args.out;
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_json(
        &out.join("config.json"),
        &json!({
            "subcommand": "inittime",
            "gamma": args.gamma,
            "epsilon": args.epsilon,
            "eta": args.eta,
            "horizon": args.horizon,
            "out": out,
        }),
    )?;
    let report = inittime_check(args.gamma, args.epsilon, args.eta, args.horizon)
        .map_err(|e| usage(e.to_string()))?;
    write_json(
        &out.join("inittime.json"),
        &serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    match report.crossing {
        Some(t) => println!(
            "lock-in at t={} (<= {:.2}), crossing at t={t} (bound {:.2}) -> {}",
            report.t_init,
            report.t_init_bound,
            report.crossing_bound,
            if report.passed { "passed" } else { "FAILED" }
        ),
        None => println!(
            "lock-in at t={} (<= {:.2}), no crossing within horizon -> {}",
            report.t_init,
            report.t_init_bound,
            if report.passed { "passed" } else { "FAILED" }
        ),
    }
    Ok(if report.passed {
        EXIT_OK
    } else {
        EXIT_VIOLATED
    })
}

pub fn sweep(args: SweepArgs) -> CmdResult {
    let cfg = SweepConfig::load(&args.config).map_err(|e| usage(e.to_string()))?;
    let out = marginlab::run_sweep(&cfg)?;
    // Fold the written reports into the exit-code contract.
    let mut reports = Vec::new();
    for entry in fs::read_dir(out.join("reports")).map_err(|e| CliError::Runtime(e.to_string()))? {
        let entry = entry.map_err(|e| CliError::Runtime(e.to_string()))?;
        let text =
            fs::read_to_string(entry.path()).map_err(|e| CliError::Runtime(e.to_string()))?;
        if let Ok(report) = serde_json::from_str::<BoundReport>(&text) {
            reports.push(report);
        }
    }
    let status = fs::read_to_string(out.join("status.csv")).unwrap_or_default();
    let preconditions_hit = status.matches("precondition not met").count();
    println!(
        "sweep complete: {} reports, {} satisfied, {} precondition rows -> {}",
        reports.len(),
        reports.iter().filter(|r| r.satisfied).count(),
        preconditions_hit,
        out.display()
    );
    if args.plot_data {
        // Sweeps write no trajectory CSVs; missing inputs are fine here.
        let _ = emit_plot_data(&out);
    }
    Ok(exit_from_outcomes(&reports, preconditions_hit))
}

pub fn gen_error(args: GenErrorArgs) -> CmdResult {
    let dir = &args.input;
    let dataset = Dataset::load(dir, "dataset")?;
    let trajectory = Trajectory::load_json(&dir.join("final.json"))?;
    let w: &[f64] = if args.use_averaged {
        trajectory
            .averaged_w
            .as_deref()
            .ok_or_else(|| usage("run has no averaged iterate; drop --use-averaged"))?
    } else {
        &trajectory.final_w
    };
    let dist = DistributionSpec::new(
        dataset.witness().to_vec(),
        dataset.gamma(),
        SampleLaw::BallRejection,
        dataset.tag(),
    )?;
    let est = estimate_generalization(w, &dist, args.n_test, args.seed)?;
    write_json(
        &dir.join("gen_error.json"),
        &json!({
            "subcommand": "gen-error",
            "n_test": est.n_test,
            "seed": args.seed,
            "use_averaged": args.use_averaged,
            "error_rate": est.error_rate,
            "wilson_halfwidth": est.wilson_halfwidth,
        }),
    )?;
    println!(
        "generalization error {:.6e} +- {:.2e} (95% Wilson, n={})",
        est.error_rate, est.wilson_halfwidth, est.n_test
    );
    Ok(EXIT_OK)
}

pub(crate) fn read_dir_sorted(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}
