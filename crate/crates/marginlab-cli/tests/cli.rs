//! End-to-end tests of the command line contract: exit codes, reproducible
//! outputs, flag grammar, and the help text listing every flag.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn marginlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marginlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_lists_every_flag_with_defaults() {
    let top = marginlab(&["--help"]);
    assert_eq!(code(&top), 0);
    for sub in [
        "run",
        "verify",
        "lowerbound",
        "inittime",
        "sweep",
        "gen-error",
    ] {
        assert!(stdout(&top).contains(sub), "top help missing {sub}");
    }

    let run_help = stdout(&marginlab(&["run", "--help"]));
    for flag in [
        "--method",
        "--loss",
        "--gamma",
        "--m",
        "--d",
        "--steps",
        "--t-end",
        "--eta",
        "--seed",
        "--rel-tol",
        "--checkpoints",
        "--data-in",
        "--out",
        "--plot-data",
    ] {
        assert!(run_help.contains(flag), "run help missing {flag}");
    }
    assert!(
        run_help.contains("default: 0.25"),
        "gamma default not shown"
    );
    assert!(
        run_help.contains("default: 1000"),
        "steps default not shown"
    );

    let verify_help = stdout(&marginlab(&["verify", "--help"]));
    for flag in [
        "--in", "--bounds", "--gamma", "--alpha", "--p", "--b", "--c",
    ] {
        assert!(verify_help.contains(flag), "verify help missing {flag}");
    }
    let lb_help = stdout(&marginlab(&["lowerbound", "--help"]));
    for flag in ["--m", "--gamma", "--steps", "--eta", "--figure1", "--out"] {
        assert!(lb_help.contains(flag), "lowerbound help missing {flag}");
    }
    assert!(lb_help.contains("default: 64,256,1024"));
    let it_help = stdout(&marginlab(&["inittime", "--help"]));
    for flag in ["--gamma", "--epsilon", "--eta", "--horizon", "--out"] {
        assert!(it_help.contains(flag), "inittime help missing {flag}");
    }
    let sweep_help = stdout(&marginlab(&["sweep", "--help"]));
    assert!(sweep_help.contains("--config"));
    let gen_help = stdout(&marginlab(&["gen-error", "--help"]));
    for flag in ["--in", "--n-test", "--seed", "--use-averaged"] {
        assert!(gen_help.contains(flag), "gen-error help missing {flag}");
    }
}

#[test]
fn run_then_verify_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = marginlab(&[
        "run",
        "--method",
        "gd",
        "--loss",
        "logistic",
        "--gamma",
        "0.25",
        "--m",
        "80",
        "--steps",
        "2000",
        "--eta",
        "1",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    for name in [
        "config.json",
        "dataset.csv",
        "dataset.meta.json",
        "trajectory.csv",
        "final.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    let verify = marginlab(&[
        "verify",
        "--in",
        out.to_str().unwrap(),
        "--bounds",
        "gd_logistic_risk,norm,margin_quantile",
        "--p",
        "0.5",
    ]);
    assert_eq!(
        code(&verify),
        0,
        "{}",
        String::from_utf8_lossy(&verify.stderr)
    );
    assert!(out.join("reports/gd_logistic_risk.json").exists());
    assert!(out.join("reports/verify_config.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/norm.json")).unwrap()).unwrap();
    assert_eq!(report["satisfied"], serde_json::Value::Bool(true));
    assert_eq!(report["kind"], "norm");

    // Re-running on the saved dataset reproduces it byte for byte.
    let reuse = dir.path().join("reuse");
    let rerun = marginlab(&[
        "run",
        "--method",
        "gd",
        "--loss",
        "logistic",
        "--steps",
        "10",
        "--data-in",
        out.to_str().unwrap(),
        "--out",
        reuse.to_str().unwrap(),
    ]);
    assert_eq!(code(&rerun), 0);
    assert_eq!(
        fs::read(out.join("dataset.csv")).unwrap(),
        fs::read(reuse.join("dataset.csv")).unwrap()
    );
}

#[test]
fn flow_run_verifies_its_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("flow");
    let run = marginlab(&[
        "run",
        "--method",
        "flow",
        "--loss",
        "exp",
        "--gamma",
        "0.4",
        "--m",
        "50",
        "--t-end",
        "200",
        "--rel-tol",
        "1e-8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let verify = marginlab(&[
        "verify",
        "--in",
        out.to_str().unwrap(),
        "--bounds",
        "flow_risk,flow_monitor,flow_margin_fraction,norm",
        "--alpha",
        "0.5",
    ]);
    assert_eq!(code(&verify), 0, "{}", stdout(&verify));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reports/flow_monitor.json")).unwrap())
            .unwrap();
    assert_eq!(report["satisfied"], serde_json::Value::Bool(true));
    // Flow reports are informational: integrator error keeps them uncertified.
    assert_eq!(report["certified"], serde_json::Value::Bool(false));
}

#[test]
fn verify_precondition_only_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // gamma 0.1 at T=1000 fails the margin-fraction parameter box.
    let run = marginlab(&[
        "run",
        "--method",
        "gd",
        "--loss",
        "logistic",
        "--gamma",
        "0.1",
        "--m",
        "40",
        "--steps",
        "1000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0);
    let verify = marginlab(&[
        "verify",
        "--in",
        out.to_str().unwrap(),
        "--bounds",
        "gd_margin_fraction",
        "--alpha",
        "0.5",
    ]);
    assert_eq!(code(&verify), 2, "{}", stdout(&verify));
}

#[test]
fn tampered_run_fails_verification_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = marginlab(&[
        "run",
        "--method",
        "sgd",
        "--loss",
        "logistic",
        "--gamma",
        "0.25",
        "--m",
        "50",
        "--steps",
        "500",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0);
    // Forge an impossible iterate norm; the certified norm bound must trip.
    let final_path = out.join("final.json");
    let mut record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&final_path).unwrap()).unwrap();
    record["max_norm_seen"] = serde_json::json!(1e9);
    fs::write(&final_path, serde_json::to_string_pretty(&record).unwrap()).unwrap();

    let verify = marginlab(&[
        "verify",
        "--in",
        out.to_str().unwrap(),
        "--bounds",
        "sgd_norm",
    ]);
    assert_eq!(code(&verify), 1, "{}", stdout(&verify));
    assert!(stdout(&verify).contains("VIOLATED"));
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(
        code(&marginlab(&[
            "run", "--loss", "bogus", "--method", "gd", "--out", "x"
        ])),
        3
    );
    assert_eq!(code(&marginlab(&["run", "--unknown-flag"])), 3);
    assert_eq!(code(&marginlab(&["nonsense-subcommand"])), 3);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let run = marginlab(&[
        "run",
        "--method",
        "gd",
        "--loss",
        "logistic",
        "--m",
        "10",
        "--steps",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0);
    let verify = marginlab(&[
        "verify",
        "--in",
        out.to_str().unwrap(),
        "--bounds",
        "not_a_kind",
    ]);
    assert_eq!(code(&verify), 3);
}

#[test]
fn missing_input_exits_four() {
    let verify = marginlab(&["verify", "--in", "/nonexistent-dir", "--bounds", "norm"]);
    assert_eq!(code(&verify), 4);
    let gen = marginlab(&["gen-error", "--in", "/nonexistent-dir"]);
    assert_eq!(code(&gen), 4);
}

#[test]
fn rational_flags_parse_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("it");
    let run = marginlab(&[
        "inittime",
        "--gamma",
        "1/8",
        "--epsilon",
        "1/16",
        "--eta",
        "1",
        "--horizon",
        "100000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("inittime.json")).unwrap()).unwrap();
    assert_eq!(report["gamma"].as_f64().unwrap(), 0.125);
    assert_eq!(report["epsilon"].as_f64().unwrap(), 0.0625);
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let run = marginlab(&[
            "run",
            "--method",
            "sgd",
            "--loss",
            "logistic",
            "--gamma",
            "0.3",
            "--m",
            "30",
            "--steps",
            "300",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&run), 0);
    }
    assert_dirs_equal(&a, &b, &["config.json"]);
}

fn assert_dirs_equal(a: &Path, b: &Path, skip_names: &[&str]) {
    let mut names: Vec<String> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    for name in names {
        if skip_names.contains(&name.as_str()) {
            continue; // config echoes the output path itself
        }
        let fa = fs::read(a.join(&name)).unwrap();
        let fb = fs::read(b.join(&name)).unwrap();
        assert_eq!(fa, fb, "{name} differs between reruns");
    }
}

#[test]
fn lowerbound_and_figure1_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lb");
    let run = marginlab(&[
        "lowerbound",
        "--m",
        "260",
        "--gamma",
        "1/8",
        "--steps",
        "64",
        "--eta",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--plot-data",
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("reports/lowerbound_T64.json").exists());
    let plot = fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert!(plot.contains("risk:T64"));
    assert!(plot.contains("path:T64"), "2-D runs emit a coordinate path");
    assert!(plot.contains("bound_risk:T64"));

    let fig = dir.path().join("fig");
    let run = marginlab(&[
        "lowerbound",
        "--m",
        "100",
        "--steps",
        "200",
        "--figure1",
        "--out",
        fig.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0);
    assert!(fig.join("T200/trajectory.csv").exists());
    let meta = fs::read_to_string(fig.join("T200/dataset.meta.json")).unwrap();
    assert!(meta.contains("figure1"));
}

#[test]
fn sweep_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let cfg = serde_json::json!({
        "methods": ["gd"],
        "losses": ["logistic"],
        "gammas": [0.25],
        "ms": [40],
        "ts": [150.0],
        "eta": 1.0,
        "d": 4,
        "seeds": [1, 2],
        "bounds": [{"kind": "gd_logistic_risk"}],
        "output_dir": out,
    });
    let cfg_path = dir.path().join("sweep.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let sweep = marginlab(&["sweep", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(
        code(&sweep),
        0,
        "{}",
        String::from_utf8_lossy(&sweep.stderr)
    );
    let master = fs::read_to_string(out.join("master.csv")).unwrap();
    assert_eq!(master.lines().count(), 3);
    assert!(master.starts_with(
        "method,loss,gamma,m,T,eta,seed,final_risk,max_norm,min_margin,gen_error,gen_halfwidth,bounds_satisfied_count,bounds_total"
    ));
}

#[test]
fn gen_error_on_witness_aligned_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = marginlab(&[
        "run",
        "--method",
        "gd",
        "--loss",
        "logistic",
        "--gamma",
        "0.4",
        "--m",
        "60",
        "--steps",
        "3000",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&run), 0);
    let gen = marginlab(&[
        "gen-error",
        "--in",
        out.to_str().unwrap(),
        "--n-test",
        "5000",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("gen_error.json")).unwrap()).unwrap();
    assert!(report["error_rate"].as_f64().unwrap() <= 0.05);
}
