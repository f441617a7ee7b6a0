use std::path::Path;
use std::process::{Command, Output};

fn swingpinn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swingpinn"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SUBCOMMANDS: [&str; 7] = ["simulate", "gen-data", "train", "evaluate", "benchmark", "report", "pipeline"];

#[test]
fn help_documents_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let top = swingpinn(&["--help"], dir.path());
    assert_eq!(top.status.code(), Some(0));
    let text = String::from_utf8_lossy(&top.stdout).into_owned();
    for sub in SUBCOMMANDS {
        assert!(text.contains(sub), "{sub} missing from --help");
        let o = swingpinn(&[sub, "-h"], dir.path());
        assert_eq!(o.status.code(), Some(0));
        let help = String::from_utf8_lossy(&o.stdout).into_owned();
        // Every option line carries a description after the flag.
        for line in help.lines().filter(|l| l.trim_start().starts_with("--")) {
            let described = line.trim_start().split_once("  ").is_some_and(|(_, d)| !d.trim().is_empty());
            assert!(described, "{sub}: undocumented option `{}`", line.trim());
        }
    }
}

#[test]
fn simulate_writes_one_row_per_millisecond() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingpinn(&["simulate", "--dp7", "2.0", "--t-end", "2.0"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,delta1,delta2,delta3,delta4,delta7,delta9,omega1,omega2,omega3,omega4"
    );
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2001);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[2000][0], 2.0);
    assert!(rows.iter().all(|r| r.len() == 11 && r.iter().all(|v| v.is_finite())));
}

#[test]
fn simulate_without_disturbance_stays_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("zero.csv");
    let o = swingpinn(&["simulate", "--dp7", "0", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1..7].iter().all(|d| d.abs() < 10.0));
    }
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingpinn(&["simulate", "--dp7", "7.0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside the disturbance range"));
    assert_eq!(swingpinn(&["simulate"], dir.path()).status.code(), Some(2));
    assert_eq!(swingpinn(&["train", "--mode", "cnn"], dir.path()).status.code(), Some(2));
    assert_eq!(swingpinn(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_print_a_structured_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = swingpinn(&["evaluate", "--checkpoint", "missing.swpn", "--mode", "nn"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let line = stderr(&o).lines().last().unwrap().to_string();
    assert!(line.starts_with("E:io:"), "{line}");
}

#[test]
fn train_then_evaluate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = ["train", "--mode", "pinn", "--np", "5", "--nt", "9", "--seed", "0", "--epochs", "5", "--width", "8"];
    let o = swingpinn(&train, d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = d.join("runs/train/pinn-seed0");
    let report = std::fs::read_to_string(run.join("train_report.csv")).unwrap();
    assert!(report.starts_with("epoch,loss_x,loss_dt,loss_f,total,validation,lr,ms_per_epoch\n"));
    assert_eq!(report.lines().count(), 1 + 5);
    assert!(run.join("checkpoint.swpn").is_file());
    assert!(run.join("config.json").is_file());

    // A finished run is not overwritten without --resume.
    let again = swingpinn(&train, d);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("E:cli:"));
    assert_eq!(swingpinn(&[&train[..], &["--resume"]].concat(), d).status.code(), Some(0));

    let ckpt = run.join("checkpoint.swpn");
    let o = swingpinn(&["evaluate", "--checkpoint", ckpt.to_str().unwrap(), "--grid", "small"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let eval = d.join("runs/evaluate");
    let runs = std::fs::read_to_string(eval.join("accuracy_runs.csv")).unwrap();
    assert!(runs.starts_with("mode,seed,mse_delta1,"));
    assert!(runs.lines().nth(1).unwrap().starts_with("pinn,0,"));
    let bands = std::fs::read_to_string(eval.join("bands/pinn-seed0_power.csv")).unwrap();
    assert!(bands.starts_with("state,axis,grid_value,q0,q25,q50,q75,q100,mean"));
    assert_eq!(bands.lines().count(), 1 + 10 * 31);
    let share = std::fs::read_to_string(eval.join("screening.csv")).unwrap();
    assert_eq!(share.lines().count(), 1 + 201);
}

#[test]
fn pipeline_report_has_every_mode_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "pipeline", "--out", "p", "--seeds", "5", "--epochs", "3", "--width", "6", "--skip-benchmark", "--gnuplot",
    ];
    let o = swingpinn(&args, d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let runs = std::fs::read_to_string(d.join("p/report/accuracy_runs.csv")).unwrap();
    let rows: Vec<&str> = runs.lines().skip(1).collect();
    assert_eq!(rows.len(), 15);
    for (k, mode) in ["nn", "dtnn", "pinn"].iter().enumerate() {
        for seed in 0..5 {
            assert!(rows[5 * k + seed].starts_with(&format!("{mode},{seed},")));
        }
    }
    let curves = std::fs::read_to_string(d.join("p/report/validation_curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 15 * 3);
    assert!(d.join("p/report/validation.gp").is_file());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("p/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 5);
    assert_eq!(manifest["modes"], serde_json::json!(["nn", "dtnn", "pinn"]));
    assert_eq!(swingpinn(&args, d).status.code(), Some(1));
}
