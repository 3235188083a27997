use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hts-route"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("scenario.yaml");
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "num_modules: 2\nhorizon: 10\nwindow: 3\nnum_runs: 2\n";

#[test]
fn validate_accepts_defaults_and_rejects_bad_input() {
    let out = bin().arg("validate").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("num_modules: 16"));

    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "loss_costs: [10, 4]\n");
    let out = bin().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("loss_costs"));

    let typo = write_config(dir.path(), "horizon: 5\nhorizn: 6\n");
    let out = bin().args(["validate", "--config"]).arg(&typo).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn run_compare_and_sweep_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for (args, chart) in [
        (vec!["run", "--method", "static_batch"], "cumulative_cost.svg"),
        (vec!["compare", "--methods", "batch_hindsight,mpc(3)"], "losses.svg"),
        (vec!["sweep", "--windows", "1,3"], "window_sweep.svg"),
    ] {
        let out_dir = dir.path().join(args[0]);
        let out = bin().args(&args).arg("--config").arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join("summary.json").is_file());
        assert!(out_dir.join("timeseries.csv").is_file());
        assert!(out_dir.join(chart).is_file());
    }
}

#[test]
fn overrides_and_full_lp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |extra: &[&str], out: &str| {
        let o = dir.path().join(out);
        let status = bin()
            .args(["compare", "--methods", "batch_hindsight,mpc(3)", "--seed", "7", "--runs", "1"])
            .args(extra)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&o)
            .status()
            .unwrap();
        assert!(status.success());
        let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
        s
    };
    let sym = run(&[], "sym");
    let full = run(&["--full-lp"], "full");
    assert_eq!(sym["seed"], 7);
    assert_eq!(sym["num_runs"], 1);
    let a = sym["methods"][0]["mean_cost"].as_f64().unwrap();
    let b = full["methods"][0]["mean_cost"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()));
}

#[test]
fn bad_flags_exit_with_input_error() {
    let out = bin().args(["compare", "--methods", "mpc(0)"]).output().unwrap();
    assert_ne!(out.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = bin().args(["compare", "--runs", "0", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
