use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fresh-sense"))
        .args(args)
        .output()
        .expect("spawn fresh-sense")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--set",
    "n_trials=50",
    "--set",
    "n_h0_trials=200",
    "--set",
    "n_calibration_trials=5000",
];

#[test]
fn caf_default_grid_shows_bpsk_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("caf.csv");
    let o = bin(&["caf", "--n-samples", "8000", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect();
    assert_eq!(text.lines().next(), Some("alpha_hz,lag,re,im,magnitude"));
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut top: Vec<f64> = rows[..3].iter().map(|r| r.0).collect();
    top.sort_by(f64::total_cmp);
    assert_eq!(top, vec![58_240.0, 61_440.0, 64_640.0]);
}

#[test]
fn sweep_is_deterministic_and_reuses_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.csv");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let mut args = vec![
        "sweep",
        "--method",
        "energy-known",
        "--method",
        "cyclo-direct",
        "--n-samples",
        "800",
        "--snr-grid",
        "-4,-12",
        "--calibration",
        s(&cal),
        "--out",
        s(&a),
    ];
    args.extend_from_slice(SMALL);
    let o = bin(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cal_text = std::fs::read_to_string(&cal).unwrap();
    assert_eq!(cal_text.lines().count(), 3);

    let pos = args.iter().position(|x| *x == s(&a)).unwrap();
    args[pos] = s(&b);
    let o = bin(&args);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(&cal).unwrap(), cal_text);

    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("method,n_samples,snr_db,pd,pf,lambda,n_trials,seed")
    );
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn different_seed_changes_output() {
    let run = |seed: &str| {
        let mut args = vec![
            "sweep",
            "--method",
            "energy-known",
            "--n-samples",
            "800",
            "--snr-grid",
            "-12",
            "--seed",
            seed,
        ];
        args.extend_from_slice(SMALL);
        let o = bin(&args);
        assert!(o.status.success());
        o.stdout
    };
    assert_eq!(run("3"), run("3"));
    assert_ne!(run("3"), run("4"));
}

#[test]
fn calibrate_writes_store() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("thresholds.csv");
    let mut args = vec![
        "calibrate",
        "--method",
        "energy-uncertain",
        "--n-samples",
        "800,1600",
        "--calibration",
        s(&cal),
    ];
    args.extend_from_slice(SMALL);
    let o = bin(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&cal).unwrap();
    assert!(text.starts_with("pf_target,lambda,n_trials,spec_hash,seed"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn mse_state_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("w.state");
    let out = dir.path().join("mse.csv");
    let base = [
        "--set",
        "mse_iterations=600",
        "--set",
        "mse_runs=2",
        "--set",
        "mu_grid=5e-5",
        "--set",
        "n_taps=8",
    ];
    let mut args = vec!["mse", "--save-state", s(&state), "--out", s(&out)];
    args.extend_from_slice(&base);
    let o = bin(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        csv.lines().next(),
        Some("mu,iteration,time_averaged_mse,diverged")
    );
    assert_eq!(csv.lines().count(), 601);

    let o = bin(&["state", s(&state)]);
    assert!(o.status.success());
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("sample_index 600"));
    assert_eq!(summary.matches("branch ").count(), 6);

    let resumed = dir.path().join("resumed.csv");
    let mut args = vec!["mse", "--resume", s(&state), "--out", s(&resumed)];
    args.extend_from_slice(&base);
    let o = bin(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&resumed).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",601,"));
}

#[test]
fn exit_codes() {
    let o = bin(&["sweep", "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = bin(&["sweep", "--preset", "fig9"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\nseed = 2\n").unwrap();
    let o = bin(&["sweep", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));

    let o = bin(&["state", s(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(4));

    let o = bin(&[
        "mse",
        "--set",
        "mse_iterations=3000",
        "--set",
        "mse_runs=1",
        "--set",
        "mu_grid=10",
        "--set",
        "step_size=10",
        "--save-state",
        s(&dir.path().join("x.state")),
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
