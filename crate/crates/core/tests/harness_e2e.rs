mod common;

use std::process::Command;

use hopest::channel::ChannelProfile;
use hopest::harness::{
    read_csv, run_sweep, run_trial, write_csv, EstimatorChoice, EstimatorTag, ExperimentConfig, NmseRecord,
};

fn quick(profile: ChannelProfile, f_d: f64) -> ExperimentConfig {
    ExperimentConfig {
        profile: Some(profile),
        f_d,
        n_t: 24,
        n_trials: 6,
        ..ExperimentConfig::default()
    }
}

#[test]
fn noiseless_static_two_tap_is_exact() {
    // 0 and 500 ns at 10 MHz: integer delays 0 and 5 samples
    let profile = ChannelProfile::from_taps(vec![0.0, 500.0], vec![0.0, -3.0], 10e6).unwrap();
    let cfg = quick(profile, 0.0);
    for seed in 0..3 {
        let out = run_trial(&cfg, 300.0, seed).unwrap();
        let ph = out.ph.unwrap().unwrap();
        assert!(ph.err < 1e-12 * ph.energy, "{} vs {}", ph.err, ph.energy);
    }
}

#[test]
fn flat_static_channel_both_exact() {
    let flat = ChannelProfile::from_taps(vec![0.0], vec![0.0], 10e6).unwrap();
    let out = run_trial(&quick(flat, 0.0), 300.0, 4).unwrap();
    let ph = out.ph.unwrap().unwrap();
    let ll = out.ll.unwrap();
    assert!(ph.err < 1e-12 * ph.energy);
    assert!(ll.err < 1e-12 * ll.energy);
}

#[test]
fn flat_channel_ph_not_worse_than_ll() {
    // PH fits a few support taps from every pilot of the window, LL averages two
    let flat = ChannelProfile::from_taps(vec![0.0], vec![0.0], 10e6).unwrap();
    let cfg = ExperimentConfig {
        snr_db_list: vec![10.0, 30.0],
        ..quick(flat, 0.0)
    };
    let recs = run_sweep(&cfg).unwrap();
    for snr in [10.0, 30.0] {
        let get = |tag| {
            recs.iter()
                .find(|r| r.estimator == tag && r.snr_db == snr)
                .unwrap()
                .nmse_db
        };
        assert!(get(EstimatorTag::Ph) <= get(EstimatorTag::Ll) + 0.5);
    }
}

#[test]
fn sweep_is_deterministic() {
    let cfg = ExperimentConfig {
        n_t: 16,
        n_trials: 4,
        snr_db_list: vec![5.0, 25.0],
        ..ExperimentConfig::default()
    };
    assert_eq!(run_sweep(&cfg).unwrap(), run_sweep(&cfg).unwrap());
    common::prop_csv_deterministic(17).unwrap();
}

#[test]
fn ph_nmse_falls_with_snr() {
    let cfg = ExperimentConfig {
        n_t: 96,
        n_trials: 10,
        snr_db_list: vec![0.0, 10.0, 20.0, 30.0],
        estimator: EstimatorChoice::Ph,
        ..ExperimentConfig::default()
    };
    let recs = run_sweep(&cfg).unwrap();
    for w in recs.windows(2) {
        assert!(w[1].nmse_db <= w[0].nmse_db + w[0].ci95_db + w[1].ci95_db, "{recs:?}");
    }
}

fn record(tag: EstimatorTag, snr: f64) -> NmseRecord {
    NmseRecord {
        estimator: tag,
        snr_db: snr,
        f_d_hz: 200.0,
        n_t: 192,
        n_sch: 20,
        nmse_db: -17.123456789012345,
        trials: 100,
        ci95_db: 0.25,
    }
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");

    write_csv(&[], &path).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        "estimator,snr_db,f_d_hz,n_t,n_sch,nmse_db,trials,ci95_db\n"
    );
    assert!(read_csv(&path).unwrap().is_empty());

    let recs = vec![record(EstimatorTag::Ph, 30.0), record(EstimatorTag::Ll, 5.0)];
    write_csv(&recs, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("LL,5.0,"));
    let back = read_csv(&path).unwrap();
    assert_eq!(back, vec![recs[1].clone(), recs[0].clone()]);

    let missing = dir.path().join("no/such/dir/out.csv");
    let err = write_csv(&recs, &missing).unwrap_err().to_string();
    assert!(err.contains("no/such/dir"), "{err}");
}

#[test]
fn cli_simulate_and_estimate() {
    let bin = env!("CARGO_BIN_EXE_hopest");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let run = Command::new(bin)
        .args([
            "simulate",
            "--snr-list",
            "10,20",
            "--n-t",
            "8",
            "--n-sch",
            "4",
            "--trials",
            "2",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success());
    assert_eq!(read_csv(&out).unwrap().len(), 4);

    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(
        &cfg_path,
        "n_t = 8\nn_sch = 4\ntrials = 2\nsnr_db = [15.0]\nestimator = \"ph\"\n",
    )
    .unwrap();
    let out = Command::new(bin)
        .args(["estimate", "--dump-delays", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    let rec: hopest::estimator::DelayRecord = line.trim().parse().unwrap();
    assert!(rec.eta_hat > 0.0 && rec.eta_hat <= 1.0);
    assert_eq!(rec.taus.len(), rec.order);

    let bad = Command::new(bin).args(["simulate", "--n-sch", "99"]).output().unwrap();
    assert!(!bad.status.success());
    let bad = Command::new(bin)
        .args(["simulate", "--config", "/nonexistent/exp.toml"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
