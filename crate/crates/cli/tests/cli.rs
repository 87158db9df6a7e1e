use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "epochs = 2\nbatch_size = 64\nhidden_main = 8\nhidden_disc = 8\n\
                    n_train = 400\nn_dev = 100\nn_test = 200\nseed = 7\nprobe_epochs = 3\nleakage_repeats = 2\n";

fn fairadv(args: &[&str], dir: &Path) -> Output {
    let conf = dir.join("tiny.conf");
    if !conf.exists() {
        fs::write(&conf, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_fairadv"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<String> {
    fs::read_to_string(dir.join(name)).unwrap().lines().map(String::from).collect()
}

#[test]
fn train_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairadv(
        &["train", "-q", "--config", "tiny.conf", "--method", "adv_ensemble", "--n-seeds", "2", "--out", "r.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(dir.path(), "r.csv");
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("method,seed,lambda_adv,lambda_diff,k,"));
    assert!(rows[1].starts_with("adv_ensemble,7,"));
    assert!(rows[2].starts_with("adv_ensemble,8,"));
}

#[test]
fn train_appends_under_matching_header() {
    let dir = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        let out = fairadv(&["train", "-q", "--config", "tiny.conf", "--out", "r.csv"], dir.path());
        assert!(out.status.success());
    }
    let rows = read(dir.path(), "r.csv");
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1].rsplit_once(',').unwrap().0, rows[2].rsplit_once(',').unwrap().0);
}

#[test]
fn sweep_rows_carry_grid_text() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairadv(
        &[
            "sweep", "-q", "--config", "tiny.conf", "--method", "adv_single", "--n-seeds", "2",
            "--sweep-param", "lambda_adv", "--sweep-grid", "10^-1,1,10^1.5", "--workers", "2", "--out", "s.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(dir.path(), "s.csv");
    assert_eq!(rows.len(), 7);
    let values: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["10^-1", "10^-1", "1", "1", "10^1.5", "10^1.5"]);
    assert!(rows[5].starts_with("lambda_adv,10^1.5,ok,adv_single,7,31.62"));
}

#[test]
fn bad_configuration_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.conf"), "lambda_adv = 1\nwidth = 3\n").unwrap();
    let out = fairadv(&["train", "--config", "bad.conf"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));
    let out = fairadv(&["train", "--config", "tiny.conf", "--k", "many"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = fairadv(&["train", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_data_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairadv(&["train", "--config", "tiny.conf", "--data-source", "file:absent.txt"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn generated_data_trains_like_synthetic() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairadv(&["gen-data", "--config", "tiny.conf", "--out", "data.txt"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = fairadv(&["train", "-q", "--config", "tiny.conf", "--out", "a.csv"], dir.path());
    let b = fairadv(
        &["train", "-q", "--config", "tiny.conf", "--data-source", "file:data.txt", "--out", "b.csv"],
        dir.path(),
    );
    assert!(a.status.success() && b.status.success());
    let strip = |rows: Vec<String>| rows.into_iter().map(|r| r.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(read(dir.path(), "a.csv")), strip(read(dir.path(), "b.csv")));
}

#[test]
fn checkpoint_probe_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairadv(
        &["train", "-q", "--config", "tiny.conf", "--history", "true", "--out", "r.csv", "--checkpoint-dir", "ckpt"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "r.csv.history.csv").len(), 3);
    let out = fairadv(
        &["probe", "--config", "tiny.conf", "--checkpoint", "ckpt/diff_ensemble_seed7.ckpt", "--out", "p.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(dir.path(), "p.csv");
    assert_eq!(rows[0], "leakage_h,leakage_h_std,leakage_yhat,leakage_yhat_std");
    let v: Vec<f64> = rows[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
}

#[test]
fn inlp_rows_report_zero_lambdas() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairadv(&["train", "-q", "--config", "tiny.conf", "--method", "inlp", "--out", "r.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read(dir.path(), "r.csv")[1].starts_with("inlp,7,0,0,0,"));
}
