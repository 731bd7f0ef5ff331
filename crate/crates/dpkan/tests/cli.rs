//! End-to-end checks of the `dpkan` binary surface.

use std::path::Path;
use std::process::Command;

fn dpkan() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpkan"))
}

fn stdout_of(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = dpkan().arg("foo").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn accountant_prints_anchor_epsilon() {
    let out = dpkan()
        .args([
            "accountant",
            "--sigma",
            "1.0",
            "--batch-size",
            "64",
            "--dataset-size",
            "60000",
            "--epochs",
            "15",
            "--delta",
            "1e-5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_of(&out);
    let eps: f64 = text
        .trim()
        .strip_prefix("epsilon = ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.78..=0.96).contains(&eps), "{text}");
}

#[test]
fn accountant_calibrates_sigma() {
    let out = dpkan()
        .args([
            "accountant",
            "--target-epsilon",
            "0.87",
            "--batch-size",
            "64",
            "--dataset-size",
            "60000",
            "--epochs",
            "15",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let sigma: f64 = stdout_of(&out)
        .trim()
        .strip_prefix("sigma = ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.90..=1.10).contains(&sigma), "{sigma}");
}

#[test]
fn accountant_requires_exactly_one_mode() {
    let out = dpkan()
        .args([
            "accountant",
            "--batch-size",
            "64",
            "--dataset-size",
            "60000",
            "--epochs",
            "15",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

fn write_config(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn gen_synthetic_then_train_noiseless_linear_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let out = dpkan()
        .args([
            "gen-synthetic",
            "--n",
            "512",
            "--d",
            "2",
            "--noise",
            "0",
            "--seed",
            "1",
            "--out",
        ])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let config = dir.path().join("train.cfg");
    write_config(
        &config,
        &format!(
            "version = 1\n\
             task = regression\n\
             model = linear\n\
             widths = 2,1\n\
             data = csv\n\
             csv_path = {}\n\
             csv_target = y\n\
             standardize = false\n\
             private = false\n\
             epochs = 300\n\
             learning_rate = 0.05\n\
             batch_size = 128\n\
             weight_decay = 0\n",
            csv.display()
        ),
    );
    let run_dir = dir.path().join("run");
    let out = dpkan()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = dpkan::experiment::RunReport::parse(&stdout_of(&out)).unwrap();
    assert!(
        (report.mean - 1.0).abs() < 1e-6,
        "noiseless linear fit: r2 {}",
        report.mean
    );
    assert!(run_dir.join("report.txt").exists());
    assert!(run_dir.join("log_trial0.txt").exists());

    // The saved model evaluates on the same CSV.
    let out = dpkan()
        .args(["evaluate", "--model"])
        .arg(run_dir.join("model_trial0.bin"))
        .arg("--data")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_of(&out);
    let r2: f64 = text.trim().strip_prefix("r2 = ").unwrap().parse().unwrap();
    assert!(r2 > 0.999, "{text}");
}

#[test]
fn train_rejects_bad_config_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    write_config(&config, "version = 1\nbogus_key = 3\n");
    let out = dpkan()
        .args(["train", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.contains("bogus_key"), "{err}");
}

#[test]
fn seed_override_changes_the_report_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("train.cfg");
    write_config(
        &config,
        "version = 1\ntask = regression\nmodel = linear\nwidths = 2,1\n\
         data = synthetic\nsynthetic_n = 64\nsynthetic_d = 2\nsynthetic_noise = 0.1\n\
         private = false\nepochs = 1\nlearning_rate = 0.05\nbatch_size = 16\n",
    );
    let out = dpkan()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--seed", "99"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = dpkan::experiment::RunReport::parse(&stdout_of(&out)).unwrap();
    assert_eq!(report.seeds, vec![99]);
}
