//! CLI integration: argument parsing, end-to-end runs against generated
//! data, and output determinism.

use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::OnceLock;

use trimsgd::data::DatasetName;
use trimsgd_cli::{parse_cli, Command};

fn fixture_root() -> &'static PathBuf {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        if let Ok(dir) = std::env::var("TRIMSGD_DATA_DIR") {
            return PathBuf::from(dir);
        }
        let root = std::env::temp_dir().join("trimsgd-test-fixtures");
        trimsgd::synth::ensure_fixture(&root, DatasetName::Mnist).expect("fixture generation");
        root
    })
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
            "dataset": "mnist", "arch": "nn2", "optimizer": "sgd",
            "eta0": 0.01, "lr_schedule": "sigmoid", "batch_size": 32,
            "epochs": 2, "momentum": 0.9, "weight_decay": 0.0,
            "rho": 0.1, "eps": 0.2, "trim_schedule": "linear",
            "trials": 2, "base_seed": 7, "train_subset": 256
        }"#,
    )
    .unwrap();
    path
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_trimsgd"))
}

#[test]
fn parse_train_with_one_override() {
    let cli = parse_cli(["trimsgd", "train", "--config", "c.json", "--set", "rho=0.1"]).unwrap();
    match cli.command {
        Command::Train(args) => {
            assert_eq!(args.config, PathBuf::from("c.json"));
            assert_eq!(args.set, vec!["rho=0.1".to_string()]);
            assert_eq!(args.jobs, 1);
        }
        other => panic!("parsed wrong subcommand: {other:?}"),
    }
}

#[test]
fn unknown_flag_is_a_usage_error_naming_the_token() {
    let err = parse_cli(["trimsgd", "train", "--config", "c.json", "--bogus-flag"]).unwrap_err();
    assert!(err.to_string().contains("--bogus-flag"), "{err}");
}

#[test]
fn all_subcommands_parse() {
    for sub in ["train", "compare", "sweep", "histogram"] {
        parse_cli(["trimsgd", sub, "--config", "c.json"]).unwrap();
    }
    parse_cli(["trimsgd", "plot", "some.csv", "--log-y"]).unwrap();
}

#[test]
fn bogus_set_key_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let output = binary()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--set", "bogus_key=1"])
        .arg("--data-dir")
        .arg(fixture_root())
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("bogus_key"), "{stderr}");
}

#[test]
fn train_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());

    let run = |out: &Path, jobs: &str| {
        let output = binary()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--data-dir")
            .arg(fixture_root())
            .arg("--out")
            .arg(out)
            .args(["--jobs", jobs])
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };

    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    run(&out1, "1");
    run(&out2, "4");

    for file in ["results.csv", "metadata.json", "curves.svg"] {
        let a = std::fs::read(out1.join(file)).unwrap();
        let b = std::fs::read(out2.join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between jobs=1 and jobs=4");
    }
}

#[test]
fn plot_renders_results_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("out");
    let status = binary()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--data-dir")
        .arg(fixture_root())
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let results = out.join("results.csv");
    let plot = |out_dir: &Path| {
        let status = binary()
            .arg("plot")
            .arg(&results)
            .arg("--out")
            .arg(out_dir)
            .args(["--column", "test_loss"])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out_dir.join("plot.svg")).unwrap()
    };
    let a = plot(&dir.path().join("p1"));
    let b = plot(&dir.path().join("p2"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("<polyline"));
    assert!(text.contains(">results</text>"), "legend uses the file stem");
}

#[test]
fn histogram_writes_conserved_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = dir.path().join("hist-out");
    let output = binary()
        .args(["histogram", "--config"])
        .arg(&config)
        .arg("--data-dir")
        .arg(fixture_root())
        .arg("--out")
        .arg(&out)
        .args(["--bins", "24"])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let csv = std::fs::read_to_string(out.join("histogram.csv")).unwrap();
    let mut sum_orig = 0u64;
    let mut sum_noised = 0u64;
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        sum_orig += cells[2].parse::<u64>().unwrap();
        sum_noised += cells[3].parse::<u64>().unwrap();
    }
    // training view is the 256-example subset
    assert_eq!(sum_orig, 256);
    assert_eq!(sum_noised, 256);
    assert!(out.join("histogram.svg").exists());
    assert!(out.join("histogram-model.tgm").exists());

    // re-running against the saved checkpoint skips training
    let output = binary()
        .args(["histogram", "--config"])
        .arg(&config)
        .arg("--data-dir")
        .arg(fixture_root())
        .arg("--out")
        .arg(dir.path().join("hist-out2"))
        .arg("--checkpoint")
        .arg(out.join("histogram-model.tgm"))
        .args(["--bins", "24"])
        .output()
        .unwrap();
    assert!(output.status.success());
}

#[test]
fn sweep_emits_grid_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
            "dataset": "mnist", "arch": "nn2", "optimizer": "sgd",
            "eta0": 0.01, "lr_schedule": "sigmoid", "batch_size": 32,
            "epochs": 1, "momentum": 0.9, "weight_decay": 0.0,
            "rho": 0.0, "eps": 0.0, "trim_schedule": "linear",
            "trials": 1, "base_seed": 7, "train_subset": 128,
            "rho_grid": [0.0, 0.1], "eps_grid": [0.2]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("sweep-out");
    let output = binary()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--data-dir")
        .arg(fixture_root())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("rho,eps,mean_test_loss,min_test_loss"));
    assert!(out.join("sweep.svg").exists());
}

#[test]
fn missing_config_fails_with_nonzero_exit() {
    let output = binary()
        .args(["train", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}
