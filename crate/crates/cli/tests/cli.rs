//! End-to-end runs of the `smpnn` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use smpnn::io::RunManifest;

fn smpnn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smpnn"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("SMPNN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Values of a CSV column, by header name.
fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    let idx = header
        .iter()
        .position(|h| *h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    lines
        .map(|l| l.split(',').nth(idx).expect("cell").to_string())
        .collect()
}

/// The line printed to stderr on failure.
fn error_code(o: &Output) -> Option<i32> {
    let line = stderr(o).lines().last()?.to_string();
    let rest = line.strip_prefix("error kind=")?;
    rest.split_once(" code=")?.1.split_once(':')?.0.parse().ok()
}

#[test]
fn grad_check_example_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpnn(
        &[
            "grad-check",
            "--depth",
            "3",
            "--nodes",
            "12",
            "--dim",
            "4",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("grad_check.csv")).unwrap();
    let errs: Vec<f64> = column(&csv, "rel_err")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    assert!(!errs.is_empty());
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-5, "max relative error {worst}");
    let m = RunManifest::read(dir.path().join("grad_check.manifest.json")).unwrap();
    assert_eq!(m.command, "grad-check");
    assert_eq!(m.seed, 1);
    assert_eq!(m.outputs, vec!["grad_check.csv"]);
    assert_eq!(m.config["depth"], "3 (cli)");
}

#[test]
fn failed_check_has_its_own_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // a single coarse plain difference cannot reach a 1e-12 tolerance
    let o = smpnn(
        &[
            "grad-check",
            "--depth",
            "1",
            "--nodes",
            "6",
            "--dim",
            "3",
            "--stencil",
            "three_point",
            "--h",
            "1e-2",
            "--tolerance",
            "1e-12",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(6), "{}", stderr(&o));
    assert_eq!(error_code(&o), Some(6));
    assert!(dir.path().join("grad_check.csv").exists());
}

#[test]
fn kernel_example_residuals_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpnn(
        &[
            "theory-kernel",
            "--nodes",
            "4",
            "--dim",
            "3",
            "--seeds",
            "100",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("kernel_witness.csv")).unwrap();
    assert_eq!(column(&csv, "trials"), vec!["100"]);
    for r in column(&csv, "max_residual") {
        assert!(r.parse::<f64>().unwrap() < 1e-12, "{r}");
    }
}

#[test]
fn unknown_subcommand_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = smpnn(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage:"), "{}", stderr(&o));
    assert_eq!(error_code(&o), Some(2));
}

#[test]
fn failure_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let unknown_flag = smpnn(&["train", "--learning-rate", "1"], out);
    let missing_file = smpnn(&["eval", "--checkpoint", "does/not/exist.ckpt"], out);
    let invalid_value = smpnn(&["train", "--epochs", "-3"], out);
    let out_of_range = smpnn(&["train", "--dropout", "1.5", "--epochs", "1"], out);
    for (o, code) in [
        (&unknown_flag, 2),
        (&missing_file, 3),
        (&invalid_value, 4),
        (&out_of_range, 4),
    ] {
        assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
        assert_eq!(error_code(o), Some(code), "{}", stderr(o));
        assert_eq!(
            stderr(o)
                .lines()
                .filter(|l| l.starts_with("error kind="))
                .count(),
            1
        );
    }

    let data = out.join("data");
    assert_eq!(
        smpnn(&["gen-data", "--block_size", "10", "--blocks", "2"], &data)
            .status
            .code(),
        Some(0)
    );
    fs::write(data.join("edges.txt"), "0 1\n2 x\n").unwrap();
    let malformed = smpnn(
        &["train", "--data", data.to_str().unwrap(), "--epochs", "1"],
        out,
    );
    assert_eq!(malformed.status.code(), Some(5), "{}", stderr(&malformed));
    assert!(
        stderr(&malformed).contains("edges.txt:2"),
        "{}",
        stderr(&malformed)
    );
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# desk run\ntrials = 7\ndim = 3\n").unwrap();
    let o = smpnn(
        &[
            "theory-injectivity",
            "--config",
            cfg.to_str().unwrap(),
            "--dim",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = RunManifest::read(dir.path().join("residual_injectivity.manifest.json")).unwrap();
    assert_eq!(m.config["trials"], "7 (file)");
    assert_eq!(m.config["dim"], "2 (cli)");
    assert_eq!(m.config["nodes"], "8 (default)");
    let csv = fs::read_to_string(dir.path().join("residual_injectivity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 + 1);

    fs::write(&cfg, "trails = 7\n").unwrap();
    let typo = smpnn(
        &["theory-injectivity", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(typo.status.code(), Some(4), "{}", stderr(&typo));
    assert!(stderr(&typo).contains("trails"));
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_smpnn"))
        .args(["theory-gordon", "--dim", "8", "--t", "2", "--trials", "20"])
        .env("SMPNN_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("gordon_bound.csv").exists());
    assert!(dir.path().join("gordon_bound.manifest.json").exists());
}

#[test]
fn saved_dataset_trains_like_the_generated_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let g = smpnn(&["gen-data"], &data);
    assert_eq!(g.status.code(), Some(0), "{}", stderr(&g));
    let args = ["train", "--depth", "2", "--epochs", "20", "--seed", "3"];
    let from_files = dir.path().join("files");
    let in_memory = dir.path().join("memory");
    let mut file_args = args.to_vec();
    file_args.extend(["--data", data.to_str().unwrap()]);
    assert_eq!(smpnn(&file_args, &from_files).status.code(), Some(0));
    assert_eq!(smpnn(&args, &in_memory).status.code(), Some(0));

    let strip = |p: &Path| -> Vec<String> {
        fs::read_to_string(p.join("metrics.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let a = strip(&from_files);
    assert_eq!(a[0], "epoch,train_loss,val_metric,test_metric");
    assert_eq!(a.len(), 1 + 1 + 20 / 5);
    assert_eq!(a, strip(&in_memory));
    assert_eq!(
        fs::read(from_files.join("model.ckpt")).unwrap(),
        fs::read(in_memory.join("model.ckpt")).unwrap()
    );
}

#[test]
fn eval_reproduces_the_selected_test_metric() {
    let dir = tempfile::tempdir().unwrap();
    let t = smpnn(
        &[
            "train",
            "--depth",
            "1",
            "--epochs",
            "10",
            "--eval_every",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(t.status.code(), Some(0), "{}", stderr(&t));
    let trained: f64 = stdout(&t)
        .lines()
        .find_map(|l| l.strip_prefix("test_metric="))
        .unwrap()
        .parse()
        .unwrap();
    let ckpt = dir.path().join("model.ckpt");
    let e = smpnn(
        &["eval", "--checkpoint", ckpt.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert_eq!(column(&csv, "split"), vec!["train", "val", "test"]);
    let test: f64 = column(&csv, "value")[2].parse().unwrap();
    assert_eq!(test, trained);
}

#[test]
fn identical_manifests_mean_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = [
        "energy-trace",
        "--layers",
        "30",
        "--nodes",
        "12",
        "--edges",
        "10",
        "--seed",
        "5",
    ];
    assert_eq!(smpnn(&args, &a).status.code(), Some(0));
    assert_eq!(smpnn(&args, &b).status.code(), Some(0));
    let ma = RunManifest::read(a.join("energy_trace.manifest.json")).unwrap();
    let mb = RunManifest::read(b.join("energy_trace.manifest.json")).unwrap();
    assert!(ma.same_run(&mb));
    assert_eq!(
        fs::read(a.join("energy_trace.csv")).unwrap(),
        fs::read(b.join("energy_trace.csv")).unwrap()
    );
    let csv = fs::read_to_string(a.join("energy_trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 31);
}

#[test]
fn sweeps_and_bench_write_their_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let data = out.join("data");
    assert_eq!(
        smpnn(&["gen-data", "--block_size", "15", "--blocks", "3"], &data)
            .status
            .code(),
        Some(0)
    );
    let d = data.to_str().unwrap();
    let common = [
        "--data",
        d,
        "--epochs",
        "3",
        "--seeds",
        "0,1",
        "--eval_every",
        "1",
    ];

    let mut sweep = vec!["depth-sweep", "--depths", "1,2"];
    sweep.extend(common);
    let o = smpnn(&sweep, out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("depth_sweep.csv")).unwrap();
    assert_eq!(column(&csv, "depth"), vec!["1", "2", "1", "2"]);
    assert!(stdout(&o).contains("mean.no_residual.2="));

    let mut abl = vec!["ablate", "--depth", "2", "--variants", "standard,attention"];
    abl.extend(common);
    let o = smpnn(&abl, out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(column(&csv, "variant"), vec!["standard", "attention"]);

    let o = smpnn(
        &[
            "scale-bench",
            "--nodes",
            "200",
            "--edges",
            "400,800,1200",
            "--repeats",
            "5",
        ],
        out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("scale_bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let m = RunManifest::read(out.join("scale_bench.manifest.json")).unwrap();
    assert!(m.config.contains_key("note.fit_r2"));
}
