use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cellfree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree"))
        .args(args)
        .output()
        .unwrap()
}

const SMALL: &[&str] = &[
    "--set",
    "L=30",
    "--set",
    "U=12",
    "--set",
    "tau=6",
    "--batches",
    "4",
    "--set",
    "calibration_batches=3",
];

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    cellfree(&args)
}

fn csv(dir: &Path, name: &str) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_into(
        dir.path(),
        &["--scheme", "dappa:wsrm:maxmin,all:full:equal"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dappa:wsrm:maxmin: mean SE"));
    for name in [
        "summary.csv",
        "diagnostics.csv",
        "metadata.txt",
        "partition.csv",
        "association.csv",
        "cdf_dappa_wsrm_maxmin.csv",
        "cdf_all_full_equal.csv",
        "trace_dappa_wsrm_maxmin.csv",
    ] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let summary = csv(dir.path(), "summary.csv");
    assert_eq!(
        summary[0],
        [
            "scheme",
            "axis_value",
            "mean_se",
            "se_p5",
            "iters_mean",
            "wall_ms"
        ]
    );
    assert_eq!(summary.len(), 3);
    let mean: f64 = summary[1][2].parse().unwrap();
    assert!(mean > 0.0 && mean.is_finite());

    let cdf = csv(dir.path(), "cdf_all_full_equal.csv");
    assert_eq!(cdf[0], ["se_bit_s_hz", "cum_prob"]);
    assert_eq!(cdf.len() - 1, 4 * 12);
    assert_eq!(cdf.last().unwrap()[1].parse::<f64>().unwrap(), 1.0);

    let partition = csv(dir.path(), "partition.csv");
    assert_eq!(partition[0], ["ap_id", "cluster_id", "x", "y"]);
    assert_eq!(partition.len() - 1, 30);
    let assoc = csv(dir.path(), "association.csv");
    assert_eq!(assoc.len() - 1, 12);
    let meta = fs::read_to_string(dir.path().join("metadata.txt")).unwrap();
    assert!(meta.contains("kappa_resolved"));
}

#[test]
fn sweep_labels_points() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "sweep",
        "--axis",
        "tau",
        "--values",
        "4,8",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    let out = cellfree(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = csv(dir.path(), "summary.csv");
    let axis: Vec<&str> = summary[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(axis, ["4", "8"]);
    assert!(dir.path().join("cdf_dappa_full_equal_tau-4.csv").exists());
    assert!(dir.path().join("cdf_dappa_full_equal_tau-8.csv").exists());
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# small network\nnum_aps = 20\nnum_ues = 6\ntau = 3\nbatches = 2\nkappa = 0.9\nschemes = all:equal:equal\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = cellfree(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = csv(&out_dir, "summary.csv");
    assert_eq!(summary[1][0], "all:equal:equal");
    assert_eq!(csv(&out_dir, "cdf_all_equal_equal.csv").len() - 1, 12);
}

#[test]
fn bad_arguments_fail_cleanly() {
    for args in [
        vec!["run", "--scheme", "dappa:full"],
        vec!["run", "--set", "tau"],
        vec!["run", "--set", "nonsense=1"],
        vec!["run", "--set", "tau=0"],
        vec!["sweep", "--axis", "depth", "--values", "1"],
        vec!["run", "--config", "/nonexistent/cellfree.cfg"],
    ] {
        let out = cellfree(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("error"), "{args:?}: {err}");
    }
}

fn strip_timing(rows: Vec<Vec<String>>, column: usize) -> Vec<Vec<String>> {
    rows.into_iter()
        .map(|mut r| {
            r.remove(column);
            r
        })
        .collect()
}

#[test]
fn worker_count_does_not_change_results() {
    let one = tempfile::tempdir().unwrap();
    let three = tempfile::tempdir().unwrap();
    let scheme = ["--scheme", "dappa:wsrm:maxmin,top-matched:equal:maxmin"];
    for (dir, w) in [(&one, "1"), (&three, "3")] {
        let mut extra = vec!["--workers", w];
        extra.extend_from_slice(&scheme);
        let out = run_into(dir.path(), &extra);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(
        strip_timing(csv(one.path(), "summary.csv"), 5),
        strip_timing(csv(three.path(), "summary.csv"), 5)
    );
    for name in [
        "diagnostics.csv",
        "partition.csv",
        "association.csv",
        "cdf_dappa_wsrm_maxmin.csv",
        "cdf_top-matched_equal_maxmin.csv",
        "trace_dappa_wsrm_maxmin.csv",
    ] {
        let a = fs::read(one.path().join(name)).unwrap();
        let b = fs::read(three.path().join(name)).unwrap();
        assert!(a == b, "{name} differs between worker counts");
    }
}
