use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use implicit_cli::config::{ExperimentConfig, ExperimentId};
use implicit_cli::io::RUNLOG_HEADER;

fn implayer(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_implayer"))
        .args(args)
        .current_dir(cwd)
        .env_remove("IMPLAYER_LOG")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "x.conf", "seed = 1\n");
    let out = implayer(&["mnist", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mnist"));
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(implayer(&["levelset"], tmp.path()).status.code(), Some(2));
}

#[test]
fn bad_config_fails_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.conf", "epochs = 0\n");
    let out = implayer(&["levelset", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));

    let cfg = write_config(tmp.path(), "other.conf", "experiment = qp-digits\n");
    let out = implayer(&["levelset", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_exits_zero_with_a_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "g.conf", "count = 1\n");
    let out = implayer(
        &["gradcheck", "--config", cfg.to_str().unwrap(), "--out", "gc"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for net in [
        "qp-digits",
        "ncut-seg",
        "graphmatch-pi5",
        "graphmatch-sm",
        "graphmatch-smac",
        "levelset",
    ] {
        assert!(stdout.contains(net), "{net} missing from\n{stdout}");
    }
    assert!(!stdout.contains("FAIL"));
    let table = fs::read_to_string(tmp.path().join("gc/gradcheck.csv")).unwrap();
    assert!(table.starts_with("network,sample,block,len,rel_err,status\n"));
}

#[test]
fn overrides_land_in_the_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "l.conf", "# short run\nepochs = 5\nsize = 11\n");
    let out = implayer(
        &[
            "levelset",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "9",
            "--epochs",
            "3",
            "--out",
            "run",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("run");
    let text = fs::read_to_string(dir.join("config.txt")).unwrap();
    let mut resolved = ExperimentConfig::defaults(ExperimentId::Levelset);
    resolved.apply_text(&text).unwrap();
    assert_eq!((resolved.seed, resolved.epochs, resolved.size), (9, 3, 11));
    assert_eq!(resolved.out, PathBuf::from("run"));
}

#[test]
fn runlog_schema_is_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "l.conf", "epochs = 4\n");
    let out = implayer(
        &["levelset", "--config", cfg.to_str().unwrap(), "--out", "run"],
        tmp.path(),
    );
    assert!(out.status.success());
    let bytes = fs::read(tmp.path().join("run/runlog.csv")).unwrap();
    assert!(!bytes.contains(&b'\r'));
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(RUNLOG_HEADER.join(",").as_str()));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 6);
        assert_eq!(r[0].parse::<usize>().unwrap(), k);
        assert_eq!(r[2], "train");
        assert!(r[3].parse::<f64>().unwrap().is_finite());
        assert_eq!(r[4], "iou");
    }
    let metrics = implicit_cli::io::read_metrics(&tmp.path().join("run/metrics.csv")).unwrap();
    assert!(metrics.iter().any(|(k, _)| k == "final_iou"));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n.conf", "epochs = 2\ncount = 20\nsize = 6\n");
    for dir in ["a", "b"] {
        let out = implayer(
            &["ncut-seg", "--config", cfg.to_str().unwrap(), "--out", dir],
            tmp.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (csv_files(&tmp.path().join("a")), csv_files(&tmp.path().join("b")));
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);

    let out = implayer(
        &[
            "ncut-seg",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            "c",
            "--seed",
            "2",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    assert_ne!(csv_files(&tmp.path().join("c")), a);
}
