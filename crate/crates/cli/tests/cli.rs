use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sigkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sigkit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = sigkit(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for cmd in [
        "gen",
        "enroll",
        "train",
        "rst",
        "features",
        "identify",
        "eval-rst",
        "eval-convergence",
        "eval-recognition",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn subcommand_help_shows_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = sigkit(dir.path(), &["train", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("[default: 0.5]"), "{text}");
    assert!(text.contains("[default: 0.01,0.001,0.001]"), "{text}");
    let gen = stdout(&sigkit(dir.path(), &["gen", "--help"]));
    assert!(gen.contains("--samples-per-subject") && gen.contains("[default: 10]"));
}

#[test]
fn missing_input_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sigkit(
        dir.path(),
        &["rst", "--reference", "missing.pgm", "--probe", "also.pgm"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("FileNotFound"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["bogus"][..],
        &["gen", "--no-such-flag"],
        &["train", "--rates", "1,2"],
        &["train", "--spread", "wide"],
        &["enroll", "--features", "wavelet"],
    ] {
        let out = sigkit(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn malformed_image_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.pgm"), b"P5 nonsense").unwrap();
    let out = sigkit(dir.path(), &["features", "--in", "bad.pgm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("MalformedImage"));
}

#[test]
fn gen_enroll_train_identify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["gen", "--subjects", "5", "--seed", "3", "--out", "db"][..],
        &["enroll", "--db", "db", "--out", "gallery.csv"],
        &["train", "--gallery", "gallery.csv", "--out", "model.json"],
    ] {
        let out = sigkit(d, args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", stderr(&out));
    }
    let ids: Vec<String> = (1..=5).map(|i| format!("s{i:03}")).collect();
    let out = sigkit(d, &["identify", "--probe", "db/subjects/s004/03.pgm"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let line = stdout(&out);
    let named = line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("subject_id="))
        .expect("subject_id field");
    assert!(ids.iter().any(|id| id == named), "{line}");
}

#[test]
fn rst_and_features_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(
        sigkit(d, &["gen", "--subjects", "1", "--samples-per-subject", "2"])
            .status
            .success()
    );
    let out = sigkit(
        d,
        &[
            "rst",
            "--reference",
            "db/subjects/s001/00.pgm",
            "--probe",
            "db/subjects/s001/01.pgm",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = fs::read_to_string(d.join("rst.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("rotation_deg,tx,ty,scale_ratio,coarse_profile")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row.len(), 5);
    assert_eq!(row[4].split(';').count(), 25);

    assert!(sigkit(d, &["features", "--in", "aligned.pgm"])
        .status
        .success());
    let features = fs::read_to_string(d.join("features.csv")).unwrap();
    let values: Vec<f64> = features
        .trim()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(values.len(), 64);
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn identical_arguments_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |name: &str| {
        let out = sigkit(
            d,
            &[
                "eval-convergence",
                "--subjects",
                "4",
                "--centers",
                "4",
                "--budgets",
                "5,20",
                "--out",
                name,
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        (
            fs::read(d.join(name).join("convergence.csv")).unwrap(),
            stdout(&out),
        )
    };
    let (a, out_a) = run("a");
    let (b, out_b) = run("b");
    assert_eq!(a, b);
    assert_eq!(out_a, out_b);
    assert!(String::from_utf8(a).unwrap().starts_with("# config: {"));

    for name in ["g1", "g2"] {
        assert!(sigkit(
            d,
            &[
                "gen",
                "--subjects",
                "2",
                "--samples-per-subject",
                "3",
                "--seed",
                "9",
                "--out",
                name
            ]
        )
        .status
        .success());
    }
    for f in ["ground_truth.csv", "subjects/s002/02.pgm"] {
        assert_eq!(
            fs::read(d.join("g1").join(f)).unwrap(),
            fs::read(d.join("g2").join(f)).unwrap()
        );
    }
}

#[test]
fn eval_rst_writes_table_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = sigkit(dir.path(), &["eval-rst", "--samples", "3", "--out", "r"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("r/rst_table.csv")).unwrap();
    assert!(table
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("original_rotation,original_scale,detected_rotation"));
    let series = fs::read_to_string(dir.path().join("r/rst_error_series.csv")).unwrap();
    assert_eq!(series.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn eval_recognition_rejects_impossible_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = sigkit(
        dir.path(),
        &[
            "eval-recognition",
            "--subjects",
            "2",
            "--samples-per-subject",
            "2",
            "--counts",
            "5",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("InvalidArgument"));
}
