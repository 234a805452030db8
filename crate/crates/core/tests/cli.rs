use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn xfmr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xfmr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gen(dir: &Path, n: usize) {
    let o = xfmr(&["gen-data", "--n", &n.to_string(), "--seed", "42", "--out", "data.csv"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
}

const TRAIN: &[&str] = &[
    "train", "--data", "data.csv", "--seed", "3", "--arch", "N7", "--width", "16", "--epochs", "3",
    "--train-size", "200", "--test-size", "100",
];

#[test]
fn help_lists_flags_for_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = xfmr(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for (sub, flag) in [
        ("gen-data", "--noise-sigma"),
        ("train", "--weight-decay"),
        ("eval", "--model"),
        ("sweep", "--repeats"),
        ("synthesize", "--feed-length"),
        ("check", "--count"),
    ] {
        let o = xfmr(&[sub, "--help"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{sub}");
        let text = stdout(&o);
        assert!(text.contains(flag), "{sub} help lacks {flag}");
        assert!(text.contains("--config") && text.contains("--threads"), "{sub}");
    }
}

#[test]
fn gen_data_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), 6400);
    let text = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(text.lines().count(), 6401);
    assert!(text.starts_with("lp_pH,ls_pH,k,srf_GHz,qp,qs,w_oa_um"));
}

#[test]
fn training_is_reproducible_and_eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), 400);
    for out in ["a.bin", "b.bin"] {
        let mut args = TRAIN.to_vec();
        args.extend(["--out", out]);
        let o = xfmr(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.bin"), read("b.bin"));
    assert_eq!(read("a.bin.log.csv"), read("b.bin.log.csv"));

    let o = xfmr(
        &[
            "eval", "--data", "data.csv", "--model", "a.bin", "--seed", "3", "--test-size", "100",
            "--train-size", "200", "--out", "report.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
    assert!(report.lines().nth(1).unwrap().starts_with("N7,sdmse,all,200,1,"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), 400);
    fs::write(
        dir.path().join("run.cfg"),
        "# train settings\nepochs = 2\nwidth = 8\narch = FN3\n",
    )
    .unwrap();
    let mut args = TRAIN.to_vec();
    args.extend(["--out", "flags.bin"]);
    xfmr(&args, dir.path());
    let mut args = vec!["train", "--config", "run.cfg"];
    args.extend(&TRAIN[1..]);
    args.extend(["--out", "cfg.bin"]);
    let o = xfmr(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    // Explicit --arch/--width/--epochs win over the file.
    assert_eq!(
        fs::read(dir.path().join("flags.bin")).unwrap(),
        fs::read(dir.path().join("cfg.bin")).unwrap()
    );
    // Values only in the file are used.
    let o = xfmr(
        &[
            "train", "--config", "run.cfg", "--data", "data.csv", "--seed", "3", "--train-size",
            "200", "--test-size", "100", "--out", "fn3.bin",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("FN3 width 8"), "{}", stdout(&o));
}

#[test]
fn synthesize_from_flags_and_file() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), 400);
    let mut args = TRAIN.to_vec();
    args.extend(["--out", "m.bin"]);
    assert!(xfmr(&args, dir.path()).status.success());

    let o = xfmr(
        &[
            "synthesize", "--model", "m.bin", "--lp", "142.25", "--ls", "163.60", "--k", "0.55",
            "--srf", "97.0", "--qp", "22.20", "--qs", "20.52", "--out", "one.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("geometry:") && text.contains("synthesized:"), "{text}");
    let csv = fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    fs::write(
        dir.path().join("targets.csv"),
        "lp_pH,ls_pH,k,srf_GHz,qp,qs\n142.25,163.60,0.55,97.0,22.20,20.52\n150,170,0.95,90,20,21\n",
    )
    .unwrap();
    let o = xfmr(
        &[
            "synthesize", "--model", "m.bin", "--targets", "targets.csv", "--data", "data.csv",
            "--out", "many.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("not attainable"));
    let csv = fs::read_to_string(dir.path().join("many.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn sweep_writes_sorted_report() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), 400);
    let o = xfmr(
        &[
            "sweep", "--data", "data.csv", "--seed", "1", "--models", "LR,GB,FN2", "--losses",
            "smse,sdmse", "--sizes", "100,200", "--repeats", "2", "--width", "8", "--epochs", "2",
            "--gb-rounds", "10", "--test-size", "100", "--out", "sweep.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    // 3 models x 2 losses x 2 sizes.
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = xfmr(&["check", "--count", "4", "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn exit_codes_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let code = |o: &Output| o.status.code().unwrap();

    let o = xfmr(&["frobnicate"], dir.path());
    assert_eq!(code(&o), 1);
    let o = xfmr(&["gen-data", "--n", "10", "--out", "x.csv"], dir.path());
    assert_eq!(code(&o), 1, "seed is mandatory");

    let o = xfmr(&["eval", "--data", "missing.csv", "--model", "m.bin", "--seed", "1", "--out", "r.csv"], dir.path());
    assert_eq!(code(&o), 2);
    let diag = stderr(&o);
    assert_eq!(diag.lines().count(), 1, "{diag}");
    assert!(diag.starts_with("error kind=io code=2 msg="), "{diag}");

    fs::write(dir.path().join("bad.bin"), b"not a model").unwrap();
    gen(dir.path(), 50);
    let o = xfmr(&["synthesize", "--model", "bad.bin", "--lp", "1", "--ls", "1", "--k", "0.5", "--srf", "1", "--qp", "1", "--qs", "1"], dir.path());
    assert_eq!(code(&o), 2);

    let mut args = TRAIN.to_vec();
    args.extend(["--train-size", "30", "--test-size", "10", "--lr", "1e300", "--out", "d.bin"]);
    let o = xfmr(&args, dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error kind=numeric code=3"));
}
