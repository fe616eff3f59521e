use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mia(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mia"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = mia(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL_CONFIG: &str = "\
# tiny run
classes = 3
dim = 4
per_class = 10
models = 4
epochs = 20
hidden = 8
";

#[test]
fn stage_commands_match_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.cfg"), SMALL_CONFIG).unwrap();
    let out = ok(d, &["pipeline", "--config", "run.cfg", "--seed", "9", "--out-dir", "full", "--jobs", "1"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 26);

    ok(d, &["shadows", "--dataset", "full/dataset.dset", "--models", "4", "--epochs", "20", "--hidden", "8", "--seed", "9", "--out-dir", "staged"]);
    for f in ["mask.mmsk", "predictions.pmat", "models/model_003.cmlp"] {
        assert_eq!(fs::read(d.join("staged").join(f)).unwrap(), fs::read(d.join("full").join(f)).unwrap(), "{f}");
    }
    ok(d, &["score", "--predictions", "staged/predictions.pmat", "--variant", "logconf", "--dataset", "full/dataset.dset", "--out", "s.scor"]);
    assert_eq!(fs::read(d.join("s.scor")).unwrap(), fs::read(d.join("full/scores/logconf.scor")).unwrap());
    ok(d, &["attack", "--scores", "s.scor", "--mask", "staged/mask.mmsk", "--variant", "online", "--out", "a.attk"]);
    assert_eq!(fs::read(d.join("a.attk")).unwrap(), fs::read(d.join("full/attacks/online__logconf.attk")).unwrap());

    ok(d, &["attack", "--scores", "s.scor", "--mask", "staged/mask.mmsk", "--variant", "global", "--out", "g.attk"]);
    let out = ok(d, &["eval", "--result", "g.attk", "a.attk", "--fpr", "0.1", "--csv", "r.csv", "--svg", "r.svg"]);
    let csv = fs::read_to_string(d.join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "attack,score_variant,auc,tpr@0.1,balanced_acc");
    assert!(lines[1].starts_with("online,logconf,") && lines[2].starts_with("global,logconf,"));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
    assert!(fs::read_to_string(d.join("r.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn synth_writes_a_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["synth", "--classes", "3", "--dim", "2", "--per-class", "5", "--spread", "0.5", "--center-scale", "3", "--seed", "4", "--out", "x.dset"]);
    let bytes = fs::read(d.join("x.dset")).unwrap();
    assert_eq!(&bytes[..4], b"DSET");
    assert_eq!(bytes.len(), 4 + 4 + 24 + 15 * 2 * 8 + 15 * 4);
    ok(d, &["synth", "--classes", "3", "--dim", "2", "--per-class", "5", "--spread", "0.5", "--center-scale", "3", "--seed", "4", "--out", "y.dset"]);
    assert_eq!(bytes, fs::read(d.join("y.dset")).unwrap());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let code = |args: &[&str]| mia(d, args).status.code().unwrap();

    // validation
    assert_eq!(code(&["synth", "--classes", "0", "--out", "x.dset"]), 2);
    assert_eq!(code(&["pipeline", "--attacks", "online,lira", "--out-dir", "p"]), 2);
    assert_eq!(code(&["pipeline", "--models", "3", "--out-dir", "p"]), 2);
    assert!(!d.join("p").exists());
    assert_eq!(code(&["pipeline", "--set", "colour=blue"]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    // I/O: missing and malformed inputs
    assert_eq!(code(&["score", "--predictions", "missing.pmat", "--variant", "argmax", "--out", "s.scor"]), 4);
    fs::write(d.join("bad.pmat"), b"PMAT\x01\x00\x00\x00\x02").unwrap();
    let out = mia(d, &["score", "--predictions", "bad.pmat", "--variant", "argmax", "--out", "s.scor"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte 8"));

    // runtime: divergent training
    fs::write(d.join("run.cfg"), SMALL_CONFIG).unwrap();
    let out = mia(d, &["pipeline", "--config", "run.cfg", "--lr", "1e200", "--set", "init_scale=1", "--out-dir", "div"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `shadows`"));
    assert!(!d.join("div/predictions.pmat").exists());
}

#[test]
fn flags_override_config_and_reruns_reuse() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("run.cfg"), format!("{SMALL_CONFIG}models = 6\nout_dir = from-config\n")).unwrap();
    let args = ["pipeline", "--config", "run.cfg", "--models", "4", "--scores", "argmax", "--attacks", "offline,global"];
    let first = ok(d, &args);
    assert!(d.join("from-config/models/model_003.cmlp").exists());
    assert!(!d.join("from-config/models/model_004.cmlp").exists());
    assert_eq!(String::from_utf8_lossy(&first.stdout).lines().count(), 3);

    let second = ok(d, &[&args[..], &["--jobs", "4"]].concat());
    assert_eq!(first.stdout, second.stdout);
    let log = String::from_utf8(second.stderr).unwrap();
    assert!(log.lines().all(|l| l.trim_start().starts_with("reused")), "{log}");
}
