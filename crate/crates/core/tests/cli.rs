use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{"M":16,"N":8,"l_max":4,"n_b":2,"n_i1":4,"n_i2":4,"l_ui":2,"l_ib":2,"snr_db":[10,20]}"#;

fn isac(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_isac"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("ISAC_THREADS", t),
        None => cmd.env_remove("ISAC_THREADS"),
    };
    cmd.output().expect("isac runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn fixed_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    for kind in ["estimate", "prob-sweep", "mse-sweep", "beamform", "rate-sweep", "convergence"] {
        let a = isac(&[kind, "--config", &cfg, "--trials", "1", "--seed", "9"], None);
        let b = isac(&[kind, "--config", &cfg, "--trials", "1", "--seed", "9"], None);
        assert!(a.status.success(), "{kind}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{kind}");
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let one = isac(&["rate-sweep", "--config", &cfg, "--trials", "6"], Some("1"));
    let three = isac(&["rate-sweep", "--config", &cfg, "--trials", "6"], Some("3"));
    assert!(one.status.success() && three.status.success());
    assert_eq!(one.stdout, three.stdout);
    let bad = isac(&["estimate", "--config", &cfg], Some("zero"));
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"n_b": -1}"#);
    let out = isac(&["estimate", "--config", &bad], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_b"));

    let missing = dir.path().join("none.json");
    let out = isac(&["estimate", "--config", missing.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));

    let out = isac(&["not-a-kind"], None);
    assert_eq!(out.status.code(), Some(2));

    let tiny = write_config(
        dir.path(),
        "tiny.json",
        r#"{"M":16,"N":8,"l_max":4,"n_b":1,"n_i1":1,"n_i2":1,"l_ui":2,"l_ib":2,"snr_db":0,"trials":2}"#,
    );
    let out = isac(&["beamform", "--config", &tiny], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn out_and_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let csv = dir.path().join("p.csv");
    let plot = dir.path().join("p.py");
    let out = isac(
        &[
            "prob-sweep",
            "--config",
            &cfg,
            "--trials",
            "20",
            "--out",
            csv.to_str().unwrap(),
            "--plot",
            plot.to_str().unwrap(),
        ],
        None,
    );
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("snr_db,p_eff_mc,p_eff_closed,ci95,config_hash"));
    assert_eq!(lines.count(), 2);
    let script = fs::read_to_string(&plot).unwrap();
    assert!(script.contains(csv.to_str().unwrap()));

    let out = isac(&["prob-sweep", "--config", &cfg, "--plot", plot.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}
