use std::path::Path;
use std::process::{Command, Output};

fn phyaug(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phyaug"))
        .args(["--grid", "4", "--out-dir"])
        .arg(dir)
        .args(args)
        .env_remove("PHYAUG_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = phyaug(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {stdout}"));
    line[key.len()..].trim().parse().unwrap()
}

#[test]
fn field_to_model_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["gen-field"]);
    assert!(d.join("field.txt").exists());

    ok(d, &["simulate", "--events", "400", "--distribution", "uniform", "--dataset", d.join("train.csv").to_str().unwrap()]);
    let events = d.join("events.csv");
    let tomo = ok(d, &["tomo", "--events", events.to_str().unwrap(), "--truth", d.join("field.txt").to_str().unwrap()]);
    assert!(value(&tomo, "relative_error") < 0.2);

    let aug = d.join("augmented.csv");
    ok(d, &["augment", "--slowness", d.join("slowness_hat.txt").to_str().unwrap(), "--count", "800", "--out", aug.to_str().unwrap()]);
    ok(d, &["--set", "svm.c_grid=[4.0]", "--set", "svm.gamma_grid=[1.0]", "train", "--data", aug.to_str().unwrap()]);
    let eval = ok(d, &["evaluate", "--model", d.join("svm.model").to_str().unwrap(), "--data", d.join("train.csv").to_str().unwrap()]);
    assert!(value(&eval, "accuracy") > 0.5);

    let de = ok(d, &["de-localize", "--slowness", d.join("slowness_hat.txt").to_str().unwrap(), "--events", events.to_str().unwrap()]);
    assert!(value(&de, "mean_error_km") < 0.2);
    assert!(d.join("de_localize.csv").exists());
}

#[test]
fn demo_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let stdout = ok(d, &["demo-polynomial", "--seed", "3"]);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("seed,source_acc_on_target,phyaug_acc_on_target"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(row[2] > row[1]);

    let csv = d.join("accuracy_vs_L.csv");
    std::fs::write(&csv, "classifier,phyaug,L,seed,accuracy\nsvm,false,10,1,0.2\nsvm,false,100,1,0.5\nsvm,true,10,1,0.6\n").unwrap();
    ok(d, &["plot", csv.to_str().unwrap()]);
    let svg = std::fs::read_to_string(d.join("accuracy_vs_L.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let missing = phyaug(d, &["tomo", "--events", d.join("nope.csv").to_str().unwrap()]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    let bad_key = phyaug(d, &["--set", "common.nonsense=1", "gen-field"]);
    assert!(!bad_key.status.success());

    std::fs::write(d.join("bad.csv"), "x,y\n1,2\n").unwrap();
    let bad_plot = phyaug(d, &["plot", d.join("bad.csv").to_str().unwrap(), "--preset", "accuracy"]);
    assert!(!bad_plot.status.success());
    assert!(String::from_utf8_lossy(&bad_plot.stderr).contains("missing column"));
}
