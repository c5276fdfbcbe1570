use std::path::Path;
use std::process::{Command, Output};

use ferret_core::data::load_image;
use ferret_core::model::{eval_input, load_trained, EvalOptions};
use ferret_core::nn::sigmoid;

fn ferret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ferret"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("FERRET_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "stderr: {}", stderr(o));
    serde_json::from_str(stdout(o).trim()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn corpus(dir: &Path) {
    json(&ferret(&["gen-corpus", s(dir), "--count", "4", "--size", "32", "--seed", "5"]));
}

fn quick_train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train", s(data), "--out", s(out), "--epochs", "1", "--batch-size", "4", "--crop", "28", "--variant", "s",
        "--seed", "9",
    ];
    args.extend_from_slice(extra);
    ferret(&args)
}

#[test]
fn extract_lpd_keeps_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(tmp.path());
    let input = tmp.path().join("real/00000.png");
    let out = tmp.path().join("lpd.png");
    let v = json(&ferret(&["extract-lpd", s(&input), s(&out), "--n", "5", "--stat", "avg"]));
    assert_eq!(v["neighborhood"], "5x5/mask/avg");
    assert_eq!(load_image(&out).unwrap().shape(), load_image(&input).unwrap().shape());
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["train", "--bogus"],
        vec!["--n", "4", "gradcheck"],
        vec!["--center", "middle", "gradcheck"],
        vec!["--dropout", "1.5", "gradcheck"],
        vec!["--threads", "0", "gradcheck"],
        vec!["eval", "x", "--ckpt", "y", "--perturb", "jpeg:0"],
        vec!["nonsense"],
    ] {
        let o = ferret(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(ferret(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_1_with_context() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.png");
    let o = ferret(&["extract-lpd", s(&missing), s(&tmp.path().join("o.png"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.png"), "{}", stderr(&o));

    let bad = tmp.path().join("bad.ckpt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let o = ferret(&["detect", s(&missing), "--ckpt", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.ckpt"));

    corpus(&tmp.path().join("c"));
    std::fs::remove_dir_all(tmp.path().join("c/fake")).unwrap();
    std::fs::create_dir(tmp.path().join("c/fake")).unwrap();
    let o = quick_train(&tmp.path().join("c"), &tmp.path().join("m.ckpt"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("single-class dataset"), "{}", stderr(&o));
}

#[test]
fn detect_reports_sigmoid_of_logit() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("c");
    corpus(&data);
    let ckpt = tmp.path().join("m.ckpt");
    assert!(quick_train(&data, &ckpt, &[]).status.success());
    let (model, manifest) = load_trained(&ckpt).unwrap();
    for name in ["real/00001.png", "fake/00002.png"] {
        let img = data.join(name);
        let v = json(&ferret(&["detect", s(&img), "--ckpt", s(&ckpt), "--eval-size", "32"]));
        let p = v["probability"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        let mut opts = EvalOptions::new(manifest.input);
        opts.eval_size = 32;
        let x = eval_input(&load_image(&img).unwrap(), &opts, 0).unwrap();
        let direct = sigmoid(ferret_cli::logit(&model, x).unwrap() as f64);
        assert!((p - direct).abs() < 5e-7, "{p} vs {direct}");
    }
}

#[test]
fn raw_input_training_and_pretty_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("c");
    corpus(&data);
    let ckpt = tmp.path().join("raw.ckpt");
    let v = json(&quick_train(&data, &ckpt, &["--raw-input"]));
    assert_eq!(v["epochs"].as_array().unwrap().len(), 1);
    let (_, manifest) = load_trained(&ckpt).unwrap();
    assert_eq!(manifest.input, ferret_core::model::InputKind::Raw);
    let o = ferret(&["eval", s(&data), "--ckpt", s(&ckpt), "--eval-size", "32", "--pretty"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("acc") && text.contains("ap") && !text.contains('{'), "{text}");
}

#[test]
fn threads_fall_back_to_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_ferret"))
        .args(["bench", "--variant", "s", "--batch", "1", "--size", "32", "--secs", "0.05"])
        .env("FERRET_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(json(&o)["threads"], 2);
}
