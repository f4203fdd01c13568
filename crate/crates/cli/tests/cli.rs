use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn remnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = remnet(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{args:?}: stdout is not JSON ({e})"))
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    remnet(dir, args).status.code().expect("exit code")
}

fn synth(dir: &Path, per_env: &str) {
    ok_json(
        dir,
        &[
            "synth",
            "--out",
            "d.csv",
            "--per-environment",
            per_env,
            "--seed",
            "3",
        ],
    );
}

#[test]
fn train_twice_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "20");
    let before = std::fs::read(d.join("d.csv")).unwrap();
    for out in ["a.remn", "b.remn"] {
        ok_json(
            d,
            &[
                "train", "--data", "d.csv", "--out", out, "--epochs", "2", "--seed", "7",
            ],
        );
    }
    ok_json(
        d,
        &[
            "train",
            "--data",
            "d.csv",
            "--out",
            "c.remn",
            "--epochs",
            "2",
            "--seed",
            "8",
            "--threads",
            "2",
        ],
    );
    let a = std::fs::read(d.join("a.remn")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.remn")).unwrap());
    assert_ne!(a, std::fs::read(d.join("c.remn")).unwrap());
    // inputs are never touched
    assert_eq!(before, std::fs::read(d.join("d.csv")).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "20");
    ok_json(
        d,
        &[
            "train", "--data", "d.csv", "--out", "a.remn", "--epochs", "1", "--seed", "4",
        ],
    );
    ok_json(
        d,
        &[
            "train",
            "--data",
            "d.csv",
            "--out",
            "b.remn",
            "--epochs",
            "1",
            "--seed",
            "4",
            "--threads",
            "3",
        ],
    );
    assert_eq!(
        std::fs::read(d.join("a.remn")).unwrap(),
        std::fs::read(d.join("b.remn")).unwrap()
    );
}

#[test]
fn manifest_reruns_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "20");
    ok_json(
        d,
        &[
            "train", "--data", "d.csv", "--out", "m.remn", "--epochs", "1", "--seed", "11", "--lr",
            "0.001",
        ],
    );
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(d.join("m.remn.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["lr"], "0.001");
    assert_eq!(manifest["config"]["epochs"], "1");
    assert!(manifest["library_version"].is_string());
    assert_eq!(manifest["formats"]["checkpoint"], 1);

    std::fs::rename(d.join("m.remn"), d.join("first.remn")).unwrap();
    ok_json(d, &["train", "--config", "m.remn.manifest.json"]);
    assert_eq!(
        std::fs::read(d.join("first.remn")).unwrap(),
        std::fs::read(d.join("m.remn")).unwrap()
    );
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "20");
    std::fs::write(
        d.join("run.cfg"),
        "# training run\nepochs = 2\nbatch-size = 16\nseed = 5\n",
    )
    .unwrap();
    let v = ok_json(
        d,
        &[
            "train", "--config", "run.cfg", "--data", "d.csv", "--out", "m.remn", "--epochs", "1",
        ],
    );
    assert_eq!(v["train_mae_history"].as_array().unwrap().len(), 1);
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(d.join("m.remn.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["epochs"], "1");
    assert_eq!(manifest["config"]["batch_size"], "16");
    assert_eq!(manifest["config"]["lr"], "0.0003");
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "10");
    ok_json(
        d,
        &[
            "train", "--data", "d.csv", "--out", "m.remn", "--epochs", "1",
        ],
    );

    assert_eq!(code(d, &["--help"]), 0);
    // usage
    assert_eq!(code(d, &["train", "--bogus"]), 1);
    assert_eq!(code(d, &["frobnicate"]), 1);
    assert_eq!(code(d, &["eval", "--model", "m.remn"]), 1);
    assert_eq!(
        code(
            d,
            &["train", "--data", "d.csv", "--out", "x.remn", "--split", "sideways"]
        ),
        1
    );
    assert_eq!(
        code(
            d,
            &["train", "--data", "d.csv", "--out", "x.remn", "--epochs", "many"]
        ),
        1
    );
    std::fs::write(d.join("typo.cfg"), "epoch = 3\n").unwrap();
    assert_eq!(
        code(
            d,
            &["train", "--config", "typo.cfg", "--data", "d.csv", "--out", "x.remn"]
        ),
        1
    );
    assert_eq!(code(d, &["train", "--config", "missing.cfg"]), 1);
    // data
    assert_eq!(
        code(d, &["eval", "--model", "none.remn", "--data", "d.csv"]),
        2
    );
    std::fs::write(d.join("junk.remn"), b"not a model").unwrap();
    assert_eq!(
        code(d, &["eval", "--model", "junk.remn", "--data", "d.csv"]),
        2
    );
    let text = std::fs::read_to_string(d.join("d.csv")).unwrap();
    std::fs::write(d.join("bad.csv"), text.replacen(",1,", ",maybe,", 1)).unwrap();
    assert_eq!(
        code(d, &["eval", "--model", "m.remn", "--data", "bad.csv"]),
        2
    );
    assert_eq!(
        code(
            d,
            &[
                "train",
                "--data",
                "d.csv",
                "--out",
                "x.remn",
                "--filters",
                "0"
            ]
        ),
        2
    );
    assert!(!d.join("x.remn").exists());
}

#[test]
fn eval_prints_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "20");
    ok_json(
        d,
        &[
            "train", "--data", "d.csv", "--out", "m.remn", "--epochs", "1",
        ],
    );
    let r = ok_json(
        d,
        &[
            "eval",
            "--model",
            "m.remn",
            "--data",
            "d.csv",
            "--split",
            "paper_default",
        ],
    );
    assert_eq!(r["model_kind"], "float");
    assert_eq!(r["count"], 20);
    for key in [
        "mae",
        "mae_nlos",
        "mae_los",
        "raw_mae_nlos",
        "sigma_nlos",
        "improvement_nlos",
    ] {
        assert!(r[key].is_number(), "{key} missing");
    }
    // with --out the report, histogram and manifest land on disk
    ok_json(
        d,
        &[
            "eval",
            "--model",
            "m.remn",
            "--data",
            "d.csv",
            "--out",
            "report.json",
        ],
    );
    for f in [
        "report.json",
        "report.json.hist.csv",
        "report.json.manifest.json",
    ] {
        assert!(d.join(f).exists(), "{f}");
    }
    let hist = std::fs::read_to_string(d.join("report.json.hist.csv")).unwrap();
    assert!(hist.starts_with("bin_left,count"));
}

#[test]
fn qat_int8_model_evaluates_within_tolerance_of_float() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "100");
    ok_json(
        d,
        &[
            "train", "--data", "d.csv", "--out", "m.remn", "--epochs", "15", "--seed", "1",
        ],
    );
    let q = ok_json(
        d,
        &[
            "quantize", "qat", "--model", "m.remn", "--data", "d.csv", "--out", "m.remq",
            "--epochs", "2",
        ],
    );
    assert!(q["size_ratio"].as_f64().unwrap() <= 0.35);
    let float = ok_json(d, &["eval", "--model", "m.remn", "--data", "d.csv"])["mae"]
        .as_f64()
        .unwrap();
    let int8 = ok_json(d, &["eval", "--model", "m.remq", "--data", "d.csv"]);
    assert_eq!(int8["model_kind"], "int8");
    let int8 = int8["mae"].as_f64().unwrap();
    assert!(
        ((int8 - float) / float).abs() <= 0.05,
        "float {float} int8 {int8}"
    );

    let p = ok_json(
        d,
        &[
            "quantize", "ptq", "--model", "m.remn", "--data", "d.csv", "--out", "p.remq",
        ],
    );
    assert_eq!(p["calib_samples"], 500);
    // a quantized model cannot be quantized again
    assert_eq!(
        code(
            d,
            &["quantize", "ptq", "--model", "m.remq", "--data", "d.csv", "--out", "z.remq"]
        ),
        2
    );
}

#[test]
fn import_windows_raw_traces_and_reports_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut text = String::from("range,truth,room,mat");
    for i in 0..200 {
        text.push_str(&format!(",c{i}"));
    }
    text.push('\n');
    for row in 0..3 {
        let env = ["big_room", "small_room", "nowhere"][row];
        let mat = ["wood", "none", "none"][row];
        text.push_str(&format!(
            "{},{},{env},{mat}",
            3.2 + row as f64,
            3.0 + row as f64
        ));
        for i in 0..200 {
            let v = if i == 40 {
                1.0
            } else if i > 40 {
                0.5 / (i - 39) as f64
            } else {
                0.01
            };
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    std::fs::write(d.join("raw.csv"), text).unwrap();
    let args = [
        "import",
        "--input",
        "raw.csv",
        "--out",
        "clean.csv",
        "--col-meas",
        "range",
        "--col-true",
        "truth",
        "--col-env",
        "room",
        "--col-obstacle",
        "mat",
        "--col-los",
        "none",
        "--cir-prefix",
        "c",
    ];
    let v = ok_json(d, &args);
    assert_eq!(v["accepted"], 2);
    assert_eq!(v["rejected"], 1);
    assert_eq!(v["windowed"], true);
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(d, &strict), 2);
    let clean = std::fs::read_to_string(d.join("clean.csv")).unwrap();
    assert_eq!(clean.lines().count(), 3);
    assert!(clean.lines().next().unwrap().ends_with("cir_156"));
}

#[test]
fn analysis_subcommands_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "20");
    ok_json(
        d,
        &[
            "train", "--data", "d.csv", "--out", "m.remn", "--epochs", "1",
        ],
    );

    let rows = ok_json(
        d,
        &[
            "sweep-k", "--data", "d.csv", "--outdir", "sweep", "--ks", "8,16", "--epochs", "1",
        ],
    );
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert!(d.join("sweep/sweep_k.csv").exists() && d.join("sweep/manifest.json").exists());
    assert_eq!(
        code(
            d,
            &["sweep-k", "--data", "d.csv", "--outdir", "s2", "--split", "all"]
        ),
        1
    );

    let grid = ok_json(
        d,
        &[
            "transfer", "--data", "d.csv", "--outdir", "tr", "--axis", "obstacle", "--epochs", "1",
        ],
    );
    assert_eq!(grid["axis"], "obstacle");
    assert!(d.join("tr/transfer_obstacle.csv").exists());

    let loc = ok_json(
        d,
        &[
            "locate", "--outdir", "loc", "--model", "m.remn", "--epochs", "10", "--seed", "2",
        ],
    );
    assert_eq!(loc["epochs"], 10);
    assert_eq!(loc["mitigated"], true);
    let again = ok_json(
        d,
        &[
            "locate",
            "--outdir",
            "loc2",
            "--scenario",
            "loc/scenario.csv",
        ],
    );
    assert_eq!(again["raw_mae"], loc["raw_mae"]);
    assert_eq!(again["mitigated"], false);
    assert_eq!(code(d, &["locate", "--outdir", "l3", "--nlos", "9"]), 1);

    let pca = ok_json(d, &["pca", "--data", "d.csv", "--out", "pca.csv"]);
    assert_eq!(pca["explained_variance"].as_array().unwrap().len(), 3);
    assert_eq!(
        std::fs::read_to_string(d.join("pca.csv"))
            .unwrap()
            .lines()
            .count(),
        101
    );

    let bench = ok_json(
        d,
        &[
            "bench",
            "--model",
            "m.remn",
            "--iters",
            "50",
            "--warmup",
            "5",
            "--out",
            "bench.json",
        ],
    );
    let names: Vec<&str> = bench
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["variant"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["float32", "float16", "int8"]);
    assert!(d.join("bench.json.manifest.json").exists());
}
