use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ringconv::data::{synthetic_glyphs, write_cifar, CifarVariant, Split};
use serde_json::Value;

fn ringconv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringconv")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

const RING5: &str = "dataset = synthetic\nimage_size = 12\nsynthetic_train = 24\nsynthetic_test = 12\n\
    epochs = 1\nbatch_size = 8\nseed = 5\n\
    layer.0.kind = ring\nlayer.0.k = 5\nlayer.0.out = 4\nlayer.1.kind = relu\n\
    layer.2.kind = global_avg_pool\nlayer.3.kind = fully_connected\n";

#[test]
fn metrics_header_params_match_counts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.cfg"), RING5).unwrap();
    let train = ringconv(&["train", "--config", "m.cfg", "--out", "run"], dir.path());
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let metrics = fs::read_to_string(dir.path().join("run/metrics.jsonl")).unwrap();
    let lines: Vec<Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["record"], "header");
    assert_eq!(lines[1]["epoch"], 1);

    let counts = ringconv(&["counts", "--config", "m.cfg", "--json"], dir.path());
    assert!(counts.status.success());
    let report = stdout_json(&counts);
    assert_eq!(report["total_params"], lines[0]["params"]);
    // ring k=5: 3 inputs, 4 outputs, 472 MACs per pixel and channel pair.
    assert_eq!(report["rows"][0]["macs"], 472 * 12 * 12 * 3 * 4);

    let table = ringconv(&["counts", "--config", "m.cfg"], dir.path());
    assert!(String::from_utf8_lossy(&table.stdout).contains("ring"));
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), RING5.to_string() + "layer.0.stride = 0\n").unwrap();
    let out = ringconv(&["train", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stride"));

    let out = ringconv(&["train", "--config", "missing.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = ringconv(&["gradcheck", "--kind", "rad", "--k", "4"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RING5.to_string() + "optimizer = sgd\nlr = 1e30\n";
    fs::write(dir.path().join("hot.cfg"), cfg).unwrap();
    let out = ringconv(&["train", "--config", "hot.cfg", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cifar_layout_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("cifar");
    fs::create_dir(&data).unwrap();
    for (split, seed) in [(Split::Train, 1), (Split::Test, 2)] {
        for (i, name) in CifarVariant::Cifar10.files(split).iter().enumerate() {
            let mut set = synthetic_glyphs(8, 32, seed * 10 + i as u64);
            set.class_count = 10;
            write_cifar(&set, CifarVariant::Cifar10, fs::File::create(data.join(name)).unwrap()).unwrap();
        }
    }
    let cfg = "dataset = cifar10\nepochs = 1\nbatch_size = 8\nseed = 2\n\
        layer.0.kind = rad\nlayer.0.k = 3\nlayer.0.out = 4\nlayer.1.kind = relu\n\
        layer.2.kind = global_avg_pool\nlayer.3.kind = fully_connected\n";
    fs::write(dir.path().join("c.cfg"), cfg).unwrap();
    let train = ringconv(&["train", "--config", "c.cfg", "--data-dir", "cifar", "--subset", "20"], dir.path());
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let eval = ringconv(
        &["eval-rotations", "--config", "c.cfg", "--data-dir", "cifar", "--checkpoint", "out/model.rcv", "--model-id", "rad3"],
        dir.path(),
    );
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let report = stdout_json(&eval);
    assert_eq!(report["model_id"], "rad3");
    assert_eq!(report["samples"], 8);
    assert!(report["error"].is_null());
    assert_eq!(report["label_agreement"][0], 1.0);
    assert!(dir.path().join("out/eval.jsonl").exists());

    fs::write(data.join("test_batch.bin"), [0u8; 100]).unwrap();
    let eval = ringconv(&["eval-rotations", "--config", "c.cfg", "--data-dir", "cifar", "--checkpoint", "out/model.rcv"], dir.path());
    assert_eq!(eval.status.code(), Some(2));
    let report = stdout_json(&eval);
    let err = report["error"].as_str().unwrap();
    assert!(err.contains("3073") && err.contains("100"), "{err}");
}
