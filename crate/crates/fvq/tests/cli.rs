use std::path::Path;
use std::process::{Command, Output};

fn fvq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fvq"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fvq(dir, args);
    assert!(
        out.status.success(),
        "fvq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SPEC: &str = r#"{"num_classes":3,"sets_per_class":10,"test_sets_per_class":5,"descriptors_per_set":6,
"d":5,"components_per_class":2,"separation":4.0,"noise_sigma":1.0,"seed":2}"#;

#[test]
fn full_workflow_through_the_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write(dir, "spec.json", SPEC);
    write(dir, "vae.json", r#"{"d_z":3,"max_batches":40,"batch_size":16}"#);
    ok(dir, &["gen", "--spec", "spec.json", "--train", "train.fvq", "--test", "test.fvq"]);
    let first = std::fs::read(dir.join("train.fvq")).unwrap();
    assert_eq!(&first[..4], b"FVQ1");

    ok(dir, &["train-vae", "--corpus", "train.fvq", "--config", "vae.json", "--seed", "4", "--out", "vae.fvqt", "--trace", "trace.csv"]);
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "batch,rec,reg,cls,total,lower_bound");
    assert_eq!(trace.lines().count(), 41);
    ok(dir, &["fim", "--model", "vae.fvqt", "--corpus", "train.fvq", "--out", "fim.fvqt"]);
    ok(dir, &["fit-gmm", "--corpus", "train.fvq", "--components", "3", "--out", "gmm.fvqt", "--trace", "em.csv"]);
    ok(dir, &["fit-vlad", "--corpus", "train.fvq", "--centers", "3", "--out", "vlad.fvqt"]);

    for (encoder, extra, m) in [
        ("fvvae", vec!["--model", "vae.fvqt", "--fim", "fim.fvqt"], 20),
        ("gmmfv", vec!["--model", "gmm.fvqt"], 30),
        ("vlad", vec!["--model", "vlad.fvqt"], 15),
        ("bp", vec![], 25),
        ("ave", vec![], 5),
        ("concat", vec![], 30),
    ] {
        for split in ["train", "test"] {
            let corpus = format!("{split}.fvq");
            let out = format!("{encoder}-{split}.bin");
            let mut args = vec!["encode", "--encoder", encoder, "--corpus", &corpus, "--out", &out];
            args.extend(&extra);
            ok(dir, &args);
        }
        let meta: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.join(format!("{encoder}-train.bin.json"))).unwrap()).unwrap();
        assert_eq!(meta["m"], m, "{encoder}");
        assert_eq!(meta["flags"]["l2_applied"], true);
        assert_eq!(meta["set_ids"].as_array().unwrap().len(), 30);
    }

    ok(dir, &["svm-train", "--features", "gmmfv-train.bin", "--out", "svm.fvqt"]);
    let printed = ok(dir, &["svm-eval", "--model", "svm.fvqt", "--features", "gmmfv-test.bin", "--scores", "scores.csv"]);
    let metrics: serde_json::Value = serde_json::from_str(&printed).unwrap();
    assert!(metrics["top3"].as_f64().unwrap() >= metrics["top1"].as_f64().unwrap());
    let scores = std::fs::read_to_string(dir.join("scores.csv")).unwrap();
    assert!(scores.starts_with("set_id,label,class_0,class_1,class_2\n"));
    assert_eq!(scores.lines().count(), 16);

    ok(dir, &["attention", "--model", "vae.fvqt", "--fim", "fim.fvqt", "--corpus", "test.fvq", "--out", "att.csv", "--frame-size", "3", "--frames-out", "frames.csv"]);
    let att = std::fs::read_to_string(dir.join("att.csv")).unwrap();
    assert!(att.starts_with("set_id,descriptor_index,value\n"));
    assert_eq!(att.lines().count(), 1 + 15 * 6);
    assert_eq!(std::fs::read_to_string(dir.join("frames.csv")).unwrap().lines().count(), 1 + 15 * 2);

    ok(dir, &["pca", "--features", "gmmfv-train.bin", "--k", "4", "--out", "pca.bin", "--basis", "basis.fvqt"]);
    assert_eq!(std::fs::metadata(dir.join("pca.bin")).unwrap().len(), 30 * 4 * 4);

    write(
        dir,
        "run.json",
        r#"{"encoder":"vlad","data":{"kind":"files","train":"train.fvq","test":"test.fvq"},
        "vlad":{"centers":3},"output_dir":"run-out","seed":1}"#,
    );
    ok(dir, &["run", "--config", "run.json"]);
    assert!(dir.join("run-out/report.json").exists());

    write(
        dir,
        "sweep.json",
        r#"{"encoder":"fvvae","data":{"kind":"files","train":"train.fvq","test":"test.fvq"},
        "vae":{"d_z":3,"max_batches":20,"batch_size":16}}"#,
    );
    ok(dir, &["sweep-lambda3", "--config", "sweep.json", "--grid", "0,10", "--out", "sweep.csv"]);
    let sweep = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next().unwrap(), "lambda3,top1,top3,map");
    assert_eq!(sweep.lines().count(), 3);

    ok(dir, &["gen", "--spec", "spec.json", "--train", "again.fvq", "--test", "again-test.fvq"]);
    assert_eq!(std::fs::read(dir.join("again.fvq")).unwrap(), first);
    ok(dir, &["train-vae", "--corpus", "train.fvq", "--config", "vae.json", "--seed", "4", "--out", "vae2.fvqt"]);
    assert_eq!(std::fs::read(dir.join("vae.fvqt")).unwrap(), std::fs::read(dir.join("vae2.fvqt")).unwrap());
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = fvq(dir, &["fit-gmm", "--corpus", "absent.fvq", "--components", "2", "--out", "g.fvqt"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: stage ingest"), "{err}");

    std::fs::write(dir.join("bad.fvq"), b"FVQ1\x01\x00\x00\x00\x03\x00\x00\x00\x01\x00\x00\x00").unwrap();
    let out = fvq(dir, &["encode", "--encoder", "ave", "--corpus", "bad.fvq", "--out", "x.bin"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("truncated record"));

    let out = fvq(dir, &["encode", "--encoder", "gmmfv", "--corpus", "bad.fvq", "--out", "x.bin"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: stage config"));
}
