//! Runs the `obslab` binary against small synthetic datasets.

use std::path::Path;
use std::process::{Command, Output};

use obslab_core::formats::{read_pnm, write_mnist_idx, write_pnm};
use obslab_core::obfuscation::{mosaic, P3Record};
use obslab_core::{Dataset, Split};
use obslab_harness::data::MNIST_FILES;
use obslab_harness::synthetic::prototype_dataset;

fn obslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obslab"))
        .args(args)
        .env("OBSLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = obslab(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}{}",
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn code(args: &[&str]) -> i32 {
    obslab(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_digits(dir: &Path) -> Dataset {
    let d = prototype_dataset("digits", 10, 12, (28, 28, 1), 0.7, 4).unwrap();
    let items = d.items();
    let train = d.with_items(items[..100].to_vec(), Split::Train).unwrap();
    let test = d.with_items(items[100..].to_vec(), Split::Test).unwrap();
    let [ti, tl, vi, vl] = MNIST_FILES.map(|f| dir.join(f));
    write_mnist_idx(&train, &ti, &tl).unwrap();
    write_mnist_idx(&test, &vi, &vl).unwrap();
    d
}

#[test]
fn single_image_mosaic_and_p3_secret() {
    let dir = tempfile::tempdir().unwrap();
    let d = prototype_dataset("one", 1, 1, (20, 12, 1), 0.5, 1).unwrap();
    let image = &d.items()[0].image;
    let input = dir.path().join("in.pgm");
    write_pnm(image, &input).unwrap();

    let out = dir.path().join("m.pgm");
    ok(&["obfuscate", "--in", s(&input), "--mosaic", "4", "--out", s(&out)]);
    assert_eq!(read_pnm(&out).unwrap(), mosaic(image, 4));

    let (public, secret) = (dir.path().join("p.pgm"), dir.path().join("p.secret"));
    let text = ok(&[
        "obfuscate", "--in", s(&input), "--p3", "10", "--secret", s(&secret), "--out", s(&public),
    ]);
    assert!(text.contains("secret part"), "{text}");
    let Ok(P3Record::Secret(rec)) = P3Record::read(&secret) else {
        panic!("secret record expected")
    };
    assert_eq!((rec.width, rec.height, rec.threshold), (20, 12, 10));
    // every block keeps at least its DC in the secret part
    assert!(rec.entry_count() >= 6);

    let inspected = ok(&["inspect", s(&secret)]);
    assert!(inspected.contains("P3 secret part: 20×12 image"), "{inspected}");
    let inspected = ok(&["inspect", s(&out)]);
    assert!(inspected.starts_with("20×12 image, 1 channel(s)"), "{inspected}");
}

#[test]
fn dataset_obfuscation_writes_the_native_format() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_digits(data.path());
    ok(&[
        "obfuscate", "--dataset", "mnist", "--data-root", s(data.path()), "--mosaic", "7", "--out", s(out.path()),
    ]);
    let text = ok(&["inspect", "--dataset", "mnist", "--data-root", s(out.path())]);
    assert!(text.contains("100") && text.contains("20"), "{text}");
}

#[test]
fn train_evaluate_report_inspect() {
    let data = tempfile::tempdir().unwrap();
    let runs = tempfile::tempdir().unwrap();
    write_digits(data.path());
    let run = runs.path().join("run");
    let text = ok(&[
        "train", "--dataset", "mnist", "--data-root", s(data.path()), "--p3", "20", "--epochs", "3", "--batch", "16",
        "--lr", "0.05", "--seed", "2", "--out", s(&run), "--top-k", "3",
    ]);
    assert!(text.contains("epoch   3/3"), "{text}");
    assert!(text.contains("best checkpoint top3"), "{text}");
    for f in ["epochs.csv", "report.json", "curve.dat", "timing.json", "best.ckpt"] {
        assert!(run.join(f).exists(), "{f} missing");
    }

    let json = runs.path().join("eval.json");
    let text = ok(&["evaluate", "--run", s(&run), "--top-k", "2", "--json", s(&json)]);
    assert!(text.contains("20 items"), "{text}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["confusion"].as_array().unwrap().len(), 10);
    assert_eq!(v["count"], 20);

    let text = ok(&["evaluate", "--run", s(&run), "--split", "train"]);
    assert!(text.contains("100 items"), "{text}");

    let table = ok(&["report", s(&run), s(&run.join("epochs.csv"))]);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[0].starts_with("run"), "{table}");
    assert_eq!(lines.len(), 4, "{table}");
    assert!(lines[3].starts_with("chance (10 classes)") && lines[3].contains("10.00"), "{table}");

    let text = ok(&["inspect", s(&run)]);
    assert!(text.contains("3 epochs recorded of 3"), "{text}");
    let text = ok(&["inspect", s(&run.join("best.ckpt"))]);
    assert!(text.contains("Linear"), "{text}");
}

#[test]
fn reruns_give_identical_epoch_logs() {
    let data = tempfile::tempdir().unwrap();
    let runs = tempfile::tempdir().unwrap();
    write_digits(data.path());
    let logs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let run = runs.path().join(name);
            ok(&[
                "train", "--dataset", "mnist", "--data-root", s(data.path()), "--blur", "auto", "--epochs", "2",
                "--train-limit", "48", "--out", s(&run), "--quiet",
            ]);
            std::fs::read(run.join("epochs.csv")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn gradcheck_passes_on_mnist() {
    let text = ok(&["gradcheck", "--preset", "mnist", "--batch", "2", "--samples", "2"]);
    assert!(text.contains("mnist") && text.trim_end().ends_with("ok"), "{text}");
}

#[test]
fn exit_codes() {
    // usage errors
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["train", "--mosaic", "2", "--p3", "10"]), 1);
    assert_eq!(code(&["train", "--dataset", "mnist"]), 1);
    assert_eq!(code(&["gradcheck", "--preset", "resnet"]), 1);
    assert_eq!(code(&["--help"]), 0);
    // data errors
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&["train", "--dataset", "mnist", "--data-root", s(empty.path()), "--epochs", "1"]),
        2
    );
    assert_eq!(code(&["inspect", s(&empty.path().join("nothing"))]), 2);
    assert_eq!(code(&["report", s(empty.path())]), 2);
}
