//! End-to-end runs on small synthetic datasets written in the native
//! on-disk formats.

use std::path::Path;

use obslab_core::formats::{write_mnist_idx, write_pgm_dir};
use obslab_core::{Dataset, Obfuscation, Split};
use obslab_harness::data::MNIST_FILES;
use obslab_harness::experiment::load_best;
use obslab_harness::report::{parse_epochs_csv, read_timing, BEST_CHECKPOINT, EPOCHS_CSV};
use obslab_harness::synthetic::prototype_dataset;
use obslab_harness::{
    evaluate_model, prepare_split, read_report, run_experiment, train_on, DatasetSource, Error, ExperimentConfig, Prepared,
};
use obslab_nn::{Preset, SgdConfig};

fn split(d: &Dataset, train: usize) -> (Dataset, Dataset) {
    let items = d.items();
    (
        d.with_items(items[..train].to_vec(), Split::Train).unwrap(),
        d.with_items(items[train..].to_vec(), Split::Test).unwrap(),
    )
}

/// 28×28 ten-class digits-like data in IDX files: 300 train, 100 test.
fn write_mnist_like(dir: &Path) {
    let d = prototype_dataset("digits", 10, 40, (28, 28, 1), 0.6, 7).unwrap();
    let (train, test) = split(&d, 300);
    let [ti, tl, vi, vl] = MNIST_FILES.map(|f| dir.join(f));
    write_mnist_idx(&train, &ti, &tl).unwrap();
    write_mnist_idx(&test, &vi, &vl).unwrap();
}

fn mnist_config(root: &Path, out: Option<&Path>, epochs: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DatasetSource::Mnist { root: root.into() }, Preset::Mnist, epochs);
    cfg.batch_size = Some(16);
    cfg.seed = 3;
    cfg.sgd = Some(SgdConfig {
        learning_rate: 0.05,
        ..SgdConfig::default()
    });
    cfg.out_dir = out.map(Path::to_path_buf);
    cfg
}

#[test]
fn run_learns_and_writes_outputs() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_mnist_like(data.path());
    let cfg = mnist_config(data.path(), Some(out.path()), 8);
    let report = run_experiment(&cfg).unwrap();

    assert_eq!(report.epochs.len(), 8);
    assert_eq!(report.data.train_items, 300);
    assert_eq!(report.data.test_items, 100);
    assert_eq!(report.data.input, "1×32×32");
    assert_eq!(report.config, cfg.resolved());
    let best = report.best.unwrap();
    assert!(best.top1 > 0.5, "chance is 0.1, got {}", best.top1);
    for e in &report.epochs {
        assert!(e.top5 >= e.top1 && (0.0..=1.0).contains(&e.top1));
        assert_eq!(e.seconds, 0.0);
    }

    let csv = std::fs::read_to_string(out.path().join(EPOCHS_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(parse_epochs_csv(&csv, Path::new("e")).unwrap().len(), 8);
    assert_eq!(read_report(out.path()).unwrap(), report);
    assert_eq!(read_timing(out.path()).unwrap().epoch_seconds.len(), 8);

    // the checkpoint is the best epoch's network
    let net = load_best(out.path()).unwrap();
    let prepared = prepare_split(&cfg).unwrap();
    let test = evaluate_model(&net, &Prepared::new(&prepared.test).unwrap(), 64).unwrap();
    assert_eq!(test.top1, best.top1);
    let row_sums: Vec<u64> = test.confusion.iter().map(|r| r.iter().sum()).collect();
    let counts: Vec<u64> = prepared.test.class_counts().iter().map(|&c| c as u64).collect();
    assert_eq!(row_sums, counts);
}

#[test]
fn converged_network_scores_its_training_set_at_least_as_well() {
    let d = prototype_dataset("hard", 10, 30, (32, 32, 1), 0.6, 8).unwrap();
    let (train, test) = split(&d, 200);
    let mut cfg = mnist_config(Path::new("unused"), None, 16);
    cfg.sgd = Some(SgdConfig {
        learning_rate: 0.02,
        ..SgdConfig::default()
    });
    let (report, net) = train_on(&cfg, &train, &test, 0.0, |_| {}).unwrap();
    let on_train = evaluate_model(&net, &Prepared::new(&train).unwrap(), 64).unwrap();
    let on_test = evaluate_model(&net, &Prepared::new(&test).unwrap(), 64).unwrap();
    assert_eq!(on_test.top1, report.last.unwrap().top1);
    assert!(on_train.top1 >= on_test.top1, "train {} < test {}", on_train.top1, on_test.top1);
    assert!(on_train.top1 > 0.9, "did not converge: {}", on_train.top1);
}

#[test]
fn reruns_are_byte_identical() {
    let data = tempfile::tempdir().unwrap();
    write_mnist_like(data.path());
    let out = tempfile::tempdir().unwrap();
    let files = [EPOCHS_CSV, "report.json", "curve.dat", BEST_CHECKPOINT];
    let mut cfg = mnist_config(data.path(), Some(out.path()), 2);
    cfg.train_limit = Some(120);
    cfg.obfuscation = Obfuscation::p3(10);
    run_experiment(&cfg).unwrap();
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.path().join(f)).unwrap()).collect();
    run_experiment(&cfg).unwrap();
    for (file, a) in files.iter().zip(first) {
        let b = std::fs::read(out.path().join(file)).unwrap();
        assert!(a == b, "{file} differs between reruns");
    }
}

#[test]
fn class_mismatch_is_rejected_before_training() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_mnist_like(data.path());
    let mut cfg = mnist_config(data.path(), Some(out.path()), 1);
    cfg.preset = Preset::Att;
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    assert!(std::fs::read_dir(out.path()).unwrap().next().is_none(), "nothing written");
}

#[test]
fn missing_data_is_a_data_error() {
    let cfg = mnist_config(Path::new("/nonexistent/mnist"), None, 1);
    assert!(matches!(run_experiment(&cfg), Err(Error::Data(_))));
}

#[test]
fn directory_dataset_is_obfuscated_then_split_per_class() {
    let root = tempfile::tempdir().unwrap();
    let faces = prototype_dataset("faces", 3, 10, (92, 112, 1), 0.7, 5).unwrap();
    write_pgm_dir(&faces, root.path(), &root.path().join("manifest.tsv")).unwrap();
    let mut cfg = ExperimentConfig::new(
        DatasetSource::Dir {
            root: root.path().into(),
            manifest: None,
            train_per_class: 8,
        },
        Preset::Att,
        1,
    );
    cfg.classes = Some(3);
    cfg.obfuscation = Obfuscation::Mosaic { window: 16 };
    let split = prepare_split(&cfg).unwrap();
    assert_eq!(split.train.class_counts(), vec![8; 3]);
    assert_eq!(split.test.class_counts(), vec![2; 3]);
    for it in split.train.items().iter().chain(split.test.items()) {
        // 92×112 in 16-pixel cells: 6 × 7 cells
        assert!(it.image.distinct_values(0) <= 42);
    }
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.data.classes, 3);
    assert_eq!((report.baseline.top1, report.baseline.top5), (1.0 / 3.0, 1.0));
    assert_eq!(report.data.cross_split_duplicates, 0);
}

#[test]
fn identical_images_across_the_split_are_counted() {
    let root = tempfile::tempdir().unwrap();
    // pure prototypes: every image of a class is the same
    let d = prototype_dataset("dups", 10, 3, (28, 28, 1), 1.0, 2).unwrap();
    let [ti, tl, vi, vl] = MNIST_FILES.map(|f| root.path().join(f));
    let (train, test) = split(&d, 20);
    write_mnist_idx(&train, &ti, &tl).unwrap();
    write_mnist_idx(&test, &vi, &vl).unwrap();
    let report = run_experiment(&mnist_config(root.path(), None, 1)).unwrap();
    assert_eq!(report.data.cross_split_duplicates, 10);
}

#[test]
fn config_file_round_trip_drives_a_run() {
    let data = tempfile::tempdir().unwrap();
    write_mnist_like(data.path());
    let mut cfg = mnist_config(data.path(), None, 1);
    cfg.train_limit = Some(64);
    cfg.obfuscation = Obfuscation::Blur { sigma: 2.0 };
    cfg.blur_jitter = 0.1;
    let path = data.path().join("exp.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let loaded = ExperimentConfig::load(&path).unwrap();
    assert_eq!(loaded, cfg);
    let a = run_experiment(&loaded).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
}
