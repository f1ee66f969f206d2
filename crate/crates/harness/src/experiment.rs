use std::path::Path;
use std::time::Instant;

use obslab_core::dataset::split_per_class;
use obslab_core::Dataset;
use obslab_nn::{build_preset, lr_schedule_cifar, save_checkpoint, sgd_step, Network, StochasticKey};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::data::{cross_split_duplicates, fit_to_input, load_source, obfuscate_dataset_jittered, Loaded, Prepared};
use crate::error::{Error, Result};
use crate::metrics::evaluate_model;
use crate::report::{write_report, write_timing, DataSummary, EpochRecord, RunReport, Timing, BEST_CHECKPOINT};

/// RNG stream for minibatch order, distinct from weight initialisation.
const SHUFFLE_STREAM: u64 = 0x5348_5546;
/// Items per evaluation batch.
pub const EVAL_BATCH: usize = 256;

/// Obfuscated, split and trimmed data ready for training.
#[derive(Clone, Debug)]
pub struct PreparedSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads the configured source, pads it to the network input, obfuscates
/// every image with the one configured transform and splits it.
pub fn prepare_split(config: &ExperimentConfig) -> Result<PreparedSplit> {
    config.validate()?;
    let loaded = load_source(&config.dataset)?;
    check_classes(config, loaded.class_count())?;
    let input = config.preset.input_shape();
    let loaded = loaded.try_map(|d| fit_to_input(d, input))?;
    let mut item_offset = 0usize;
    let obf = |d: Dataset, offset: usize| {
        obfuscate_dataset_jittered(&d, &config.obfuscation, config.blur_jitter, config.seed ^ offset as u64)
    };
    let (train, test) = match loaded {
        Loaded::Split { train, test } => {
            let tr = obf(train, item_offset)?;
            item_offset += tr.len();
            (tr, obf(test, item_offset)?)
        }
        Loaded::Whole { all, train_per_class } => {
            let all = obf(all, item_offset)?;
            split_per_class(&all, train_per_class, config.seed)?
        }
    };
    let train = match config.train_limit {
        Some(n) => train.take(n),
        None => train,
    };
    let test = match config.test_limit {
        Some(n) => test.take(n),
        None => test,
    };
    Ok(PreparedSplit { train, test })
}

fn check_classes(config: &ExperimentConfig, dataset_classes: usize) -> Result<()> {
    let classes = config.classes();
    if classes != dataset_classes {
        return Err(Error::Config(format!(
            "preset {} is configured for {classes} classes but the dataset has {dataset_classes}",
            config.preset
        )));
    }
    config.preset.layer_specs(classes).map_err(|e| Error::Config(e.to_string()))?;
    Ok(())
}

/// Loads, obfuscates, splits and trains as configured, writing reports to
/// `config.out_dir` when set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    run_experiment_with(config, |_| {})
}

/// [`run_experiment`] with a callback after every epoch.
pub fn run_experiment_with(config: &ExperimentConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<RunReport> {
    let start = Instant::now();
    let split = prepare_split(config)?;
    let prepare_seconds = start.elapsed().as_secs_f64();
    train_on(config, &split.train, &split.test, prepare_seconds, on_epoch).map(|(report, _)| report)
}

/// Trains on already prepared datasets, evaluating on `test` after every
/// epoch. Returns the report and the final network.
pub fn train_on(
    config: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    prepare_seconds: f64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(RunReport, Network<f32>)> {
    config.validate()?;
    check_classes(config, train.class_count())?;
    if test.class_count() != train.class_count() {
        return Err(Error::Config("train and test class counts differ".into()));
    }
    let clock = Instant::now();
    let resolved = config.resolved();
    let batch = config.batch_size();
    let sgd = config.sgd();
    let train_data = Prepared::new(train)?;
    let test_data = Prepared::new(test)?;
    let mut net: Network<f32> = build_preset(config.preset, config.classes(), config.seed)?;
    if net.input_shape() != train_data.shape() {
        return Err(Error::Config(format!(
            "{} network expects {} inputs, data is {}",
            config.preset,
            net.input_shape(),
            train_data.shape()
        )));
    }
    let summary = DataSummary {
        classes: train.class_count(),
        train_items: train.len(),
        test_items: test.len(),
        input: train_data.shape().to_string(),
        cross_split_duplicates: cross_split_duplicates(train, test),
        pixel_scaling: "x/255".into(),
    };
    let mut report = RunReport::new(resolved, summary, net.param_count());
    let mut timing = Timing {
        prepare_seconds,
        ..Timing::default()
    };
    let out_dir = config.out_dir.as_deref();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 0..config.epochs {
        let t0 = Instant::now();
        let mut epoch_sgd = sgd;
        if config.cifar_schedule {
            epoch_sgd.learning_rate = lr_schedule_cifar(epoch as u64, sgd.learning_rate);
        }
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(batch).enumerate() {
            let (x, labels) = train_data.batch(idx);
            let loss = net.loss_and_grad(&x, &labels, StochasticKey::new(config.seed, epoch as u64, b as u64))?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "loss {loss} at epoch {} batch {b}",
                    epoch + 1
                )));
            }
            let t = net.iteration();
            sgd_step(&mut net, &epoch_sgd, t);
            net.set_iteration(t + 1);
            loss_sum += loss * idx.len() as f64;
        }
        let eval = evaluate_model(&net, &test_data, EVAL_BATCH)?;
        let seconds = t0.elapsed().as_secs_f64();
        let rec = EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / train_data.len() as f64,
            top1: eval.top1,
            top5: eval.top5,
            seconds: if config.record_wall_clock { seconds } else { 0.0 },
        };
        let improved = report.push(rec);
        timing.epoch_seconds.push(seconds);
        if let Some(dir) = out_dir {
            if improved {
                save_checkpoint(&net, &dir.join(BEST_CHECKPOINT))?;
            }
            write_report(&report, dir)?;
        }
        on_epoch(&rec);
    }
    timing.total_seconds = prepare_seconds + clock.elapsed().as_secs_f64();
    if let Some(dir) = out_dir {
        write_timing(&timing, dir)?;
    }
    Ok((report, net))
}

/// Loads a run directory's best checkpoint.
pub fn load_best(dir: &Path) -> Result<Network<f32>> {
    Ok(obslab_nn::load_checkpoint(&dir.join(BEST_CHECKPOINT))?)
}
