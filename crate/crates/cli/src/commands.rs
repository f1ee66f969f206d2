use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use obslab_core::formats::{read_pnm, write_cifar10_bin, write_mnist_idx, write_pgm_dir, write_pnm};
use obslab_core::obfuscation::{apply_obfuscation, p3_split_image, ClampRule, P3Record, DEFAULT_JPEG_QUALITY};
use obslab_core::{Dataset, Obfuscation};
use obslab_harness::data::{load_source, manifest_path, obfuscate_dataset, Loaded, MNIST_FILES};
use obslab_harness::experiment::{load_best, EVAL_BATCH};
use obslab_harness::report::{parse_epochs_csv, Best, EpochRecord, BEST_CHECKPOINT, REPORT_JSON};
use obslab_harness::{
    evaluate_model, prepare_split, read_report, run_experiment_with, DatasetSource, ExperimentConfig, Prepared,
};
use obslab_nn::gradcheck::random_batch;
use obslab_nn::{build_preset, gradient_check, load_checkpoint, summary, GradCheckConfig, Network, Preset, StochasticKey};

use crate::args::*;
use crate::fail::Failure;

type CmdResult = Result<(), Failure>;

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

// ---------------------------------------------------------------------------
// Flag → config plumbing

fn parse_preset(name: &str) -> Result<Preset, Failure> {
    name.parse::<Preset>().map_err(|e| Failure::usage(format!("{e}")))
}

fn default_preset(kind: DatasetKind) -> Preset {
    match kind {
        DatasetKind::Mnist => Preset::Mnist,
        DatasetKind::Cifar10 => Preset::Cifar10,
        DatasetKind::Dir => Preset::Att,
    }
}

fn kind_of(source: &DatasetSource) -> DatasetKind {
    match source {
        DatasetSource::Mnist { .. } => DatasetKind::Mnist,
        DatasetSource::Cifar10 { .. } => DatasetKind::Cifar10,
        DatasetSource::Dir { .. } => DatasetKind::Dir,
    }
}

/// Builds (or patches `base`) from the dataset flags.
fn dataset_source(a: &DatasetArgs, base: Option<DatasetSource>) -> Result<Option<DatasetSource>, Failure> {
    let kind = a.dataset.or(base.as_ref().map(kind_of));
    let Some(kind) = kind else {
        if a.data_root.is_some() || a.manifest.is_some() || a.train_per_class.is_some() {
            return Err(Failure::usage("dataset flags given without --dataset"));
        }
        return Ok(None);
    };
    let base = base.filter(|b| kind_of(b) == kind);
    let base_root = base.as_ref().map(|b| match b {
        DatasetSource::Mnist { root } | DatasetSource::Cifar10 { root } | DatasetSource::Dir { root, .. } => {
            root.clone()
        }
    });
    let root = a
        .data_root
        .clone()
        .or(base_root)
        .ok_or_else(|| Failure::usage("--data-root is required"))?;
    if kind != DatasetKind::Dir && (a.manifest.is_some() || a.train_per_class.is_some()) {
        return Err(Failure::usage("--manifest and --train-per-class apply to --dataset dir only"));
    }
    Ok(Some(match kind {
        DatasetKind::Mnist => DatasetSource::Mnist { root },
        DatasetKind::Cifar10 => DatasetSource::Cifar10 { root },
        DatasetKind::Dir => {
            let (m0, t0) = match base {
                Some(DatasetSource::Dir {
                    manifest,
                    train_per_class,
                    ..
                }) => (manifest, train_per_class),
                _ => (None, obslab_harness::config::DEFAULT_TRAIN_PER_CLASS),
            };
            DatasetSource::Dir {
                root,
                manifest: a.manifest.clone().or(m0),
                train_per_class: a.train_per_class.unwrap_or(t0),
            }
        }
    }))
}

/// The transform selected by flags, if any; `width` resolves `--blur auto`.
fn obfuscation(a: &ObfuscationArgs, width: usize) -> Result<Option<Obfuscation>, Failure> {
    let spec = if let Some(window) = a.mosaic {
        Obfuscation::Mosaic { window }
    } else if let Some(b) = &a.blur {
        let sigma = if b == "auto" {
            Obfuscation::default_blur_sigma(width)
        } else {
            b.parse::<f64>()
                .map_err(|_| Failure::usage(format!("--blur expects a number or `auto`, got {b:?}")))?
        };
        Obfuscation::Blur { sigma }
    } else if let Some(threshold) = a.p3 {
        Obfuscation::P3 {
            threshold,
            quality: a.quality.unwrap_or(DEFAULT_JPEG_QUALITY),
            clamp: ClampRule::default(),
        }
    } else if a.none {
        Obfuscation::None
    } else {
        return Ok(None);
    };
    spec.validate()?;
    Ok(Some(spec))
}

fn input_width(preset: Preset) -> usize {
    match preset.input_shape() {
        obslab_nn::Shape::Image { width, .. } => width,
        obslab_nn::Shape::Flat(n) => n,
    }
}

fn train_config(a: &TrainArgs) -> Result<ExperimentConfig, Failure> {
    let base = a.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let source = dataset_source(&a.data, base.as_ref().map(|c| c.dataset.clone()))?
        .ok_or_else(|| Failure::usage("--dataset (or --config) is required"))?;
    let kind = kind_of(&source);
    let preset = match &a.preset {
        Some(p) => parse_preset(p)?,
        None => base.as_ref().map_or(default_preset(kind), |c| c.preset),
    };
    let epochs = a
        .epochs
        .or(base.as_ref().map(|c| c.epochs))
        .unwrap_or(if kind == DatasetKind::Dir { 200 } else { 100 });
    let mut cfg = base.unwrap_or_else(|| ExperimentConfig::new(source.clone(), preset, epochs));
    cfg.dataset = source;
    cfg.preset = preset;
    cfg.epochs = epochs;
    if let Some(o) = obfuscation(&a.obfuscation, input_width(preset))? {
        cfg.obfuscation = o;
    }
    if let Some(j) = a.blur_jitter {
        cfg.blur_jitter = j;
    }
    if a.classes.is_some() {
        cfg.classes = a.classes;
    }
    if a.batch.is_some() {
        cfg.batch_size = a.batch;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.lr.is_some() || a.momentum.is_some() || a.wd.is_some() || a.lr_decay.is_some() {
        let mut sgd = cfg.sgd();
        sgd.learning_rate = a.lr.unwrap_or(sgd.learning_rate);
        sgd.momentum = a.momentum.unwrap_or(sgd.momentum);
        sgd.weight_decay = a.wd.unwrap_or(sgd.weight_decay);
        sgd.lr_decay = a.lr_decay.unwrap_or(sgd.lr_decay);
        cfg.sgd = Some(sgd);
    }
    cfg.cifar_schedule |= a.cifar_schedule;
    cfg.record_wall_clock |= a.wall_clock;
    if a.train_limit.is_some() {
        cfg.train_limit = a.train_limit;
    }
    if a.test_limit.is_some() {
        cfg.test_limit = a.test_limit;
    }
    if a.out.is_some() {
        cfg.out_dir = a.out.clone();
    }
    if cfg.out_dir.is_none() {
        let name = format!(
            "{}-{}-{}-s{}",
            cfg.dataset.name(),
            cfg.preset,
            cfg.obfuscation.label(),
            cfg.seed
        );
        cfg.out_dir = Some(Path::new("runs").join(name));
    }
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// obfuscate

pub fn obfuscate(a: ObfuscateArgs) -> CmdResult {
    if let Some(input) = &a.input {
        let image = read_pnm(input)?;
        let spec = obfuscation(&a.obfuscation, image.width())?
            .ok_or_else(|| Failure::usage("choose one of --mosaic, --blur, --p3, --none"))?;
        let out = apply_obfuscation(&image, &spec)?;
        write_pnm(&out, &a.out)?;
        println!("{} → {} ({})", input.display(), a.out.display(), spec.label());
        if let (Some(path), Obfuscation::P3 { threshold, quality, clamp }) = (&a.secret, spec) {
            let parts = p3_split_image(&image, threshold, quality, clamp)?;
            if parts.len() != 1 {
                return Err(Failure::usage("--secret supports single-channel (PGM) images"));
            }
            let (_, secret) = parts.into_iter().next().expect("one channel");
            let n = secret.entry_count();
            P3Record::Secret(secret).write(path)?;
            println!("secret part: {n} coefficients → {}", path.display());
        }
        return Ok(());
    }
    let source = dataset_source(&a.data, None)?
        .ok_or_else(|| Failure::usage("give --in for one image or --dataset for a dataset"))?;
    let loaded = load_source(&source)?;
    let width = match &loaded {
        Loaded::Split { train, .. } => train.dims(),
        Loaded::Whole { all, .. } => all.dims(),
    }
    .map_or(0, |(w, _, _)| w);
    let spec = obfuscation(&a.obfuscation, width)?
        .ok_or_else(|| Failure::usage("choose one of --mosaic, --blur, --p3, --none"))?;
    let loaded = loaded.try_map(|d| obfuscate_dataset(&d, &spec))?;
    let out = &a.out;
    match (&source, loaded) {
        (DatasetSource::Mnist { .. }, Loaded::Split { train, test }) => {
            let [ti, tl, vi, vl] = MNIST_FILES.map(|f| out.join(f));
            write_mnist_idx(&train, &ti, &tl)?;
            write_mnist_idx(&test, &vi, &vl)?;
        }
        (DatasetSource::Cifar10 { .. }, Loaded::Split { train, test }) => {
            let per = train.len().div_ceil(5).max(1);
            for (i, chunk) in train.items().chunks(per).enumerate() {
                let part = train.with_items(chunk.to_vec(), train.split())?;
                write_cifar10_bin(&part, &out.join(format!("data_batch_{}.bin", i + 1)))?;
            }
            write_cifar10_bin(&test, &out.join("test_batch.bin"))?;
        }
        (DatasetSource::Dir { .. }, Loaded::Whole { all, .. }) => {
            write_pgm_dir(&all, out, &manifest_path(out, None))?;
        }
        _ => unreachable!("loader returns the source's layout"),
    }
    println!("{} obfuscated with {} → {}", source.name(), spec.label(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train

pub fn train(a: TrainArgs) -> CmdResult {
    let cfg = train_config(&a)?;
    let out = cfg.out_dir.clone().expect("train_config sets out_dir");
    if !a.quiet {
        println!(
            "training {} on {} ({}), {} epochs, seed {} → {}",
            cfg.preset,
            cfg.dataset.name(),
            cfg.obfuscation.label(),
            cfg.epochs,
            cfg.seed,
            out.display()
        );
    }
    let epochs = cfg.epochs;
    let quiet = a.quiet;
    let started = std::time::Instant::now();
    let report = run_experiment_with(&cfg, |r: &EpochRecord| {
        if !quiet {
            println!(
                "epoch {:>3}/{epochs}  loss {:.4}  top1 {:>7}  top5 {:>7}  [{:.0} s]",
                r.epoch,
                r.loss,
                pct(r.top1),
                pct(r.top5),
                started.elapsed().as_secs_f64()
            );
        }
    })?;
    let best = report.best.expect("at least one epoch");
    println!(
        "best top1 {} (epoch {}), best top5 {}; chance {} / {}; {} train / {} test items",
        pct(best.top1),
        best.epoch,
        pct(best.top5),
        pct(report.baseline.top1),
        pct(report.baseline.top5),
        report.data.train_items,
        report.data.test_items
    );
    if let Some(k) = a.top_k {
        let net = load_best(&out)?;
        let split = prepare_split(&cfg)?;
        let eval = evaluate_model(&net, &Prepared::new(&split.test)?, EVAL_BATCH)?;
        println!("best checkpoint top{k} {}", pct(eval.topk(k)?));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let run_cfg = match &a.run {
        Some(dir) => Some(read_report(dir)?.config),
        None => None,
    };
    let ckpt: PathBuf = match (&a.checkpoint, &a.run) {
        (Some(c), _) => c.clone(),
        (None, Some(dir)) => dir.join(BEST_CHECKPOINT),
        (None, None) => return Err(Failure::usage("give --checkpoint or --run")),
    };
    let net = load_checkpoint(&ckpt)?;
    let base = match &a.config {
        Some(p) => Some(ExperimentConfig::load(p)?),
        None => run_cfg,
    };
    let preset = net
        .preset()
        .ok_or_else(|| Failure::data(format!("{}: checkpoint names no preset", ckpt.display())))?;
    let source = dataset_source(&a.data, base.as_ref().map(|c| c.dataset.clone()))?
        .ok_or_else(|| Failure::usage("give --dataset, --config or --run to choose the data"))?;
    let mut cfg = base.unwrap_or_else(|| ExperimentConfig::new(source.clone(), preset, 1));
    cfg.dataset = source;
    cfg.preset = preset;
    cfg.classes = Some(net.class_count());
    cfg.train_limit = None;
    cfg.out_dir = None;
    if let Some(o) = obfuscation(&a.obfuscation, input_width(preset))? {
        cfg.obfuscation = o;
        cfg.blur_jitter = 0.0;
    }
    let split = prepare_split(&cfg)?;
    let data = match a.split {
        SplitChoice::Train => split.train,
        SplitChoice::Test => split.test,
    };
    let eval = evaluate_model(&net, &Prepared::new(&data)?, EVAL_BATCH)?;
    println!(
        "{} on {} {} split ({}, {} items): top1 {}  top5 {}",
        ckpt.display(),
        cfg.dataset.name(),
        if a.split == SplitChoice::Train { "train" } else { "test" },
        cfg.obfuscation.label(),
        eval.count,
        pct(eval.top1),
        pct(eval.top5)
    );
    let topk = match a.top_k {
        Some(k) => {
            let v = eval.topk(k)?;
            println!("top{k} {}", pct(v));
            Some((k, v))
        }
        None => None,
    };
    if let Some(path) = &a.json {
        let mut json = serde_json::to_value(&eval).expect("evaluation serializes");
        json["obfuscation"] = serde_json::to_value(cfg.obfuscation).expect("serializes");
        json["checkpoint"] = ckpt.display().to_string().into();
        json["per_class_top1"] = serde_json::to_value(eval.per_class_accuracy()).expect("serializes");
        if let Some((k, v)) = topk {
            json["topk"] = serde_json::json!({ "k": k, "accuracy": v });
        }
        let text = serde_json::to_string_pretty(&json).expect("serializes") + "\n";
        write_text(path, &text)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::data(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// gradcheck

fn default_check_batch(p: Preset) -> usize {
    match p {
        Preset::Mnist | Preset::Cifar10 => 4,
        Preset::Att => 2,
        Preset::Facescrub => 1,
    }
}

pub fn gradcheck(a: GradcheckArgs) -> CmdResult {
    let presets: Vec<Preset> = if a.preset == "all" {
        Preset::ALL.to_vec()
    } else {
        vec![parse_preset(&a.preset)?]
    };
    if a.batch == Some(0) || a.samples == 0 {
        return Err(Failure::usage("--batch and --samples must be ≥ 1"));
    }
    let cfg = GradCheckConfig {
        epsilon: a.epsilon,
        samples_per_tensor: a.samples,
        seed: a.seed,
    };
    let mut failed = Vec::new();
    for p in presets {
        let mut net: Network<f64> = build_preset(p, p.default_classes(), a.seed)?;
        net.freeze_stochastic(StochasticKey::new(a.seed, 0, 0));
        let n = a.batch.unwrap_or(default_check_batch(p));
        let (x, y) = random_batch(net.input_shape(), net.class_count(), n, a.seed);
        let r = gradient_check(&mut net, &x, &y, &cfg)?;
        let ok = r.passes(a.tolerance);
        println!(
            "{p:<10} max relative error {:.3e} over {} samples ({} below resolution, {} at kinks)  {}",
            r.max_rel_error,
            r.samples,
            r.below_resolution,
            r.nondifferentiable,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(p.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::runtime(format!(
            "gradient check above {:e} for {}",
            a.tolerance,
            failed.join(", ")
        )))
    }
}

// ---------------------------------------------------------------------------
// report

struct Row {
    name: String,
    classes: Option<usize>,
    epochs: usize,
    best: Best,
    final_top1: f64,
}

fn best_of(records: &[EpochRecord]) -> Option<Best> {
    let mut best: Option<Best> = None;
    for r in records {
        let b = best.get_or_insert(Best {
            top1: r.top1,
            top5: r.top5,
            epoch: r.epoch,
            top5_epoch: r.epoch,
        });
        if r.top1 > b.top1 {
            b.top1 = r.top1;
            b.epoch = r.epoch;
        }
        if r.top5 > b.top5 {
            b.top5 = r.top5;
            b.top5_epoch = r.epoch;
        }
    }
    best
}

fn load_row(path: &Path) -> Result<Row, Failure> {
    let is_csv = path.extension().is_some_and(|e| e == "csv");
    let dir_name = |p: &Path| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string())
    };
    if is_csv {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let records = parse_epochs_csv(&text, path)?;
        let best = best_of(&records).ok_or_else(|| Failure::data(format!("{}: no epochs", path.display())))?;
        return Ok(Row {
            name: dir_name(path.parent().unwrap_or(path)),
            classes: None,
            epochs: records.len(),
            best,
            final_top1: records.last().map_or(0.0, |r| r.top1),
        });
    }
    let report = read_report(path)?;
    let best = report
        .best
        .ok_or_else(|| Failure::data(format!("{}: no epochs", path.display())))?;
    let dir = if path.is_dir() { path } else { path.parent().unwrap_or(path) };
    Ok(Row {
        name: format!("{} ({} {})", dir_name(dir), report.config.preset, report.config.obfuscation.label()),
        classes: Some(report.data.classes),
        epochs: report.epochs.len(),
        best,
        final_top1: report.last.map_or(0.0, |l| l.top1),
    })
}

pub fn report(a: ReportArgs) -> CmdResult {
    let rows = a.runs.iter().map(|p| load_row(p)).collect::<Result<Vec<_>, _>>()?;
    let width = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(3).max(3);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>5}  {:>7}  {:>6}",
        "run", "top1", "top5", "@ep", "final", "epochs"
    );
    for r in &rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>7.2}  {:>5}  {:>7.2}  {:>6}",
            r.name,
            100.0 * r.best.top1,
            100.0 * r.best.top5,
            r.best.epoch,
            100.0 * r.final_top1,
            r.epochs
        );
    }
    let mut classes: Vec<usize> = rows.iter().filter_map(|r| r.classes).collect();
    classes.sort_unstable();
    classes.dedup();
    for c in classes {
        let (b1, b5) = obslab_harness::metrics::random_baseline(c);
        let name = format!("chance ({c} classes)");
        let _ = writeln!(out, "{name:<width$}  {:>7.2}  {:>7.2}", 100.0 * b1, 100.0 * b5);
    }
    print!("{out}");
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect

fn describe_dataset(d: &Dataset, role: &str) -> String {
    let counts = d.class_counts();
    let (lo, hi) = (
        counts.iter().min().copied().unwrap_or(0),
        counts.iter().max().copied().unwrap_or(0),
    );
    let dims = d
        .dims()
        .map_or("empty".to_string(), |(w, h, c)| format!("{w}×{h}×{c}"));
    format!(
        "{role}: {} items, {dims}, {} classes ({lo}–{hi} per class)",
        d.len(),
        d.class_count()
    )
}

pub fn inspect(a: InspectArgs) -> CmdResult {
    if a.data.dataset.is_some() {
        let source = dataset_source(&a.data, None)?.expect("dataset given");
        match load_source(&source)? {
            Loaded::Split { train, test } => {
                println!("{}", describe_dataset(&train, "train"));
                println!("{}", describe_dataset(&test, "test"));
            }
            Loaded::Whole { all, train_per_class } => {
                println!("{}", describe_dataset(&all, "all"));
                println!("split: {train_per_class} training items per class");
            }
        }
        return Ok(());
    }
    let path = a.path.expect("clap requires a path without --dataset");
    if path.is_dir() {
        if !path.join(REPORT_JSON).exists() {
            return Err(Failure::data(format!("{}: no {REPORT_JSON}", path.display())));
        }
        let r = read_report(&path)?;
        println!(
            "{} on {}: {}, {} epochs recorded of {}",
            r.config.preset,
            r.config.dataset.name(),
            r.config.obfuscation.label(),
            r.epochs.len(),
            r.config.epochs
        );
        println!(
            "data: {} train / {} test, {} classes, input {}, {} cross-split duplicates",
            r.data.train_items, r.data.test_items, r.data.classes, r.data.input, r.data.cross_split_duplicates
        );
        if let Some(b) = r.best {
            println!("best top1 {} at epoch {}, best top5 {}", pct(b.top1), b.epoch, pct(b.top5));
        }
        return Ok(());
    }
    let bytes = std::fs::read(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    if bytes.starts_with(b"OBSNN") {
        let net = obslab_nn::checkpoint::decode_checkpoint(&bytes, &path)?;
        print!("{}", summary(&net));
        println!("iteration {}", net.iteration());
    } else if bytes.starts_with(b"P3LB") {
        match P3Record::from_bytes(&bytes, &path)? {
            P3Record::Public(p) => println!(
                "P3 public part: {}×{} blocks, threshold {}, quality {}",
                p.grid.blocks_w,
                p.grid.blocks_h,
                p.threshold,
                p.quality
            ),
            P3Record::Secret(s) => println!(
                "P3 secret part: {}×{} image, {}×{} blocks, threshold {}, quality {}, {} coefficients",
                s.width,
                s.height,
                s.blocks_w,
                s.blocks_h,
                s.threshold,
                s.quality,
                s.entry_count()
            ),
        }
    } else if bytes.first() == Some(&b'P') {
        let im = obslab_core::formats::decode_pnm(&bytes, &path)?;
        let ranges: Vec<String> = (0..im.channels())
            .map(|c| {
                let (lo, hi) = im.channel_range(c);
                format!("{lo}–{hi} ({} values)", im.distinct_values(c))
            })
            .collect();
        println!(
            "{}×{} image, {} channel(s): {}",
            im.width(),
            im.height(),
            im.channels(),
            ranges.join(", ")
        );
    } else {
        return Err(Failure::data(format!(
            "{}: not a checkpoint, P3 record, PGM/PPM or run directory",
            path.display()
        )));
    }
    Ok(())
}
