use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const EPOCHS_CSV: &str = "epochs.csv";
pub const REPORT_JSON: &str = "report.json";
pub const CURVE_DAT: &str = "curve.dat";
pub const TIMING_JSON: &str = "timing.json";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: u32,
    /// Mean training loss over the epoch's minibatches (item-weighted).
    pub loss: f64,
    pub top1: f64,
    pub top5: f64,
    /// Wall-clock seconds for the epoch, or 0 when not recorded.
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Best {
    pub top1: f64,
    pub top5: f64,
    /// Epoch of the first maximum of top-1 (the saved checkpoint).
    pub epoch: u32,
    /// Epoch of the first maximum of top-5.
    pub top5_epoch: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub top1: f64,
    pub top5: f64,
}

/// Sizes and derived facts about the data a run saw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub classes: usize,
    pub train_items: usize,
    pub test_items: usize,
    /// Network input, e.g. `1×32×32`.
    pub input: String,
    /// Test images bit-identical to a training image.
    pub cross_split_duplicates: usize,
    pub pixel_scaling: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Fully resolved configuration.
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub parameters: usize,
    pub epochs: Vec<EpochRecord>,
    pub best: Option<Best>,
    #[serde(rename = "final")]
    pub last: Option<Accuracy>,
    pub baseline: Accuracy,
}

impl RunReport {
    pub fn new(config: ExperimentConfig, data: DataSummary, parameters: usize) -> Self {
        let (top1, top5) = crate::metrics::random_baseline(data.classes);
        RunReport {
            config,
            data,
            parameters,
            epochs: Vec::new(),
            best: None,
            last: None,
            baseline: Accuracy { top1, top5 },
        }
    }

    /// Appends a record and refreshes `best`/`final`; returns whether top-1
    /// strictly improved.
    pub fn push(&mut self, rec: EpochRecord) -> bool {
        self.epochs.push(rec);
        self.last = Some(Accuracy {
            top1: rec.top1,
            top5: rec.top5,
        });
        let improved = self.best.map_or(true, |b| rec.top1 > b.top1);
        let mut best = self.best.unwrap_or(Best {
            top1: rec.top1,
            top5: rec.top5,
            epoch: rec.epoch,
            top5_epoch: rec.epoch,
        });
        if improved {
            best.top1 = rec.top1;
            best.epoch = rec.epoch;
        }
        if rec.top5 > best.top5 {
            best.top5 = rec.top5;
            best.top5_epoch = rec.epoch;
        }
        self.best = Some(best);
        improved
    }

    /// Whether every configured epoch has a record.
    pub fn is_complete(&self) -> bool {
        self.epochs.len() == self.config.epochs as usize
    }

    pub fn epochs_csv(&self) -> String {
        let mut s = String::from("epoch,loss,top1,top5,seconds\n");
        for r in &self.epochs {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.6},{:.3}", r.epoch, r.loss, r.top1, r.top5, r.seconds);
        }
        s
    }

    /// Whitespace-separated columns for gnuplot: epoch, top-1 %, top-5 %, loss.
    pub fn curve_dat(&self) -> String {
        let mut s = format!("# {} {}\n# epoch top1% top5% loss\n", self.config.preset, self.config.obfuscation.label());
        for r in &self.epochs {
            let _ = writeln!(s, "{} {:.4} {:.4} {:.6}", r.epoch, 100.0 * r.top1, 100.0 * r.top5, r.loss);
        }
        s
    }
}

/// Wall-clock figures, kept apart from the reproducible report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub prepare_seconds: f64,
    pub epoch_seconds: Vec<f64>,
    pub total_seconds: f64,
}

fn write(path: PathBuf, contents: &[u8]) -> Result<()> {
    std::fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `epochs.csv`, `report.json` and `curve.dat` into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir.join(EPOCHS_CSV), report.epochs_csv().as_bytes())?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write(dir.join(REPORT_JSON), (json + "\n").as_bytes())?;
    write(dir.join(CURVE_DAT), report.curve_dat().as_bytes())
}

pub fn write_timing(timing: &Timing, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(timing).expect("timing serializes");
    write(dir.join(TIMING_JSON), (json + "\n").as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads `report.json` from a run directory (or the file itself).
pub fn read_report(path: &Path) -> Result<RunReport> {
    if path.is_dir() {
        read_json(&path.join(REPORT_JSON))
    } else {
        read_json(path)
    }
}

pub fn read_timing(dir: &Path) -> Result<Timing> {
    read_json(&dir.join(TIMING_JSON))
}

/// Parses an `epochs.csv` written by [`write_report`].
pub fn parse_epochs_csv(text: &str, path: &Path) -> Result<Vec<EpochRecord>> {
    let bad = |line: usize, msg: &str| Error::Argument(format!("{}:{line}: {msg}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "epoch,loss,top1,top5,seconds")) => {}
        _ => return Err(bad(1, "missing epoch,loss,top1,top5,seconds header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 1, "expected 5 fields"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(i + 1, "not a number"));
            Ok(EpochRecord {
                epoch: f[0].trim().parse().map_err(|_| bad(i + 1, "bad epoch"))?,
                loss: num(f[1])?,
                top1: num(f[2])?,
                top5: num(f[3])?,
                seconds: num(f[4])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DatasetSource;
    use obslab_nn::Preset;

    fn report(n: u32, classes: usize) -> RunReport {
        let cfg = ExperimentConfig::new(DatasetSource::Mnist { root: "m".into() }, Preset::Mnist, n);
        let data = DataSummary {
            classes,
            train_items: 10,
            test_items: 5,
            input: "1×32×32".into(),
            cross_split_duplicates: 0,
            pixel_scaling: "x/255".into(),
        };
        let mut r = RunReport::new(cfg.resolved(), data, 123);
        for e in 1..=n {
            let t = e as f64;
            r.push(EpochRecord {
                epoch: e,
                loss: 1.0 / t,
                top1: (0.1 * t).sin().abs() / 3.0 + 0.1,
                top5: (0.07 * t).cos().abs() / 3.0 + 0.6,
                seconds: 0.0,
            });
        }
        r
    }

    #[test]
    fn csv_has_header_plus_one_line_per_epoch() {
        let r = report(100, 10);
        assert_eq!(r.epochs_csv().lines().count(), 101);
        let back = parse_epochs_csv(&r.epochs_csv(), Path::new("e.csv")).unwrap();
        assert_eq!(back.len(), 100);
        assert_eq!(back[41].epoch, 42);
        assert!((back[41].top1 - r.epochs[41].top1).abs() < 1e-6);
    }

    #[test]
    fn best_is_the_max_over_records() {
        let r = report(60, 10);
        let best = r.best.unwrap();
        let max1 = r.epochs.iter().map(|e| e.top1).fold(f64::MIN, f64::max);
        let max5 = r.epochs.iter().map(|e| e.top5).fold(f64::MIN, f64::max);
        assert_eq!(best.top1, max1);
        assert_eq!(best.top5, max5);
        assert_eq!(r.epochs[best.epoch as usize - 1].top1, max1);
        assert_eq!(r.epochs[best.top5_epoch as usize - 1].top5, max5);
        assert_eq!(r.last.unwrap().top1, r.epochs.last().unwrap().top1);
        assert!(r.is_complete());
    }

    #[test]
    fn first_maximum_wins_ties() {
        let mut r = report(0, 10);
        for (e, acc) in [(1, 0.5), (2, 0.7), (3, 0.7)] {
            r.push(EpochRecord { epoch: e, loss: 0.0, top1: acc, top5: acc, seconds: 0.0 });
        }
        assert_eq!(r.best.unwrap().epoch, 2);
    }

    #[test]
    fn forty_class_baselines() {
        let r = report(1, 40);
        assert_eq!(r.baseline, Accuracy { top1: 0.025, top5: 0.125 });
    }

    #[test]
    fn json_round_trip_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = report(7, 10);
        write_report(&r, dir.path()).unwrap();
        assert_eq!(read_report(dir.path()).unwrap(), r);
        assert_eq!(read_report(&dir.path().join(REPORT_JSON)).unwrap(), r);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_JSON)).unwrap()).unwrap();
        for key in ["config", "epochs", "best", "baseline", "final"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        for key in ["top1", "top5", "epoch"] {
            assert!(json["best"].get(key).is_some());
        }
        let curve = std::fs::read_to_string(dir.path().join(CURVE_DAT)).unwrap();
        assert_eq!(curve.lines().filter(|l| !l.starts_with('#')).count(), 7);
        let t = Timing { prepare_seconds: 1.5, epoch_seconds: vec![2.0], total_seconds: 3.5 };
        write_timing(&t, dir.path()).unwrap();
        assert_eq!(read_timing(dir.path()).unwrap(), t);
    }

    #[test]
    fn bad_csv_is_rejected() {
        let p = Path::new("x.csv");
        assert!(parse_epochs_csv("a,b\n", p).is_err());
        assert!(parse_epochs_csv("epoch,loss,top1,top5,seconds\n1,2,3\n", p).is_err());
        assert!(parse_epochs_csv("epoch,loss,top1,top5,seconds\n1,x,0,0,0\n", p).is_err());
    }
}
