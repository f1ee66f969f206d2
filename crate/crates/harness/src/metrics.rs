use obslab_nn::{Network, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Prepared;
use crate::error::{Error, Result};

/// Position of `label` when the row is sorted by descending score, ties
/// going to the lower class index. NaN ranks below every number.
pub fn rank_of(row: &[f32], label: usize) -> usize {
    let s = row[label];
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| {
            if s.is_nan() {
                !v.is_nan() || j < label
            } else {
                v > s || (v == s && j < label)
            }
        })
        .count()
}

/// Fraction of rows whose label is among the `k` highest scores.
pub fn topk_accuracy(scores: &Tensor<f32>, labels: &[usize], k: usize) -> Result<f64> {
    let rows = scores.batch();
    let classes = scores.item_len();
    if k == 0 || k > classes {
        return Err(Error::Argument(format!("k = {k} outside 1..={classes}")));
    }
    if labels.len() != rows {
        return Err(Error::Argument(format!("{} labels for {rows} score rows", labels.len())));
    }
    if rows == 0 {
        return Err(Error::Argument("no rows to score".into()));
    }
    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::Argument(format!("label {label} ≥ {classes} classes")));
        }
        if rank_of(scores.item(i), label) < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / rows as f64)
}

/// Chance accuracy of top-1 and top-5 guessing among `classes`.
pub fn random_baseline(classes: usize) -> (f64, f64) {
    (1.0 / classes as f64, 5.min(classes) as f64 / classes as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub count: usize,
    pub top1: f64,
    /// Top-5, or top-`classes` when there are fewer than five classes.
    pub top5: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    /// `rank_counts[r]`: items whose true label was ranked `r` (0 = top).
    pub rank_counts: Vec<u64>,
}

impl Evaluation {
    /// Top-`k` accuracy for any `1 ≤ k ≤ classes`.
    pub fn topk(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.rank_counts.len() {
            return Err(Error::Argument(format!("k = {k} outside 1..={}", self.rank_counts.len())));
        }
        Ok(self.rank_counts[..k].iter().sum::<u64>() as f64 / self.count as f64)
    }

    /// Accuracy restricted to items of each true class (`None` if absent).
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let total: u64 = row.iter().sum();
                (total > 0).then(|| row[c] as f64 / total as f64)
            })
            .collect()
    }
}

/// Eval-mode forward over `data` in batches of `batch` items. Batches run
/// in parallel; results are combined in item order.
pub fn evaluate_model(net: &Network<f32>, data: &Prepared, batch: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Argument("cannot evaluate on an empty dataset".into()));
    }
    if batch == 0 {
        return Err(Error::Argument("batch size must be ≥ 1".into()));
    }
    let classes = net.class_count();
    if classes != data.classes() {
        return Err(Error::Config(format!(
            "network scores {classes} classes, dataset has {}",
            data.classes()
        )));
    }
    if net.input_shape() != data.shape() {
        return Err(Error::Config(format!(
            "network expects {} inputs, dataset items are {}",
            net.input_shape(),
            data.shape()
        )));
    }
    let starts: Vec<usize> = (0..data.len()).step_by(batch).collect();
    let ranked = starts
        .par_iter()
        .map(|&start| {
            let idx: Vec<usize> = (start..(start + batch).min(data.len())).collect();
            let (x, labels) = data.batch(&idx);
            let out = net.infer(&x)?;
            Ok(labels
                .iter()
                .enumerate()
                .map(|(i, &l)| (l, rank_of(out.item(i), l), out.argmax_row(i)))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let k5 = 5.min(classes);
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut rank_counts = vec![0u64; classes];
    for (label, rank, pred) in ranked.into_iter().flatten() {
        rank_counts[rank] += 1;
        confusion[label][pred] += 1;
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        count: data.len(),
        top1: rank_counts[0] as f64 / n,
        top5: rank_counts[..k5].iter().sum::<u64>() as f64 / n,
        confusion,
        rank_counts,
    })
}
