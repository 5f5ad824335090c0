use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Label;
use crate::error::{Error, Result};

/// One `(dataset, label)` cell of the weighting table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellWeight {
    pub dataset: String,
    pub label: Label,
    pub count: usize,
    /// `1 / count`.
    pub raw: f64,
    /// Raw weight rescaled so the mean over all samples is 1.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleWeighting {
    pub cells: Vec<CellWeight>,
    pub per_sample: Vec<f64>,
}

impl SampleWeighting {
    pub fn cell(&self, dataset: &str, label: Label) -> Option<&CellWeight> {
        self.cells.iter().find(|c| c.dataset == dataset && c.label == label)
    }
}

/// `w(D, L) = 1 / |S(D, L)|`, rescaled to a mean of 1 over the given samples.
pub fn compute_sample_weights(datasets: &[String], labels: &[Label]) -> Result<SampleWeighting> {
    if datasets.len() != labels.len() {
        return Err(Error::InvalidArgument("dataset tags and labels differ in length".into()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no samples to weight".into()));
    }
    let mut counts: BTreeMap<(&str, Label), usize> = BTreeMap::new();
    for (d, &l) in datasets.iter().zip(labels) {
        *counts.entry((d.as_str(), l)).or_default() += 1;
    }
    let n = labels.len() as f64;
    // Each cell contributes count * (1/count) = 1 to the raw total.
    let scale = n / counts.len() as f64;
    let cells: Vec<CellWeight> = counts
        .iter()
        .map(|(&(d, l), &c)| CellWeight {
            dataset: d.to_string(),
            label: l,
            count: c,
            raw: 1.0 / c as f64,
            weight: scale / c as f64,
        })
        .collect();
    let per_sample = datasets
        .iter()
        .zip(labels)
        .map(|(d, &l)| scale / counts[&(d.as_str(), l)] as f64)
        .collect();
    Ok(SampleWeighting { cells, per_sample })
}

/// One epoch of class-balanced batches (row indices).
///
/// Every batch holds `batch_size / 2` rows of each class. The majority class is
/// shuffled and covered exactly once, its last chunk topped up by draws with
/// replacement; minority rows are drawn with replacement throughout.
pub fn balanced_batches(labels: &[Label], batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 || batch_size % 2 != 0 {
        return Err(Error::InvalidArgument(format!("balanced batch size must be even, got {batch_size}")));
    }
    let half = batch_size / 2;
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    for (c, rows) in by_class.iter().enumerate() {
        if rows.is_empty() {
            return Err(Error::MissingClass(Label::from_index(c).to_string()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let major = if by_class[1].len() > by_class[0].len() { 1 } else { 0 };
    let mut majority = by_class[major].clone();
    let minority = &by_class[1 - major];
    majority.shuffle(&mut rng);

    let mut batches = Vec::with_capacity(majority.len().div_ceil(half));
    for chunk in majority.chunks(half) {
        let mut major_rows = chunk.to_vec();
        while major_rows.len() < half {
            major_rows.push(majority[rng.random_range(0..majority.len())]);
        }
        let minor_rows: Vec<usize> = (0..half).map(|_| minority[rng.random_range(0..minority.len())]).collect();
        let (real, fake) = if major == 0 { (major_rows, minor_rows) } else { (minor_rows, major_rows) };
        let mut batch = real;
        batch.extend(fake);
        batches.push(batch);
    }
    Ok(batches)
}

/// Shuffled batches over all rows. A trailing single row is folded into the
/// previous batch so batch norm always sees at least two rows.
pub fn shuffled_batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut batches: Vec<Vec<usize>> = rows.chunks(batch_size.max(2)).map(|c| c.to_vec()).collect();
    if batches.len() > 1 && batches.last().map(|b| b.len()) == Some(1) {
        let last = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(last);
    }
    batches
}
