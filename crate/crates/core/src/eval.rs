//! ROC/AUC, balanced accuracy, Pearson feature correlation and report records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::detector::Label;
use crate::error::{Error, Result};
use crate::features::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores `>= threshold` are called FAKE. The first point uses +inf.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn class_totals(labels: &[Label]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l == Label::Fake).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::MissingClass(format!("need both classes, got {pos} FAKE / {neg} REAL")));
    }
    Ok((pos, neg))
}

/// ROC over every distinct score (FAKE is the positive class), with AUC by the
/// trapezoidal rule.
pub fn roc_and_auc(scores: &[f64], labels: &[Label]) -> Result<Roc> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let (pos, neg) = class_totals(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            match labels[order[i]] {
                Label::Fake => tp += 1,
                Label::Real => fp += 1,
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let p = RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(Roc { points, auc })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_fake: usize,
    pub false_fake: usize,
    pub true_real: usize,
    pub false_real: usize,
}

impl Confusion {
    pub fn from_predictions(preds: &[Label], truths: &[Label]) -> Result<Self> {
        if preds.len() != truths.len() {
            return Err(Error::InvalidArgument("predictions and truths differ in length".into()));
        }
        let mut c = Confusion::default();
        for (&p, &t) in preds.iter().zip(truths) {
            match (p, t) {
                (Label::Fake, Label::Fake) => c.true_fake += 1,
                (Label::Fake, Label::Real) => c.false_fake += 1,
                (Label::Real, Label::Real) => c.true_real += 1,
                (Label::Real, Label::Fake) => c.false_real += 1,
            }
        }
        Ok(c)
    }

    pub fn tpr(&self) -> f64 {
        self.true_fake as f64 / (self.true_fake + self.false_real) as f64
    }

    pub fn tnr(&self) -> f64 {
        self.true_real as f64 / (self.true_real + self.false_fake) as f64
    }
}

/// Mean of the true-positive and true-negative rates.
pub fn balanced_accuracy(preds: &[Label], truths: &[Label]) -> Result<f64> {
    class_totals(truths)?;
    let c = Confusion::from_predictions(preds, truths)?;
    Ok((c.tpr() + c.tnr()) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

/// Column blocks for the concatenation of `sets` in the given order.
pub fn feature_blocks(sets: &[FeatureSet]) -> Vec<Block> {
    let mut start = 0;
    sets.iter()
        .map(|s| {
            let b = Block {
                name: s.name().to_string(),
                start,
                end: start + s.dim(),
            };
            start = b.end;
            b
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub r: Array2<f64>,
    /// Columns with zero variance; their off-diagonal coefficients are 0.
    pub constant: Vec<bool>,
    pub blocks: Vec<Block>,
}

impl CorrelationMatrix {
    pub fn absolute(&self) -> Array2<f64> {
        self.r.mapv(f64::abs)
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    /// Mean |r| over all pairs with one column in block `a` and one in block `b`.
    pub fn block_mean_abs(&self, a: usize, b: usize) -> f64 {
        let (ba, bb) = (&self.blocks[a], &self.blocks[b]);
        let mut sum = 0.0;
        for i in ba.start..ba.end {
            for j in bb.start..bb.end {
                sum += self.r[[i, j]].abs();
            }
        }
        sum / ((ba.end - ba.start) * (bb.end - bb.start)) as f64
    }
}

/// Pearson coefficient for every pair of columns (two-pass: center, then
/// normalize). Constant columns get 0 off the diagonal; the diagonal is 1.
pub fn pearson_matrix(features: ArrayView2<f64>, blocks: Vec<Block>) -> Result<CorrelationMatrix> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rows, got {n}")));
    }
    if !blocks.is_empty() {
        let contiguous = blocks.windows(2).all(|w| w[0].end == w[1].start);
        if blocks[0].start != 0 || blocks.last().unwrap().end != d || !contiguous {
            return Err(Error::InvalidArgument("blocks must tile the columns".into()));
        }
    }
    let mean = features.mean_axis(Axis(0)).expect("n >= 2");
    let mut z = &features - &mean;
    let mut constant = vec![false; d];
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 || scale <= 1e-12 * mean[j].abs() {
            constant[j] = true;
            col.fill(0.0);
        } else {
            col.mapv_inplace(|v| v / norm);
        }
    }
    let mut r = z.t().dot(&z);
    for i in 0..d {
        for j in 0..i {
            let v = r[[j, i]].clamp(-1.0, 1.0);
            r[[i, j]] = v;
            r[[j, i]] = v;
        }
        r[[i, i]] = 1.0;
    }
    Ok(CorrelationMatrix { r, constant, blocks })
}

/// Matrix as CSV, full precision, no header.
pub fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 20);
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub split: String,
    pub condition: String,
    pub config_hash: String,
    pub fingerprint: String,
    pub n_real: usize,
    pub n_fake: usize,
    pub auc: f64,
    pub balanced_accuracy: f64,
    pub confusion: Confusion,
    pub roc_points: Vec<RocPoint>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn compute(model: &str, scores: &[f64], preds: &[Label], truths: &[Label]) -> Result<Self> {
        let roc = roc_and_auc(scores, truths)?;
        let (n_fake, n_real) = class_totals(truths)?;
        Ok(Self {
            model: model.to_string(),
            split: String::new(),
            condition: "clean".into(),
            config_hash: String::new(),
            fingerprint: String::new(),
            n_real,
            n_fake,
            auc: roc.auc,
            balanced_accuracy: balanced_accuracy(preds, truths)?,
            confusion: Confusion::from_predictions(preds, truths)?,
            roc_points: roc.points,
            metadata: BTreeMap::new(),
        })
    }

    pub fn roc_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.roc_points {
            writeln!(out, "{:?},{:?},{:?}", p.fpr, p.tpr, p.threshold).unwrap();
        }
        out
    }
}
