//! Branch/fusion models, normalization, sampling and the training loop.

pub mod model;
pub mod normalize;
pub mod sampling;
pub mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;

pub use model::{
    branch_spec, fusion_head_spec, majority_vote, single_branch_spec, ArchConfig, BranchDetector, Classifier, FusedDetector,
    FusedModel, MajorityVote, SingleModel,
};
pub use normalize::{Normalizer, NormalizerSet};
pub use sampling::{balanced_batches, compute_sample_weights, SampleWeighting};
pub use train::{train_fused, train_single_branch, TrainConfig, TrainLog, TrainingMode};

/// Class label. FAKE is class index 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            Label::Fake
        } else {
            Label::Real
        }
    }

    /// Decision from class probabilities; an exact tie goes to REAL.
    pub fn from_probs(p_real: f64, p_fake: f64) -> Self {
        if p_fake > p_real {
            Label::Fake
        } else {
            Label::Real
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Real => "REAL",
            Label::Fake => "FAKE",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "REAL" => Ok(Label::Real),
            "FAKE" => Ok(Label::Fake),
            _ => Err(Error::Unknown {
                kind: "label",
                name: s.to_string(),
            }),
        }
    }
}

/// Feature rows for a set of tracks, one matrix per feature set, plus labels and
/// dataset tags.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub features: BTreeMap<FeatureSet, Array2<f64>>,
    pub labels: Vec<Label>,
    pub datasets: Vec<String>,
}

impl FeatureTable {
    pub fn new(features: BTreeMap<FeatureSet, Array2<f64>>, labels: Vec<Label>, datasets: Vec<String>) -> Result<Self> {
        if datasets.len() != labels.len() {
            return Err(Error::InvalidArgument("labels and dataset tags differ in length".into()));
        }
        for (set, m) in &features {
            if m.nrows() != labels.len() || m.ncols() != set.dim() {
                return Err(Error::InvalidArgument(format!(
                    "{set} matrix is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    labels.len(),
                    set.dim()
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            datasets,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, set: FeatureSet) -> Result<&Array2<f64>> {
        self.features.get(&set).ok_or_else(|| Error::MissingFeatures {
            set: set.name().to_string(),
            track: "<all>".into(),
        })
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self
                .features
                .iter()
                .map(|(s, m)| (*s, m.select(Axis(0), rows)))
                .collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            datasets: rows.iter().map(|&i| self.datasets[i].clone()).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }
}
