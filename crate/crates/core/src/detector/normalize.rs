use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::FeatureTable;
use crate::error::{Error, Result};
use crate::features::FeatureSet;

/// Per-dimension min-max scaling fitted on training rows. Values outside the
/// fitted range extrapolate linearly; constant dimensions map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub set: FeatureSet,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit(set: FeatureSet, rows: ArrayView2<f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidArgument("cannot fit a normalizer on zero rows".into()));
        }
        let mut min = vec![f64::INFINITY; rows.ncols()];
        let mut max = vec![f64::NEG_INFINITY; rows.ncols()];
        for row in rows.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { set, min, max })
    }

    pub fn apply(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.min.len() {
            return Err(Error::InvalidArgument(format!(
                "normalizer for {} expects {} columns, got {}",
                self.set,
                self.min.len(),
                rows.ncols()
            )));
        }
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let span = self.max[j] - self.min[j];
                *v = if span > 0.0 { (*v - self.min[j]) / span } else { 0.0 };
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizerSet {
    pub normalizers: BTreeMap<FeatureSet, Normalizer>,
}

impl NormalizerSet {
    pub fn fit(table: &FeatureTable, sets: &[FeatureSet]) -> Result<Self> {
        let mut normalizers = BTreeMap::new();
        for &s in sets {
            normalizers.insert(s, Normalizer::fit(s, table.get(s)?.view())?);
        }
        Ok(Self { normalizers })
    }

    pub fn get(&self, set: FeatureSet) -> Result<&Normalizer> {
        self.normalizers.get(&set).ok_or_else(|| Error::MissingFeatures {
            set: set.name().to_string(),
            track: "<normalizer>".into(),
        })
    }

    /// Normalized copies of the requested sets, in the order given.
    pub fn apply(&self, table: &FeatureTable, sets: &[FeatureSet]) -> Result<Vec<Array2<f64>>> {
        sets.iter().map(|&s| self.get(s)?.apply(table.get(s)?.view())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn min_max_examples() {
        let train = array![[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]];
        let n = Normalizer::fit(FeatureSet::Bicoh, train.view()).unwrap();
        let out = n.apply(train.view()).unwrap();
        assert_eq!(out.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(out.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        let eval = n.apply(array![[8.0, 7.0]].view()).unwrap();
        assert_eq!(eval[[0, 0]], 1.5);
        assert_eq!(eval[[0, 1]], 0.0);
    }

    #[test]
    fn serde_roundtrip_is_exact() {
        let n = Normalizer {
            set: FeatureSet::Fd,
            min: vec![0.1 + 0.2, -1e-300],
            max: vec![std::f64::consts::PI, 7.0],
        };
        let back: Normalizer = serde_json::from_str(&serde_json::to_string(&n).unwrap()).unwrap();
        assert_eq!(back, n);
    }
}
