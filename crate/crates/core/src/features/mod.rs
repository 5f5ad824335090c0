//! The three feature sets and the extractor registry.

pub mod benford;
pub mod bicoh;
pub mod fd;
pub mod lpc;
pub mod mfcc;
pub mod stlt;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::AudioTrack;
use crate::error::{Error, Result};

pub use bicoh::BicohConfig;
pub use fd::{FdConfig, FdMode};
pub use stlt::StltConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Fd,
    Stlt,
    Bicoh,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Fd, FeatureSet::Stlt, FeatureSet::Bicoh];

    pub fn dim(self) -> usize {
        match self {
            FeatureSet::Fd => fd::FD_DIM,
            FeatureSet::Stlt => stlt::STLT_DIM,
            FeatureSet::Bicoh => bicoh::BICOH_DIM,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Fd => "fd",
            FeatureSet::Stlt => "stlt",
            FeatureSet::Bicoh => "bicoh",
        }
    }

    /// Width of the embedding this set's branch produces.
    pub fn embedding_dim(self) -> usize {
        match self {
            FeatureSet::Fd => 32,
            FeatureSet::Stlt => 64,
            FeatureSet::Bicoh => 16,
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fd" => Ok(FeatureSet::Fd),
            "stlt" => Ok(FeatureSet::Stlt),
            "b" | "bicoh" | "bicoherence" => Ok(FeatureSet::Bicoh),
            _ => Err(Error::Unknown {
                kind: "feature set",
                name: s.to_string(),
            }),
        }
    }
}

/// Extracted feature values plus diagnostic flags kept outside the vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub set: FeatureSet,
    pub values: Vec<f64>,
    pub flags: Vec<bool>,
}

impl FeatureVector {
    pub fn new(set: FeatureSet, values: Vec<f64>, flags: Vec<bool>) -> Result<Self> {
        if values.len() != set.dim() {
            return Err(Error::InvalidArgument(format!(
                "{set} vector has {} values, expected {}",
                values.len(),
                set.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite {set} feature")));
        }
        Ok(Self { set, values, flags })
    }

    /// Human-readable name of dimension `i` in the frozen layout.
    pub fn dim_name(set: FeatureSet, i: usize) -> String {
        const FD_STATS: [&str; 8] = ["alpha", "beta", "gamma", "jsd", "renyi2", "mse", "entropy", "chi2"];
        const MOMENTS: [&str; 4] = ["mean", "var", "skew", "kurt"];
        match set {
            FeatureSet::Fd => {
                let (cell, stat) = (i / 8, i % 8);
                format!("fd_c{}_d{}_{}", cell / 4 + 1, cell % 4 + 1, FD_STATS[stat])
            }
            FeatureSet::Stlt => {
                let (order_idx, rest) = (i / 32, i % 32);
                let kind = if rest < 16 { "st" } else { "lt" };
                format!("stlt_p{}_{}{}", 2 * (order_idx + 1), kind, rest % 16)
            }
            FeatureSet::Bicoh => {
                let block = if i < 4 { "mag" } else { "phase" };
                format!("bicoh_{}_{}", block, MOMENTS[i % 4])
            }
        }
    }
}

/// Per-call extraction options.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExtractOptions {
    /// Forces FD extraction onto the whole signal (used under noise attacks).
    pub fd_mode_override: Option<FdMode>,
}

/// A feature extraction strategy registered by name.
pub trait FeatureExtractor: Send + Sync {
    fn set(&self) -> FeatureSet;

    fn name(&self) -> &str;

    /// Stable digest of everything that influences the output.
    fn fingerprint(&self) -> String;

    fn extract(&self, track: &AudioTrack, opts: &ExtractOptions) -> Result<FeatureVector>;
}

pub fn digest_json<T: Serialize>(tag: &str, value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(b"\0");
    h.update(json.as_bytes());
    hex::encode(&h.finalize()[..8])
}

pub struct FdExtractor {
    pub config: FdConfig,
}

impl FeatureExtractor for FdExtractor {
    fn set(&self) -> FeatureSet {
        FeatureSet::Fd
    }

    fn name(&self) -> &str {
        "fd"
    }

    fn fingerprint(&self) -> String {
        digest_json("fd", &self.config)
    }

    fn extract(&self, track: &AudioTrack, opts: &ExtractOptions) -> Result<FeatureVector> {
        let mode = opts.fd_mode_override.unwrap_or(self.config.mode);
        let out = fd::extract_fd_features(track, mode, &self.config)?;
        let mut flags = out.degenerate;
        flags.push(out.fell_back);
        flags.push(out.mode_used == FdMode::WholeSignal);
        FeatureVector::new(FeatureSet::Fd, out.values, flags)
    }
}

pub struct StltExtractor {
    pub config: StltConfig,
}

impl FeatureExtractor for StltExtractor {
    fn set(&self) -> FeatureSet {
        FeatureSet::Stlt
    }

    fn name(&self) -> &str {
        "stlt"
    }

    fn fingerprint(&self) -> String {
        digest_json("stlt", &self.config)
    }

    fn extract(&self, track: &AudioTrack, _opts: &ExtractOptions) -> Result<FeatureVector> {
        let out = stlt::extract_stlt_features(track, &self.config)?;
        FeatureVector::new(FeatureSet::Stlt, out.values, vec![out.voiced_frames == 0])
    }
}

pub struct BicohExtractor {
    pub config: BicohConfig,
}

impl FeatureExtractor for BicohExtractor {
    fn set(&self) -> FeatureSet {
        FeatureSet::Bicoh
    }

    fn name(&self) -> &str {
        "bicoh"
    }

    fn fingerprint(&self) -> String {
        digest_json("bicoh", &self.config)
    }

    fn extract(&self, track: &AudioTrack, _opts: &ExtractOptions) -> Result<FeatureVector> {
        let map = bicoh::compute_bicoherence(track, &self.config)?;
        let out = bicoh::extract_bicoh_features(&map);
        FeatureVector::new(FeatureSet::Bicoh, out.values.to_vec(), out.flat.to_vec())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub fd: FdConfig,
    pub stlt: StltConfig,
    pub bicoh: BicohConfig,
}

/// Extractors keyed by feature set.
pub struct ExtractorRegistry {
    extractors: BTreeMap<FeatureSet, Box<dyn FeatureExtractor>>,
}

impl ExtractorRegistry {
    pub fn empty() -> Self {
        Self {
            extractors: BTreeMap::new(),
        }
    }

    pub fn from_config(config: &ExtractorConfig) -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(FdExtractor {
            config: config.fd.clone(),
        }));
        reg.register(Box::new(StltExtractor {
            config: config.stlt.clone(),
        }));
        reg.register(Box::new(BicohExtractor {
            config: config.bicoh.clone(),
        }));
        reg
    }

    /// Registers (or replaces) the extractor for its feature set.
    pub fn register(&mut self, extractor: Box<dyn FeatureExtractor>) {
        self.extractors.insert(extractor.set(), extractor);
    }

    pub fn get(&self, set: FeatureSet) -> Result<&dyn FeatureExtractor> {
        self.extractors
            .get(&set)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "extractor",
                name: set.name().to_string(),
            })
    }

    pub fn by_name(&self, name: &str) -> Result<&dyn FeatureExtractor> {
        self.extractors
            .values()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "extractor",
                name: name.to_string(),
            })
    }

    pub fn sets(&self) -> Vec<FeatureSet> {
        self.extractors.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        let reg = ExtractorRegistry::from_config(&ExtractorConfig::default());
        assert_eq!(reg.sets(), FeatureSet::ALL.to_vec());
        assert_eq!(reg.by_name("stlt").unwrap().set(), FeatureSet::Stlt);
        assert!(reg.by_name("mfcc").is_err());
    }

    #[test]
    fn fingerprints_track_config() {
        let a = FdExtractor { config: FdConfig::default() };
        let mut cfg = FdConfig::default();
        cfg.deltas = vec![1.0, 2.0, 3.0, 5.0];
        let b = FdExtractor { config: cfg };
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), FdExtractor { config: FdConfig::default() }.fingerprint());
    }

    #[test]
    fn dims_and_names() {
        let total: usize = FeatureSet::ALL.iter().map(|s| s.dim()).sum();
        assert_eq!(total, 1224);
        assert_eq!(FeatureVector::dim_name(FeatureSet::Fd, 0), "fd_c1_d1_alpha");
        assert_eq!(FeatureVector::dim_name(FeatureSet::Fd, 415), "fd_c13_d4_chi2");
        assert_eq!(FeatureVector::dim_name(FeatureSet::Stlt, 799), "stlt_p50_lt15");
        assert_eq!(FeatureVector::dim_name(FeatureSet::Bicoh, 7), "bicoh_phase_kurt");
    }
}
