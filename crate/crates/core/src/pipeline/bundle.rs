//! On-disk model bundle: branch and head checkpoints, normalizers, layout and
//! the run configuration that produced them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::atomic_write;
use super::config::RunConfig;
use crate::detector::{BranchDetector, FusedDetector, FusedModel, MajorityVote, Normalizer, NormalizerSet, SingleModel};
use crate::error::{Error, Result};
use crate::features::{digest_json, ExtractorRegistry, FeatureSet};
use crate::nn::checkpoint::{read_checkpoint, to_bytes};
use crate::nn::Network;

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchLayout {
    pub set: FeatureSet,
    pub input_dim: usize,
    pub embedding_dim: usize,
    pub checkpoint: String,
    pub normalizer: String,
    pub extractor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleLayout {
    pub version: u32,
    pub config_hash: String,
    pub branches: Vec<BranchLayout>,
    pub head: String,
    pub baselines: Vec<FeatureSet>,
}

pub struct Bundle {
    pub config: RunConfig,
    pub fused: FusedDetector,
    pub baselines: Vec<BranchDetector>,
}

impl Bundle {
    pub fn majority(&self) -> Option<MajorityVote> {
        (self.baselines.len() == 3).then(|| MajorityVote {
            members: self.baselines.clone(),
        })
    }

    pub fn layout(&self) -> BundleLayout {
        let registry = ExtractorRegistry::from_config(&self.config.extractors);
        BundleLayout {
            version: BUNDLE_VERSION,
            config_hash: self.config.hash(),
            branches: self
                .fused
                .model
                .branches
                .iter()
                .map(|(set, net)| BranchLayout {
                    set: *set,
                    input_dim: net.spec.input_dim(),
                    embedding_dim: net.spec.output_dim(),
                    checkpoint: format!("{set}_branch.ckpt"),
                    normalizer: format!("normalizers/{set}.json"),
                    extractor: registry.get(*set).map(|e| e.fingerprint()).unwrap_or_default(),
                })
                .collect(),
            head: "fusion_head.ckpt".into(),
            baselines: self.baselines.iter().map(|b| b.model.set).collect(),
        }
    }

    /// Digest of the layout and every parameter file.
    pub fn fingerprint(&self) -> Result<String> {
        let files = bundle_files(self)?;
        let digests: BTreeMap<&String, String> = files.iter().map(|(k, v)| (k, digest_json("file", v))).collect();
        Ok(digest_json("bundle", &digests))
    }
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn bundle_files(bundle: &Bundle) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    let seed = bundle.config.seed;
    files.insert("VERSION".to_string(), format!("{BUNDLE_VERSION}\n").into_bytes());
    files.insert("layout.json".to_string(), json_bytes(&bundle.layout())?);
    files.insert("run_config.json".to_string(), json_bytes(&bundle.config)?);
    for (set, net) in &bundle.fused.model.branches {
        files.insert(format!("{set}_branch.ckpt"), to_bytes(net, seed)?);
        files.insert(format!("normalizers/{set}.json"), json_bytes(bundle.fused.normalizers.get(*set)?)?);
    }
    files.insert("fusion_head.ckpt".to_string(), to_bytes(&bundle.fused.model.head, seed)?);
    for b in &bundle.baselines {
        let set = b.model.set;
        files.insert(format!("baselines/{set}.ckpt"), to_bytes(&b.model.net, seed)?);
        files.insert(format!("baselines/{set}.normalizer.json"), json_bytes(&b.normalizer)?);
    }
    Ok(files)
}

/// Writes the bundle into a scratch directory beside `dir`, then swaps it in.
pub fn save_bundle(dir: &Path, bundle: &Bundle) -> Result<()> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let scratch = tempfile::Builder::new().prefix(".bundle-").tempdir_in(&parent)?;
    for (name, bytes) in bundle_files(bundle)? {
        atomic_write(&scratch.path().join(name), &bytes)?;
    }
    let staged = scratch.keep();
    if dir.exists() {
        let old = parent.join(format!(".bundle-old-{}", std::process::id()));
        std::fs::rename(dir, &old)?;
        std::fs::rename(&staged, dir)?;
        std::fs::remove_dir_all(&old)?;
    } else {
        std::fs::rename(&staged, dir)?;
    }
    Ok(())
}

fn read_net(path: &Path) -> Result<Network> {
    let file = std::fs::File::open(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(read_checkpoint(std::io::BufReader::new(file))?.0)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let version = std::fs::read_to_string(dir.join("VERSION"))
        .map_err(|e| Error::Checkpoint(format!("{}: not a bundle ({e})", dir.display())))?;
    if version.trim() != BUNDLE_VERSION.to_string() {
        return Err(Error::Checkpoint(format!("unsupported bundle version {}", version.trim())));
    }
    let layout: BundleLayout = read_json(&dir.join("layout.json"))?;
    let config: RunConfig = read_json(&dir.join("run_config.json"))?;
    if config.hash() != layout.config_hash {
        return Err(Error::Checkpoint("run_config.json does not match layout.json".into()));
    }
    let mut branches = Vec::new();
    let mut normalizers = BTreeMap::new();
    for b in &layout.branches {
        let net = read_net(&dir.join(&b.checkpoint))?;
        if net.spec.input_dim() != b.input_dim || net.spec.output_dim() != b.embedding_dim {
            return Err(Error::Checkpoint(format!("{} branch shape disagrees with layout", b.set)));
        }
        let norm: Normalizer = read_json(&dir.join(&b.normalizer))?;
        if norm.set != b.set || norm.min.len() != b.input_dim {
            return Err(Error::Checkpoint(format!("{} normalizer disagrees with layout", b.set)));
        }
        normalizers.insert(b.set, norm);
        branches.push((b.set, net));
    }
    let head = read_net(&dir.join(&layout.head))?;
    let width: usize = branches.iter().map(|(_, n)| n.spec.output_dim()).sum();
    if head.spec.input_dim() != width {
        return Err(Error::Checkpoint(format!("head expects {} inputs, branches give {width}", head.spec.input_dim())));
    }
    let mut baselines = Vec::new();
    for &set in &layout.baselines {
        let net = read_net(&dir.join(format!("baselines/{set}.ckpt")))?;
        let normalizer: Normalizer = read_json(&dir.join(format!("baselines/{set}.normalizer.json")))?;
        baselines.push(BranchDetector {
            model: SingleModel { set, net },
            normalizer,
        });
    }
    Ok(Bundle {
        config,
        fused: FusedDetector {
            model: FusedModel { branches, head },
            normalizers: NormalizerSet { normalizers },
        },
        baselines,
    })
}
