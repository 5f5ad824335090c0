//! On-disk feature cache.
//!
//! Entries live at `<root>/<set>/<extractor fingerprint>/<attack>/<track id>.bin`
//! where `<attack>` is `clean` or the attack fingerprint. Payload layout:
//!
//! ```text
//! 4 bytes  magic "SDFC"
//! u32 LE   format version
//! u8       feature set (0 fd, 1 stlt, 2 bicoh)
//! u32 LE   value count, then that many f32 LE values
//! u32 LE   flag count, then one byte per flag
//! 8 bytes  first 8 bytes of SHA-256 over everything above
//! ```

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::features::{FeatureSet, FeatureVector};

const MAGIC: &[u8; 4] = b"SDFC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub track_id: String,
    pub set: FeatureSet,
    pub extractor: String,
    pub attack: Option<String>,
}

pub struct FeatureCache {
    root: PathBuf,
}

fn set_code(set: FeatureSet) -> u8 {
    match set {
        FeatureSet::Fd => 0,
        FeatureSet::Stlt => 1,
        FeatureSet::Bicoh => 2,
    }
}

pub fn encode_entry(v: &FeatureVector) -> Vec<u8> {
    let mut buf = Vec::with_capacity(32 + 4 * v.values.len() + v.flags.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(set_code(v.set));
    buf.extend_from_slice(&(v.values.len() as u32).to_le_bytes());
    for &x in &v.values {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    buf.extend_from_slice(&(v.flags.len() as u32).to_le_bytes());
    buf.extend(v.flags.iter().map(|&f| f as u8));
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest[..8]);
    buf
}

pub fn decode_entry(bytes: &[u8], set: FeatureSet) -> Result<FeatureVector> {
    let bad = |m: &str| Error::Cache(m.to_string());
    if bytes.len() < 25 {
        return Err(bad("entry too short"));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 8);
    if &Sha256::digest(body)[..8] != sum {
        return Err(bad("checksum mismatch"));
    }
    if &body[..4] != MAGIC || u32::from_le_bytes(body[4..8].try_into().unwrap()) != VERSION {
        return Err(bad("bad magic or version"));
    }
    if body[8] != set_code(set) {
        return Err(bad("feature set mismatch"));
    }
    let n = u32::from_le_bytes(body[9..13].try_into().unwrap()) as usize;
    if n != set.dim() || body.len() < 13 + 4 * n + 4 {
        return Err(bad("payload length does not match the feature set"));
    }
    let values: Vec<f64> = body[13..13 + 4 * n]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let at = 13 + 4 * n;
    let nf = u32::from_le_bytes(body[at..at + 4].try_into().unwrap()) as usize;
    if body.len() != at + 4 + nf {
        return Err(bad("flag length mismatch"));
    }
    let flags = body[at + 4..].iter().map(|&b| b != 0).collect();
    FeatureVector::new(set, values, flags)
}

/// Rounds values through f32 so freshly extracted vectors match cached ones.
pub fn as_stored(v: FeatureVector) -> FeatureVector {
    FeatureVector {
        values: v.values.iter().map(|&x| x as f32 as f64).collect(),
        ..v
    }
}

impl FeatureCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root
            .join(key.set.name())
            .join(&key.extractor)
            .join(key.attack.as_deref().unwrap_or("clean"))
            .join(format!("{}.bin", key.track_id))
    }

    /// Cached vector, or `None` when absent. Corrupt entries are reported and
    /// treated as absent so they get re-extracted.
    pub fn get(&self, key: &CacheKey) -> Option<FeatureVector> {
        let path = self.path_for(key);
        let bytes = std::fs::read(&path).ok()?;
        match decode_entry(&bytes, key.set) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("discarding cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn put(&self, key: &CacheKey, v: &FeatureVector) -> Result<()> {
        if v.set != key.set {
            return Err(Error::Cache("vector set differs from key".into()));
        }
        atomic_write(&self.path_for(key), &encode_entry(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector() -> FeatureVector {
        FeatureVector::new(FeatureSet::Bicoh, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], vec![true, false]).unwrap()
    }

    fn key() -> CacheKey {
        CacheKey {
            track_id: "abc".into(),
            set: FeatureSet::Bicoh,
            extractor: "fp".into(),
            attack: None,
        }
    }

    #[test]
    fn roundtrip_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path());
        assert!(cache.get(&key()).is_none());
        cache.put(&key(), &vector()).unwrap();
        assert_eq!(cache.get(&key()).unwrap(), as_stored(vector()));
        let size = std::fs::metadata(cache.path_for(&key())).unwrap().len();
        assert_eq!(size, 4 + 4 + 1 + 4 + 8 * 4 + 4 + 2 + 8);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path());
        cache.put(&key(), &vector()).unwrap();
        let path = cache.path_for(&key());
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[20] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        assert!(cache.get(&key()).is_none());
    }

    #[test]
    fn attack_changes_location() {
        let cache = FeatureCache::new("/c");
        let mut k = key();
        let clean = cache.path_for(&k);
        k.attack = Some("f00".into());
        assert_ne!(cache.path_for(&k), clean);
    }
}
