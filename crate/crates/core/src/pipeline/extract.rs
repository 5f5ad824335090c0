//! Manifest-driven feature extraction with caching and a failure budget.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cache::{as_stored, CacheKey, FeatureCache};
use super::manifest::{DatasetManifest, SampleRecord};
use crate::attacks::Attack;
use crate::audio::{load_track, AudioTrack};
use crate::detector::{FeatureTable, Label};
use crate::error::{Error, Result};
use crate::features::{ExtractOptions, ExtractorRegistry, FeatureSet, FeatureVector};

/// Content hash of a file, used as the track id.
pub fn track_id(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..12]))
}

/// Loads a track and names it by content so attack seeds ignore file paths.
pub fn load_identified(path: &Path, sample_rate: u32) -> Result<AudioTrack> {
    let id = track_id(path)?;
    let mut track = load_track(path, sample_rate)?;
    track.source_id = id;
    Ok(track)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedTrack {
    pub path: String,
    pub track_id: String,
    pub label: Label,
    pub dataset: String,
    pub vectors: BTreeMap<FeatureSet, FeatureVector>,
}

impl ExtractedTrack {
    /// FD fell back to (or was forced onto) the whole signal.
    pub fn fd_whole_signal(&self) -> Option<bool> {
        self.vectors.get(&FeatureSet::Fd).and_then(|v| v.flags.last().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub condition: String,
    pub total: usize,
    pub extracted: usize,
    /// Depends on cache state, so it is logged but not written out.
    #[serde(skip)]
    pub cache_hits: usize,
    pub failures: Vec<Failure>,
    pub fd_whole_signal: usize,
    pub fd_degenerate_cells: usize,
    pub bicoh_flat: usize,
    pub stlt_empty: usize,
}

pub struct Extraction {
    pub tracks: Vec<ExtractedTrack>,
    pub summary: ExtractSummary,
}

impl Extraction {
    pub fn table(&self, sets: &[FeatureSet]) -> Result<FeatureTable> {
        tracks_to_table(&self.tracks, sets)
    }
}

pub fn tracks_to_table(tracks: &[ExtractedTrack], sets: &[FeatureSet]) -> Result<FeatureTable> {
    let mut features = BTreeMap::new();
    for &set in sets {
        let mut m = Array2::zeros((tracks.len(), set.dim()));
        for (i, t) in tracks.iter().enumerate() {
            let v = t.vectors.get(&set).ok_or_else(|| Error::MissingFeatures {
                set: set.name().into(),
                track: t.path.clone(),
            })?;
            m.row_mut(i).iter_mut().zip(&v.values).for_each(|(d, s)| *d = *s);
        }
        features.insert(set, m);
    }
    FeatureTable::new(
        features,
        tracks.iter().map(|t| t.label).collect(),
        tracks.iter().map(|t| t.dataset.clone()).collect(),
    )
}

pub struct Extractor<'a> {
    pub registry: &'a ExtractorRegistry,
    pub sets: Vec<FeatureSet>,
    pub cache: Option<&'a FeatureCache>,
    pub attack: Option<&'a dyn Attack>,
    pub sample_rate: u32,
    pub failure_cap: f64,
    pub jobs: usize,
}

impl Extractor<'_> {
    pub fn condition(&self) -> String {
        self.attack.map_or_else(|| "clean".to_string(), |a| a.spec().label())
    }

    fn cache_tag(&self) -> Option<String> {
        self.attack.map(|a| format!("{}-{}", a.spec().label(), a.spec().fingerprint()))
    }

    fn one(&self, manifest: &DatasetManifest, record: &SampleRecord) -> Result<(ExtractedTrack, bool)> {
        let path = manifest.resolve(record);
        let id = track_id(&path)?;
        let attack_tag = self.cache_tag();
        let keys: Vec<(FeatureSet, CacheKey)> = self
            .sets
            .iter()
            .map(|&set| {
                Ok((
                    set,
                    CacheKey {
                        track_id: id.clone(),
                        set,
                        extractor: self.registry.get(set)?.fingerprint(),
                        attack: attack_tag.clone(),
                    },
                ))
            })
            .collect::<Result<_>>()?;
        let mut vectors = BTreeMap::new();
        if let Some(cache) = self.cache {
            for (set, key) in &keys {
                if let Some(v) = cache.get(key) {
                    vectors.insert(*set, v);
                }
            }
        }
        let all_cached = vectors.len() == keys.len();
        if !all_cached {
            let mut track = load_track(&path, self.sample_rate)?;
            track.source_id = id.clone();
            let opts = ExtractOptions {
                fd_mode_override: self.attack.and_then(|a| a.fd_mode()),
            };
            if let Some(attack) = self.attack {
                let out = attack.apply(&track)?;
                log::debug!("{}: {} {:?}", record.path, attack.spec().label(), out.info);
                track = out.track;
            }
            for (set, key) in &keys {
                if vectors.contains_key(set) {
                    continue;
                }
                // Round through the storage precision so fresh and cached
                // values are interchangeable.
                let v = as_stored(self.registry.get(*set)?.extract(&track, &opts)?);
                if let Some(cache) = self.cache {
                    cache.put(key, &v)?;
                }
                vectors.insert(*set, v);
            }
        }
        Ok((
            ExtractedTrack {
                path: record.path.clone(),
                track_id: id,
                label: record.label,
                dataset: record.dataset.clone(),
                vectors,
            },
            all_cached,
        ))
    }

    /// Extracts every record in order. Failed tracks are dropped and reported;
    /// more than `failure_cap` of them aborts the run.
    pub fn run(&self, manifest: &DatasetManifest, records: &[&SampleRecord]) -> Result<Extraction> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        let results: Vec<Result<(ExtractedTrack, bool)>> =
            pool.install(|| records.par_iter().map(|r| self.one(manifest, r)).collect());

        let mut summary = ExtractSummary {
            condition: self.condition(),
            total: records.len(),
            ..Default::default()
        };
        let mut tracks = Vec::with_capacity(records.len());
        for (record, result) in records.iter().zip(results) {
            match result {
                Ok((t, hit)) => {
                    summary.cache_hits += hit as usize;
                    if t.fd_whole_signal() == Some(true) {
                        summary.fd_whole_signal += 1;
                    }
                    if let Some(v) = t.vectors.get(&FeatureSet::Fd) {
                        let cells = v.flags.len().saturating_sub(2);
                        summary.fd_degenerate_cells += v.flags[..cells].iter().filter(|&&f| f).count();
                    }
                    if let Some(v) = t.vectors.get(&FeatureSet::Bicoh) {
                        summary.bicoh_flat += v.flags.iter().any(|&f| f) as usize;
                    }
                    if let Some(v) = t.vectors.get(&FeatureSet::Stlt) {
                        summary.stlt_empty += v.flags.first().copied().unwrap_or(false) as usize;
                    }
                    tracks.push(t);
                }
                Err(e) => {
                    log::warn!("{}: extraction failed: {e}", record.path);
                    summary.failures.push(Failure {
                        path: record.path.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        summary.extracted = tracks.len();
        let failed = summary.failures.len();
        if failed as f64 > self.failure_cap * records.len() as f64 {
            return Err(Error::InvalidArgument(format!(
                "{failed} of {} tracks failed extraction (cap {:.1}%); first: {} ({})",
                records.len(),
                100.0 * self.failure_cap,
                summary.failures[0].path,
                summary.failures[0].error
            )));
        }
        Ok(Extraction { tracks, summary })
    }
}
