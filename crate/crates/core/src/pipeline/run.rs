//! The extract / train / eval / correlate / predict stages.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Axis};
use serde::{Deserialize, Serialize};

use super::atomic_write;
use super::bundle::{load_bundle, save_bundle, Bundle};
use super::cache::FeatureCache;
use super::config::RunConfig;
use super::extract::{load_identified, tracks_to_table, ExtractSummary, Extraction, Extractor};
use super::manifest::{DatasetManifest, SampleRecord, Split};
use crate::attacks::{Attack, AttackRegistry, AttackSpec, CodecConfig};
use crate::detector::{train_fused, train_single_branch, Classifier, FeatureTable, Label, TrainLog};
use crate::error::{Error, Result};
use crate::eval::{feature_blocks, matrix_csv, pearson_matrix, CorrelationMatrix, EvalReport};
use crate::features::{digest_json, ExtractOptions, ExtractorRegistry, FeatureSet};

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Settings shared by every stage. `jobs` only affects speed.
pub struct Context {
    pub config: RunConfig,
    pub cache: Option<FeatureCache>,
    pub codec: CodecConfig,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogs {
    pub fused: TrainLog,
    pub baselines: BTreeMap<String, TrainLog>,
}

pub struct TrainOutcome {
    pub bundle_dir: PathBuf,
    pub logs: TrainLogs,
    pub summaries: Vec<ExtractSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub path: String,
    pub label: Label,
    pub p_fake: f64,
}

impl Context {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            cache: None,
            codec: CodecConfig::default(),
            jobs: 1,
        }
    }

    fn build_attack(&self, spec: Option<&AttackSpec>) -> Result<Option<Box<dyn Attack>>> {
        spec.map(|s| AttackRegistry::new(self.codec.clone()).build(s)).transpose()
    }

    fn extract_with(&self, config: &RunConfig, manifest: &DatasetManifest, records: &[&SampleRecord], attack: Option<&AttackSpec>) -> Result<Extraction> {
        let registry = ExtractorRegistry::from_config(&config.extractors);
        let attack = self.build_attack(attack)?;
        let extractor = Extractor {
            registry: &registry,
            sets: FeatureSet::ALL.to_vec(),
            cache: self.cache.as_ref(),
            attack: attack.as_deref(),
            sample_rate: config.sample_rate,
            failure_cap: config.failure_cap,
            jobs: self.jobs,
        };
        let out = extractor.run(manifest, records)?;
        log::info!(
            "{}: {} of {} tracks extracted ({} cached, {} failed, {} FD whole-signal)",
            out.summary.condition,
            out.summary.extracted,
            out.summary.total,
            out.summary.cache_hits,
            out.summary.failures.len(),
            out.summary.fd_whole_signal
        );
        Ok(out)
    }

    /// Extracts one split (or everything) under an optional attack.
    pub fn extract(&self, manifest: &DatasetManifest, split: Option<Split>, attack: Option<&AttackSpec>) -> Result<Extraction> {
        let records: Vec<&SampleRecord> = match split {
            Some(s) => manifest.split(s),
            None => manifest.records.iter().collect(),
        };
        self.extract_with(&self.config, manifest, &records, attack)
    }

    /// Trains the fused detector (and baselines) and writes `out/bundle`.
    pub fn train(&self, manifest: &DatasetManifest, out: &Path) -> Result<TrainOutcome> {
        self.config.validate()?;
        let manifest = match &self.config.dataset {
            Some(tag) => manifest.filter_dataset(tag)?,
            None => manifest.clone(),
        };
        let train = self.extract(&manifest, Some(Split::Train), None)?;
        let dev = self.extract(&manifest, Some(Split::Dev), None)?;
        let sets = FeatureSet::ALL;
        let (train_t, dev_t) = (train.table(&sets)?, dev.table(&sets)?);
        let tc = self.config.train_config();
        let mode = self.config.mode;
        let (fused, fused_log) = train_fused(&train_t, &dev_t, &tc, mode)?;
        let mut baselines = Vec::new();
        let mut baseline_logs = BTreeMap::new();
        if self.config.baselines {
            for set in sets {
                let (b, log) = train_single_branch(set, &train_t, &dev_t, &tc, mode)?;
                baselines.push(b);
                baseline_logs.insert(set.name().to_string(), log);
            }
        }
        let bundle = Bundle {
            config: self.config.clone(),
            fused,
            baselines,
        };
        std::fs::create_dir_all(out)?;
        let bundle_dir = out.join("bundle");
        save_bundle(&bundle_dir, &bundle)?;
        let logs = TrainLogs {
            fused: fused_log,
            baselines: baseline_logs,
        };
        write_json(&out.join("train_log.json"), &logs)?;
        let summaries = vec![train.summary, dev.summary];
        write_json(&out.join("extract_summary.json"), &summaries)?;
        Ok(TrainOutcome {
            bundle_dir,
            logs,
            summaries,
        })
    }

    /// Scores every model in the bundle under each condition (`None` = clean)
    /// and writes `out/reports/<condition>/<model>.json` plus ROC CSVs.
    pub fn evaluate(
        &self,
        manifest: &DatasetManifest,
        bundle_dir: &Path,
        split: Split,
        conditions: &[Option<AttackSpec>],
        out: &Path,
    ) -> Result<Vec<EvalReport>> {
        let bundle = load_bundle(bundle_dir)?;
        let bundle_fp = bundle.fingerprint()?;
        let records = manifest.split(split);
        if records.is_empty() {
            return Err(Error::InvalidArgument(format!("manifest has no {split} records")));
        }
        let mut models: Vec<Box<dyn Classifier>> = vec![Box::new(bundle.fused.clone())];
        for b in &bundle.baselines {
            models.push(Box::new(b.clone()));
        }
        if let Some(mv) = bundle.majority() {
            models.push(Box::new(mv));
        }
        let mut reports = Vec::new();
        let mut summary_csv = String::from("condition,model,auc,balanced_accuracy,n_real,n_fake\n");
        for condition in conditions {
            let ex = self.extract_with(&bundle.config, manifest, &records, condition.as_ref())?;
            let name = ex.summary.condition.clone();
            let table = ex.table(&FeatureSet::ALL)?;
            let dir = out.join("reports").join(&name);
            write_json(&dir.join("extract.json"), &ex.summary)?;
            for model in &models {
                let scores = model.scores(&table)?;
                let preds = model.predict(&table)?;
                let mut report = EvalReport::compute(model.name(), &scores, &preds, &table.labels)?;
                report.split = split.to_string();
                report.condition = name.clone();
                report.config_hash = bundle.config.hash();
                report.fingerprint = digest_json(
                    "eval",
                    &(&bundle_fp, &condition, model.name(), split.name(), manifest.to_csv()),
                );
                report.metadata.insert("bundle".into(), bundle_fp.clone());
                report.metadata.insert("failed_tracks".into(), ex.summary.failures.len().to_string());
                report.metadata.insert("fd_whole_signal".into(), ex.summary.fd_whole_signal.to_string());
                if let Some(spec) = condition {
                    report.metadata.insert("attack".into(), serde_json::to_string(spec)?);
                }
                write_json(&dir.join(format!("{}.json", model.name())), &report)?;
                atomic_write(&dir.join(format!("{}.roc.csv", model.name())), report.roc_csv().as_bytes())?;
                summary_csv.push_str(&format!(
                    "{},{},{:?},{:?},{},{}\n",
                    name, report.model, report.auc, report.balanced_accuracy, report.n_real, report.n_fake
                ));
                reports.push(report);
            }
        }
        atomic_write(&out.join("reports").join("summary.csv"), summary_csv.as_bytes())?;
        Ok(reports)
    }

    /// Pearson correlation across all 1224 feature dimensions of one split.
    pub fn correlate(&self, manifest: &DatasetManifest, split: Split, out: &Path) -> Result<CorrelationMatrix> {
        let ex = self.extract(manifest, Some(split), None)?;
        correlate_tracks(&ex.table(&FeatureSet::ALL)?, out)
    }

    /// Classifies individual files with a saved bundle.
    pub fn predict(&self, bundle_dir: &Path, paths: &[PathBuf]) -> Result<Vec<Prediction>> {
        let bundle = load_bundle(bundle_dir)?;
        let registry = ExtractorRegistry::from_config(&bundle.config.extractors);
        let mut tracks = Vec::new();
        for path in paths {
            let track = load_identified(path, bundle.config.sample_rate)?;
            let mut vectors = BTreeMap::new();
            for set in FeatureSet::ALL {
                let v = registry.get(set)?.extract(&track, &ExtractOptions::default())?;
                vectors.insert(set, super::cache::as_stored(v));
            }
            tracks.push(super::extract::ExtractedTrack {
                path: path.display().to_string(),
                track_id: track.source_id.clone(),
                label: Label::Real,
                dataset: String::new(),
                vectors,
            });
        }
        let table = tracks_to_table(&tracks, &FeatureSet::ALL)?;
        Ok(bundle
            .fused
            .predict_with_scores(&table)?
            .into_iter()
            .zip(&tracks)
            .map(|((label, p_fake), t)| Prediction {
                path: t.path.clone(),
                label,
                p_fake,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockSummary {
    blocks: Vec<String>,
    mean_abs: Vec<Vec<f64>>,
}

/// Writes `matrix.csv`, `abs.csv` and `blocks.json` under `out`.
pub fn correlate_tracks(table: &FeatureTable, out: &Path) -> Result<CorrelationMatrix> {
    let sets = FeatureSet::ALL;
    let parts: Vec<_> = sets.iter().map(|&s| table.get(s).map(|a| a.view())).collect::<Result<_>>()?;
    let x = concatenate(Axis(1), &parts).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let m = pearson_matrix(x.view(), feature_blocks(&sets))?;
    atomic_write(&out.join("matrix.csv"), matrix_csv(&m.r).as_bytes())?;
    atomic_write(&out.join("abs.csv"), matrix_csv(&m.absolute()).as_bytes())?;
    let n = m.blocks.len();
    let summary = BlockSummary {
        blocks: m.blocks.iter().map(|b| b.name.clone()).collect(),
        mean_abs: (0..n).map(|a| (0..n).map(|b| m.block_mean_abs(a, b)).collect()).collect(),
    };
    write_json(&out.join("blocks.json"), &summary)?;
    Ok(m)
}

/// Parses `noise:0.1`, `mp3:128` or `presets` (all five presets).
pub fn parse_attacks(text: &str, seed: u64) -> Result<Vec<AttackSpec>> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("presets") {
        return Ok(AttackSpec::presets(seed));
    }
    let (kind, value) = text
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("attack `{text}`: expected kind:value or `presets`")))?;
    let bad = || Error::InvalidArgument(format!("attack `{text}`: bad value"));
    match kind.to_ascii_lowercase().as_str() {
        "noise" => Ok(vec![AttackSpec::noise(value.parse::<f64>().map_err(|_| bad())?, seed)]),
        "mp3" => Ok(vec![AttackSpec::mp3(value.parse::<u32>().map_err(|_| bad())?)]),
        _ => Err(Error::Unknown {
            kind: "attack",
            name: kind.to_string(),
        }),
    }
}
