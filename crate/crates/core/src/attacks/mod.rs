//! Anti-forensic post-processing applied to audio before feature extraction.

pub mod mp3;
pub mod noise;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audio::AudioTrack;
use crate::error::{Error, Result};
use crate::features::{digest_json, FdMode};

pub use mp3::{align_to_reference, mp3_roundtrip, CodecConfig};
pub use noise::{add_gaussian_noise, NoiseStats};

/// Noise standard deviations and the SNR values they are reported with.
pub const NOISE_PRESETS: [(f64, f64); 3] = [(0.1, 2.0), (0.01, 22.0), (0.001, 42.0)];
pub const MP3_PRESETS: [u32; 2] = [128, 32];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSpec {
    GaussianNoise {
        noise_std: f64,
        /// Reported verbatim; not recomputed.
        nominal_snr_db: Option<f64>,
        seed: u64,
    },
    Mp3 {
        bitrate_kbps: u32,
    },
}

impl AttackSpec {
    pub fn noise(noise_std: f64, seed: u64) -> Self {
        let nominal_snr_db = NOISE_PRESETS.iter().find(|(s, _)| *s == noise_std).map(|&(_, snr)| snr);
        AttackSpec::GaussianNoise {
            noise_std,
            nominal_snr_db,
            seed,
        }
    }

    pub fn mp3(bitrate_kbps: u32) -> Self {
        AttackSpec::Mp3 { bitrate_kbps }
    }

    /// Short stable name, e.g. `noise_0.01` or `mp3_128`.
    pub fn label(&self) -> String {
        match self {
            AttackSpec::GaussianNoise { noise_std, .. } => format!("noise_{noise_std}"),
            AttackSpec::Mp3 { bitrate_kbps } => format!("mp3_{bitrate_kbps}"),
        }
    }

    pub fn is_preset(&self) -> bool {
        match self {
            AttackSpec::GaussianNoise { noise_std, .. } => NOISE_PRESETS.iter().any(|(s, _)| s == noise_std),
            AttackSpec::Mp3 { bitrate_kbps } => MP3_PRESETS.contains(bitrate_kbps),
        }
    }

    pub fn fingerprint(&self) -> String {
        digest_json("attack", self)
    }

    /// The five standard presets: three noise levels, then two bitrates.
    pub fn presets(seed: u64) -> Vec<AttackSpec> {
        let mut v: Vec<AttackSpec> = NOISE_PRESETS.iter().map(|&(s, _)| AttackSpec::noise(s, seed)).collect();
        v.extend(MP3_PRESETS.iter().map(|&b| AttackSpec::mp3(b)));
        v
    }
}

/// Result of attacking one track, with per-track diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Attacked {
    pub track: AudioTrack,
    pub info: BTreeMap<String, f64>,
}

/// An attack strategy registered by name.
pub trait Attack: Send + Sync {
    fn name(&self) -> &str;

    fn spec(&self) -> AttackSpec;

    /// FD mode the extractor must use on attacked audio, if forced.
    fn fd_mode(&self) -> Option<FdMode> {
        None
    }

    fn apply(&self, track: &AudioTrack) -> Result<Attacked>;
}

pub struct NoiseAttack {
    pub std: f64,
    pub nominal_snr_db: Option<f64>,
    pub seed: u64,
}

impl Attack for NoiseAttack {
    fn name(&self) -> &str {
        "gaussian_noise"
    }

    fn spec(&self) -> AttackSpec {
        AttackSpec::GaussianNoise {
            noise_std: self.std,
            nominal_snr_db: self.nominal_snr_db,
            seed: self.seed,
        }
    }

    /// Silence detection is meaningless once noise fills the gaps.
    fn fd_mode(&self) -> Option<FdMode> {
        Some(FdMode::WholeSignal)
    }

    fn apply(&self, track: &AudioTrack) -> Result<Attacked> {
        // Each track gets its own noise stream derived from its id.
        let stream = u64::from_str_radix(&digest_json("track", &track.source_id), 16).expect("hex digest");
        let (out, stats) = add_gaussian_noise(track, self.std, crate::derive_seed(self.seed, stream))?;
        let mut info = BTreeMap::from([
            ("noise_std".to_string(), self.std),
            ("clip_fraction".to_string(), stats.clip_fraction),
            ("measured_snr_db".to_string(), stats.measured_snr_db),
        ]);
        if let Some(snr) = self.nominal_snr_db {
            info.insert("nominal_snr_db".into(), snr);
        }
        Ok(Attacked { track: out, info })
    }
}

pub struct Mp3Attack {
    pub bitrate_kbps: u32,
    pub codec: CodecConfig,
}

impl Attack for Mp3Attack {
    fn name(&self) -> &str {
        "mp3"
    }

    fn spec(&self) -> AttackSpec {
        AttackSpec::mp3(self.bitrate_kbps)
    }

    fn apply(&self, track: &AudioTrack) -> Result<Attacked> {
        let (out, delay) = mp3_roundtrip(track, self.bitrate_kbps, &self.codec)?;
        Ok(Attacked {
            track: out,
            info: BTreeMap::from([
                ("bitrate_kbps".to_string(), self.bitrate_kbps as f64),
                ("codec_delay".to_string(), delay as f64),
            ]),
        })
    }
}

type AttackFactory = Box<dyn Fn(&AttackSpec, &CodecConfig) -> Option<Box<dyn Attack>> + Send + Sync>;

/// Attack constructors keyed by spec kind.
pub struct AttackRegistry {
    factories: BTreeMap<String, AttackFactory>,
    codec: CodecConfig,
}

impl AttackRegistry {
    pub fn new(codec: CodecConfig) -> Self {
        let mut reg = Self {
            factories: BTreeMap::new(),
            codec,
        };
        reg.register(
            "gaussian_noise",
            Box::new(|spec, _| match *spec {
                AttackSpec::GaussianNoise {
                    noise_std,
                    nominal_snr_db,
                    seed,
                } => Some(Box::new(NoiseAttack {
                    std: noise_std,
                    nominal_snr_db,
                    seed,
                }) as Box<dyn Attack>),
                _ => None,
            }),
        );
        reg.register(
            "mp3",
            Box::new(|spec, codec| match *spec {
                AttackSpec::Mp3 { bitrate_kbps } => Some(Box::new(Mp3Attack {
                    bitrate_kbps,
                    codec: codec.clone(),
                }) as Box<dyn Attack>),
                _ => None,
            }),
        );
        reg
    }

    pub fn register(&mut self, name: &str, factory: AttackFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn build(&self, spec: &AttackSpec) -> Result<Box<dyn Attack>> {
        let kind = match spec {
            AttackSpec::GaussianNoise { noise_std, .. } => {
                if !(*noise_std >= 0.0) {
                    return Err(Error::InvalidArgument(format!("noise std {noise_std} must be >= 0")));
                }
                "gaussian_noise"
            }
            AttackSpec::Mp3 { bitrate_kbps } => {
                if *bitrate_kbps == 0 {
                    return Err(Error::InvalidArgument("bitrate must be positive".into()));
                }
                "mp3"
            }
        };
        self.factories
            .get(kind)
            .and_then(|f| f(spec, &self.codec))
            .ok_or_else(|| Error::Unknown {
                kind: "attack",
                name: kind.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_table_is_verbatim() {
        let presets = AttackSpec::presets(0);
        let snrs: Vec<Option<f64>> = presets
            .iter()
            .filter_map(|p| match p {
                AttackSpec::GaussianNoise { nominal_snr_db, .. } => Some(*nominal_snr_db),
                _ => None,
            })
            .collect();
        assert_eq!(snrs, vec![Some(2.0), Some(22.0), Some(42.0)]);
        assert!(presets.iter().all(|p| p.is_preset()));
        assert!(!AttackSpec::noise(0.05, 0).is_preset());
        assert_eq!(AttackSpec::noise(0.05, 0), AttackSpec::GaussianNoise { noise_std: 0.05, nominal_snr_db: None, seed: 0 });
    }

    #[test]
    fn fingerprints_distinct() {
        let mut f: Vec<String> = AttackSpec::presets(0).iter().map(|p| p.fingerprint()).collect();
        f.sort();
        f.dedup();
        assert_eq!(f.len(), 5);
    }

    #[test]
    fn registry_builds_noise_with_whole_signal_fd() {
        let reg = AttackRegistry::new(CodecConfig::default());
        let a = reg.build(&AttackSpec::noise(0.01, 1)).unwrap();
        assert_eq!(a.fd_mode(), Some(FdMode::WholeSignal));
        assert_eq!(reg.build(&AttackSpec::mp3(128)).unwrap().fd_mode(), None);
        assert!(reg.build(&AttackSpec::noise(-1.0, 1)).is_err());
        assert_eq!(reg.names(), vec!["gaussian_noise", "mp3"]);
    }
}
