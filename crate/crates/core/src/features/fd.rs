//! First-digit (FD) features: generalized-Benford statistics of quantized MFCCs,
//! computed on silent frames by default.

use serde::{Deserialize, Serialize};

use super::benford::{self, STAT_COUNT};
use super::mfcc::{compute_mfcc, MfccConfig};
use crate::audio::{detect_silence, frame_signal, AudioTrack, FrameSequence, VadConfig, WindowKind};
use crate::error::Result;

pub const FD_DIM: usize = 416;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdMode {
    SilenceOnly,
    WholeSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub mfcc: MfccConfig,
    pub deltas: Vec<f64>,
    pub min_support: usize,
    /// Below this much detected silence the extractor uses the whole signal.
    pub min_silence_s: f64,
    pub vad: VadConfig,
    pub mode: FdMode,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            mfcc: MfccConfig::default(),
            deltas: vec![1.0, 2.0, 3.0, 4.0],
            min_support: benford::DEFAULT_MIN_SUPPORT,
            min_silence_s: 0.3,
            vad: VadConfig::default(),
            mode: FdMode::SilenceOnly,
        }
    }
}

impl FdConfig {
    pub fn dim(&self) -> usize {
        self.mfcc.n_coeffs * self.deltas.len() * STAT_COUNT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdFeatures {
    /// Layout: coefficient-major, then quantizer, then the eight statistics.
    pub values: Vec<f64>,
    /// One flag per (coefficient, quantizer) cell; set cells hold 0.0 sentinels.
    pub degenerate: Vec<bool>,
    pub mode_used: FdMode,
    /// Silence-only extraction was requested but too little silence was found.
    pub fell_back: bool,
}

/// FD statistics over an already-selected set of frames.
pub fn fd_from_frames(frames: &FrameSequence, config: &FdConfig) -> FdFeatures {
    let n_cells = config.mfcc.n_coeffs * config.deltas.len();
    let mut values = vec![0.0; config.dim()];
    let mut degenerate = vec![true; n_cells];
    if frames.num_frames() > 0 {
        let mfcc = compute_mfcc(frames, &config.mfcc);
        for c in 0..config.mfcc.n_coeffs {
            let column = mfcc.column(c).to_vec();
            for (di, &delta) in config.deltas.iter().enumerate() {
                let cell = c * config.deltas.len() + di;
                if let Ok(hist) = benford::first_digit_histogram(&column, delta, config.min_support) {
                    let fit = benford::fit_generalized_benford(&hist);
                    let stats = benford::divergence_stats(&hist, &fit);
                    values[cell * STAT_COUNT..(cell + 1) * STAT_COUNT].copy_from_slice(&stats);
                    degenerate[cell] = false;
                }
            }
        }
    }
    FdFeatures {
        values,
        degenerate,
        mode_used: FdMode::WholeSignal,
        fell_back: false,
    }
}

pub fn extract_fd_features(track: &AudioTrack, mode: FdMode, config: &FdConfig) -> Result<FdFeatures> {
    let frames = frame_signal(track, config.frame_ms, config.hop_ms, WindowKind::Hamming)?;
    match mode {
        FdMode::WholeSignal => Ok(fd_from_frames(&frames, config)),
        FdMode::SilenceOnly => {
            let mask = detect_silence(&frames, &config.vad);
            if mask.total_silence_s < config.min_silence_s {
                let mut out = fd_from_frames(&frames, config);
                out.fell_back = true;
                return Ok(out);
            }
            let silent = frames.select(|i| mask.silent[i]);
            let mut out = fd_from_frames(&silent, config);
            out.mode_used = FdMode::SilenceOnly;
            Ok(out)
        }
    }
}
